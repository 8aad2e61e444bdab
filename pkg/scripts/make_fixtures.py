"""Regenerate the bundled day-one fixtures from the canonical conversation.

Writes day1_transcript.txt, day1_conversation.txt, day1_analysis.txt, and
demo_patients.json into src/rpm_checkin/fixtures/. Run from the repo root
after editing the conversation or the demo roster.
"""
from __future__ import annotations

import json
from pathlib import Path

from rpm_checkin.gateway import RECORD_SEPARATOR
from rpm_checkin.protocol import KEY_ORDER, QuestionKey
from rpm_checkin.wire import DELIMITER, Checklist, CoverageStatus

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "rpm_checkin" / "fixtures"

ND = CoverageStatus.NOT_DISCUSSED
IND = CoverageStatus.IN_DISCUSSION
D = CoverageStatus.DISCUSSED

K = QuestionKey

# (patient utterance, checklist deltas applied cumulatively, agent reply)
EXCHANGES: list[tuple[str, dict[QuestionKey, CoverageStatus], str]] = [
    (
        "hi",
        {},
        "Hello, this is the RECOVER research study chatbot assistant."
        " Are you ready to start today's questions?",
    ),
    (
        "yes",
        {},
        "Great! How have you been feeling today? Any specific discomforts?",
    ),
    (
        "I'm feeling a sharp pain in my stomach and I'm not able to eat because of the pain",
        {K.PAIN: IND, K.EATING: IND},
        "I'm sorry to hear that you are in pain. Does it increase sharply or becomes unbearable?",
    ),
    (
        "yes",
        {},
        "Could you tell me more about when the pain started?",
    ),
    (
        "it started around 12 hours ago",
        {},
        "Have you taken more pain medication prescribed by your surgeon since the pain started?",
    ),
    (
        "I'm taking Tylenol #3",
        {},
        "On a scale of 1 to 10, with 10 being the worst possible, how would you rate your pain?",
    ),
    (
        "8",
        {K.PAIN: D},
        "On a scale of 1 to 10, with 10 being the most difficult, how bad are you able to tolerate food?",
    ),
    (
        "8",
        {K.EATING: D, K.BREATHING: IND},
        "Are you having difficulty breathing?",
    ),
    (
        "nope",
        {K.BREATHING: D, K.FEVER: IND},
        "Are you having a fever of over 100 degrees or chills?",
    ),
    (
        "no",
        {K.FEVER: D, K.STOOLS: IND},
        "Have you had black, tar-like stools?",
    ),
    (
        "no",
        {K.STOOLS: D, K.DRAINAGE: IND},
        "Are you having any wound drainage problems, such as redness around your wound,"
        " bleeding from the wound, pus, or an opening at the incision site?",
    ),
    (
        "no",
        {K.DRAINAGE: D, K.ACTIVITY: IND},
        "Do you have a decrease in your ability to perform your daily activities,"
        " such as not being able to walk to the bathroom?",
    ),
    (
        "no",
        {K.ACTIVITY: D, K.CONSCIOUS: IND},
        "Have you had a decrease in your level of consciousness?",
    ),
    (
        "no",
        {K.CONSCIOUS: D, K.CONSTIPATION: IND},
        "Have you had persistent constipation, nausea, or vomiting?",
    ),
    (
        "yes I have been constipated for 24 hours",
        {},
        "On a scale of 1 to 10, with 10 being most significant, how would you rate"
        " your level of constipation?",
    ),
    (
        "maybe 6",
        {K.CONSTIPATION: D, K.DIARRHEA: IND},
        "Have you had persistent diarrhea?",
    ),
    (
        "no",
        {K.DIARRHEA: D, K.SWELLING: IND},
        "Do you have unexplained or new pain or swelling in one or both of your legs?",
    ),
    (
        "no",
        {K.SWELLING: D, K.MOOD: IND},
        "Have you been feeling down or depressed?",
    ),
    (
        "no I'm feeling OK",
        {K.MOOD: D, K.MISC: IND},
        "Is there anything else you'd like to comment on that I haven't asked about?",
    ),
    (
        "that's all thank you bye",
        {K.MISC: D},
        "Thank you for your time to provide information today. We'll talk again tomorrow.",
    ),
]

EXTRACTION = {
    "breathing": {"logs": [16, 17], "state": 1, "scale": 0},
    "fever": {"logs": [18, 19], "state": 1},
    "stools": {"logs": [20, 21], "state": 1},
    "pain": {"logs": [5, 6, 7, 8, 9, 10, 11, 12, 13], "state": 2, "scale": 8},
    "drainage": {"logs": [22, 23], "state": 1},
    "activity": {"logs": [24, 25], "state": 1},
    "conscious": {"logs": [26, 27], "state": 1, "scale": 0},
    "constipation": {"logs": [28, 29, 30, 31], "state": 2, "scale": 6},
    "diarrhea": {"logs": [32, 33], "state": 1},
    "eating": {"logs": [5, 14, 15], "state": 2, "scale": 8},
    "swelling": {"logs": [34, 35], "state": 1},
    "mood": {"logs": [36, 37], "state": 1},
    "misc": {"logs": [38, 39], "state": 1},
}

SUMMARY = {
    "result": [
        {
            "category": "Summary",
            "conversation_log_ids": "[5, 13, 15, 29, 31]",
            "content": (
                "Patient reports sharp stomach pain rated 8 out of 10 that began"
                " about 12 hours ago and is managed with Tylenol #3, difficulty"
                " tolerating food rated 8 out of 10, and constipation for the"
                " past 24 hours rated 6 out of 10."
            ),
        }
    ]
}

DEMO_PATIENTS = [
    ("p001", "Avery Quinlan", "1958-03-15", "67F", "partial colectomy, 9 days post-op"),
    ("p002", "Marcus Oyelaran", "1949-11-02", "76M", "gastrectomy, 12 days post-op"),
    ("p003", "Ingrid Solvang", "1962-07-28", "64F", "low anterior resection, 6 days post-op"),
    ("p004", "Tobias Ferreira", "1955-01-19", "71M", "Whipple procedure, 15 days post-op"),
    ("p005", "Priya Venkataraman", "1968-09-05", "57F", "sigmoid colectomy, 8 days post-op"),
    ("p006", "Desmond Okafor", "1944-04-22", "82M", "right hemicolectomy, 11 days post-op"),
    ("p007", "Margit Keszthelyi", "1951-12-09", "74F", "esophagectomy, 18 days post-op"),
    ("p008", "Rafael Zubizarreta", "1959-06-30", "67M", "total colectomy, 10 days post-op"),
    ("p009", "Noor Alhakim", "1973-02-14", "53F", "gastrectomy, 7 days post-op"),
    ("p010", "Stellan Bergqvist", "1947-08-03", "78M", "liver resection, 13 days post-op"),
    ("p011", "Camille Roussineau", "1965-10-26", "60F", "proctectomy, 9 days post-op"),
    ("p012", "Yusuf Demirkan", "1953-05-11", "73M", "pancreatectomy, 16 days post-op"),
    ("p013", "Helena Vandermeer", "1960-03-08", "66F", "left hemicolectomy, 5 days post-op"),
    ("p014", "Callum Thackeray", "1942-09-17", "83M", "colostomy revision, 14 days post-op"),
    ("p015", "Rosalind Achterberg", "1957-07-01", "69F", "small bowel resection, 8 days post-op"),
    ("p016", "Emeka Nwachukwu", "1969-11-23", "56M", "anterior resection, 10 days post-op"),
    ("p017", "Sigrun Thorvaldsen", "1950-02-27", "76F", "gastrectomy, 20 days post-op"),
    ("p018", "Laurent Beausoleil", "1963-04-12", "63M", "colectomy, 6 days post-op"),
    ("p019", "Mireille Fontenot", "1971-06-18", "55F", "rectosigmoid resection, 12 days post-op"),
    ("p020", "Oskar Lindqvist", "1946-01-05", "80M", "Whipple procedure, 17 days post-op"),
]


def completion_for(checklist: Checklist, reply: str) -> str:
    lines = [f"{key.value}: {status.value}" for key, status in checklist.items()]
    lines.append(DELIMITER)
    lines.append(reply)
    return "\n".join(lines)


def build() -> tuple[list[tuple[str, str]], list[str]]:
    statuses = {key: ND for key in KEY_ORDER}
    pairs: list[tuple[str, str]] = []
    for patient_text, deltas, reply in EXCHANGES:
        statuses.update(deltas)
        pairs.append((patient_text, completion_for(Checklist(statuses), reply)))
    analysis = [
        json.dumps(EXTRACTION, indent=1),
        json.dumps(SUMMARY, indent=1),
    ]
    return pairs, analysis


def main() -> None:
    pairs, analysis = build()

    transcript_parts: list[str] = []
    for patient_text, raw in pairs:
        transcript_parts.append(f"patient: {patient_text}")
        transcript_parts.append("agent-raw:")
        transcript_parts.append(raw)
        transcript_parts.append(RECORD_SEPARATOR)
    (FIXTURES / "day1_transcript.txt").write_text(
        "\n".join(transcript_parts) + "\n", encoding="utf-8"
    )

    conversation_parts: list[str] = []
    for _, raw in pairs:
        conversation_parts.append(raw)
        conversation_parts.append(RECORD_SEPARATOR)
    (FIXTURES / "day1_conversation.txt").write_text(
        "\n".join(conversation_parts) + "\n", encoding="utf-8"
    )

    analysis_parts: list[str] = []
    for record in analysis:
        analysis_parts.append(record)
        analysis_parts.append(RECORD_SEPARATOR)
    (FIXTURES / "day1_analysis.txt").write_text(
        "\n".join(analysis_parts) + "\n", encoding="utf-8"
    )

    roster = [
        {
            "patient_id": pid,
            "display_name": name,
            "date_of_birth": dob,
            "demographics": demo,
            "surgery": surgery,
            "enrolled_on": "2026-08-01",
            "channel_token": f"channel-{pid}",
        }
        for pid, name, dob, demo, surgery in DEMO_PATIENTS
    ]
    (FIXTURES / "demo_patients.json").write_text(
        json.dumps(roster, indent=2) + "\n", encoding="utf-8"
    )
    print(f"wrote fixtures to {FIXTURES}")


if __name__ == "__main__":
    main()
