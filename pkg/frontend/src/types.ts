/**
 * Wire types for the /v1 API. Field names and casing match the JSON
 * payloads exactly; the UI never reshapes or recomputes them.
 */

export type SymptomKey =
  | 'breathing'
  | 'fever'
  | 'stools'
  | 'pain'
  | 'drainage'
  | 'activity'
  | 'conscious'
  | 'constipation'
  | 'diarrhea'
  | 'eating'
  | 'swelling'
  | 'mood'
  | 'misc';

export type SeverityLevel =
  | 'most_severe'
  | 'moderate'
  | 'least_severe'
  | 'not_applicable';

/** One symptom slot of the report's display grid. Color is authoritative. */
export interface DisplaySlot {
  state: 0 | 1 | 2;
  color: string;
  severity: string | null;
  scale: number | null;
  log_ids: number[];
}

export interface PatientRow {
  patient_id: string;
  display_name: string;
  demographics: string;
  surgery: string;
  rank: number;
  dot_color: string;
  has_report: boolean;
  needs_review: boolean;
  reviewed: boolean;
  unread: boolean;
  report_generated_at: string | null;
}

export interface PatientListPayload {
  day: string;
  patients: PatientRow[];
}

export interface PatientDetailPayload {
  patient: {
    patient_id: string;
    display_name: string;
    demographics: string;
    surgery: string;
    enrolled_on: string;
  };
  report_days: string[];
}

export interface SummaryEntry {
  category: string;
  log_ids: number[];
  content: string;
}

export interface NoteEntry {
  author: string;
  at: string;
  text: string;
}

export interface ReviewState {
  unread: boolean;
  reviewed: boolean;
  reviewer: string | null;
  reviewed_at: string | null;
}

export interface TurnEntry {
  turn_id: number;
  role: string;
  text: string;
  at: string;
}

export interface ReportPayload {
  patient_id: string;
  service_day: string;
  rank: number;
  dot_color: string;
  needs_review: boolean;
  display: Record<string, DisplaySlot>;
  summaries: SummaryEntry[];
  notes: NoteEntry[];
  review: ReviewState;
  overrides: unknown[];
  rank_pin: unknown | null;
  turns: TurnEntry[];
  generated_at: string;
}

export interface ErrorEnvelope {
  error: { code: string; message: string };
}
