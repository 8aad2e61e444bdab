/**
 * Pure render functions: API payloads in, HTML strings out. Every color
 * class and flag comes straight off the payload fields; nothing clinical
 * is computed or rewritten here.
 */

import { clockTime, escapeHtml } from './format.js';
import type {
  DisplaySlot,
  NoteEntry,
  PatientRow,
  ReportPayload,
  SummaryEntry,
  TurnEntry,
} from './types.js';

export const SEVERITY_CHOICES: ReadonlyArray<{ level: string; label: string }> = [
  { level: 'most_severe', label: 'most severe' },
  { level: 'moderate', label: 'moderate' },
  { level: 'least_severe', label: 'least severe' },
  { level: 'not_applicable', label: 'not applicable' },
];

export function renderPatientRow(row: PatientRow, selected: boolean): string {
  const nameClass = row.unread ? 'name unread' : 'name';
  const check = row.reviewed ? '<span class="check" title="reviewed">&#10003;</span>' : '';
  const flag = row.needs_review ? '<span class="needs-review">needs review</span>' : '';
  return `<li class="patient-row${selected ? ' selected' : ''}" data-patient-id="${escapeHtml(row.patient_id)}">
  <span class="dot dot-${escapeHtml(row.dot_color)}"></span>
  <span class="${nameClass}">${escapeHtml(row.display_name)}</span>
  ${check}${flag}
  <span class="demographics">${escapeHtml(row.demographics)} &middot; ${escapeHtml(row.surgery)}</span>
</li>`;
}

export function renderPatientList(rows: PatientRow[], selectedId: string | null): string {
  if (rows.length === 0) return '<p class="empty">no patients enrolled</p>';
  const items = rows
    .map((row) => renderPatientRow(row, row.patient_id === selectedId))
    .join('\n');
  return `<ul class="patient-list">\n${items}\n</ul>`;
}

function renderDot(key: string, slot: DisplaySlot, selected: boolean): string {
  // Meter markup exists only when the API sent a scale; shown on hover.
  const meter = slot.scale === null
    ? ''
    : `<span class="meter" hidden>
    <span class="meter-bar" style="width:${slot.scale * 10}%"></span>
    <span class="meter-value">${slot.scale}/10</span>
  </span>`;
  return `<button class="symptom-dot${selected ? ' selected' : ''}" data-key="${escapeHtml(key)}" data-log-ids="${slot.log_ids.join(',')}">
  <span class="dot dot-${escapeHtml(slot.color)}"></span>
  <span class="key-label">${escapeHtml(key)}</span>
  ${meter}
</button>`;
}

export function renderDotGrid(
  display: Record<string, DisplaySlot>,
  selectedKey: string | null,
): string {
  const dots = Object.entries(display)
    .map(([key, slot]) => renderDot(key, slot, key === selectedKey))
    .join('\n');
  return `<div class="dot-grid">\n${dots}\n</div>`;
}

export function renderSeverityPicker(key: string): string {
  const options = SEVERITY_CHOICES.map(
    ({ level, label }) =>
      `<button class="severity-choice" data-key="${escapeHtml(key)}" data-severity="${level}">${label}</button>`,
  ).join('\n');
  return `<div class="severity-picker" data-key="${escapeHtml(key)}">
  <p>set severity for <strong>${escapeHtml(key)}</strong>:</p>
  ${options}
  <button class="severity-cancel">cancel</button>
</div>`;
}

function renderSummaries(entries: SummaryEntry[]): string {
  if (entries.length === 0) return '<p class="empty">nothing reported</p>';
  const items = entries
    .map(
      (entry) =>
        `<li data-log-ids="${entry.log_ids.join(',')}">${escapeHtml(entry.content)}</li>`,
    )
    .join('\n');
  return `<ul class="summaries">\n${items}\n</ul>`;
}

function renderNotes(notes: NoteEntry[]): string {
  const items = notes
    .map(
      (note) =>
        `<li><span class="note-author">${escapeHtml(note.author)}</span> ${escapeHtml(note.text)}</li>`,
    )
    .join('\n');
  return `<ul class="notes">${items}</ul>
<form class="note-form">
  <input class="note-input" type="text" placeholder="add a note" />
  <button class="note-save" type="submit">save</button>
</form>`;
}

function renderTurn(turn: TurnEntry): string {
  return `<li class="turn turn-${escapeHtml(turn.role)}" data-turn-id="${turn.turn_id}">
  <span class="turn-at">${escapeHtml(clockTime(turn.at))}</span>
  <span class="turn-role">${escapeHtml(turn.role)}</span>
  <span class="turn-text">${escapeHtml(turn.text)}</span>
</li>`;
}

export function renderReportPanel(report: ReportPayload): string {
  const reviewed = report.review.reviewed;
  const reviewLabel = reviewed
    ? `reviewed by ${escapeHtml(report.review.reviewer ?? '')}`
    : 'mark reviewed';
  const degraded = report.needs_review
    ? '<p class="degraded-banner">analysis incomplete; review the raw log</p>'
    : '';
  const turns = report.turns.map(renderTurn).join('\n');
  return `<section class="report">
  <header class="report-header">
    <span class="dot dot-${escapeHtml(report.dot_color)}"></span>
    <span class="report-day">${escapeHtml(report.service_day)}</span>
    <button class="reviewed-toggle"${reviewed ? ' disabled' : ''}>${reviewLabel}</button>
  </header>
  ${degraded}
  <h3>summary</h3>
  ${renderSummaries(report.summaries)}
  <h3>notes</h3>
  ${renderNotes(report.notes)}
  <h3>conversation</h3>
  <ol class="turn-log">
${turns}
  </ol>
</section>`;
}
