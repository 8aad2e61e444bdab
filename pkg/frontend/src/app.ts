/**
 * Dashboard controller: one login screen, then three panels (patient list,
 * symptom detail, report) driven entirely by /v1 responses. The app keeps
 * only view caches; every mutation re-renders from the server's reply and
 * re-fetches the list so ordering and colors stay server-owned.
 */

import { ApiError } from './api.js';
import { escapeHtml, todayIso } from './format.js';
import type {
  PatientDetailPayload,
  PatientListPayload,
  PatientRow,
  ReportPayload,
  SeverityLevel,
  SymptomKey,
} from './types.js';
import {
  renderDotGrid,
  renderPatientList,
  renderReportPanel,
  renderSeverityPicker,
} from './views.js';

export interface ClientLike {
  listPatients(day: string): Promise<PatientListPayload>;
  patientDetail(patientId: string): Promise<PatientDetailPayload>;
  getReport(patientId: string, day: string): Promise<ReportPayload>;
  setSeverity(
    patientId: string,
    day: string,
    key: SymptomKey,
    severity: SeverityLevel,
    author: string,
  ): Promise<ReportPayload>;
  markReviewed(patientId: string, day: string, reviewer: string): Promise<ReportPayload>;
  addNote(patientId: string, day: string, text: string, author: string): Promise<ReportPayload>;
}

export interface AppOptions {
  root: HTMLElement;
  clientFactory: (token: string, baseUrl: string) => ClientLike;
  today?: () => string;
}

export class DashboardApp {
  private client: ClientLike | null = null;
  private day: string;
  private rows: PatientRow[] = [];
  private detail: PatientDetailPayload | null = null;
  private report: ReportPayload | null = null;
  private selectedPatient: string | null = null;
  private selectedDot: string | null = null;
  private pickerKey: string | null = null;
  private author = 'clinician';

  constructor(private readonly options: AppOptions) {
    this.day = (options.today ?? todayIso)();
    this.bindEvents();
  }

  start(): void {
    this.renderLogin('');
  }

  private get root(): HTMLElement {
    return this.options.root;
  }

  private find<T extends Element>(selector: string): T | null {
    return this.root.querySelector<T>(selector);
  }

  // ---- rendering ----------------------------------------------------

  private renderLogin(message: string): void {
    this.root.innerHTML = `<form class="login-form">
  <h1>check-in dashboard</h1>
  <label>API base <input class="base-input" value="" placeholder="same origin" /></label>
  <label>your name <input class="author-input" value="clinician" /></label>
  <label>bearer token <input class="token-input" type="password" /></label>
  <button type="submit">sign in</button>
  <p class="login-error">${escapeHtml(message)}</p>
</form>`;
  }

  private renderShell(): void {
    this.root.innerHTML = `<header class="top-bar">
  <h1>check-in dashboard</h1>
  <label>day <input type="date" class="day-select" value="${this.day}" /></label>
  <button type="button" class="contrast-toggle">high contrast</button>
  <span class="status" role="status"></span>
</header>
<main class="panels">
  <section class="panel panel-list"><div class="list-body"></div></section>
  <section class="panel panel-detail"><div class="detail-body"></div></section>
  <section class="panel panel-report"><div class="report-body"></div></section>
</main>`;
    this.renderListPanel();
    this.renderDetailPanel();
    this.renderReportPanelBody();
  }

  private renderListPanel(): void {
    const body = this.find<HTMLElement>('.list-body');
    if (body) body.innerHTML = renderPatientList(this.rows, this.selectedPatient);
  }

  private renderDetailPanel(): void {
    const body = this.find<HTMLElement>('.detail-body');
    if (!body) return;
    if (!this.detail) {
      body.innerHTML = '<p class="empty">select a patient</p>';
      return;
    }
    const patient = this.detail.patient;
    const header = `<header class="detail-header">
  <h2>${escapeHtml(patient.display_name)}</h2>
  <p>${escapeHtml(patient.demographics)} &middot; ${escapeHtml(patient.surgery)}</p>
</header>`;
    const grid = this.report
      ? renderDotGrid(this.report.display, this.selectedDot)
      : `<p class="empty">no report for ${escapeHtml(this.day)}</p>`;
    const picker = this.pickerKey ? renderSeverityPicker(this.pickerKey) : '';
    body.innerHTML = header + grid + picker;
  }

  private renderReportPanelBody(): void {
    const body = this.find<HTMLElement>('.report-body');
    if (!body) return;
    body.innerHTML = this.report
      ? renderReportPanel(this.report)
      : '<p class="empty">no report loaded</p>';
  }

  private setStatus(text: string): void {
    const status = this.find<HTMLElement>('.status');
    if (status) status.textContent = text;
  }

  // ---- data flow ----------------------------------------------------

  private async refreshList(): Promise<void> {
    if (!this.client) return;
    const payload = await this.client.listPatients(this.day);
    this.rows = payload.patients;
    this.renderListPanel();
  }

  private async openPatient(patientId: string): Promise<void> {
    if (!this.client) return;
    this.selectedPatient = patientId;
    this.selectedDot = null;
    this.pickerKey = null;
    this.detail = await this.client.patientDetail(patientId);
    try {
      this.report = await this.client.getReport(patientId, this.day);
    } catch (error) {
      if (error instanceof ApiError && error.code === 'unknown_report') {
        this.report = null;
      } else {
        throw error;
      }
    }
    this.renderListPanel();
    this.renderDetailPanel();
    this.renderReportPanelBody();
    // Opening the report clears its unread flag server-side.
    await this.refreshList();
  }

  private navigateToLogs(logIds: number[]): void {
    for (const turn of this.root.querySelectorAll('.turn.linked')) {
      turn.classList.remove('linked');
    }
    let first: Element | null = null;
    for (const id of logIds) {
      const turn = this.find(`.turn[data-turn-id="${id}"]`);
      if (!turn) continue;
      turn.classList.add('linked');
      if (!first) first = turn;
    }
    first?.scrollIntoView?.({ block: 'nearest' });
  }

  private async chooseSeverity(key: SymptomKey, severity: SeverityLevel): Promise<void> {
    if (!this.client || !this.selectedPatient) return;
    this.pickerKey = null;
    this.report = await this.client.setSeverity(
      this.selectedPatient,
      this.day,
      key,
      severity,
      this.author,
    );
    this.renderDetailPanel();
    this.renderReportPanelBody();
    await this.refreshList(); // list dot recolors from the server's rank
  }

  private async markReviewed(): Promise<void> {
    if (!this.client || !this.selectedPatient) return;
    this.report = await this.client.markReviewed(
      this.selectedPatient,
      this.day,
      this.author,
    );
    this.renderReportPanelBody();
    await this.refreshList(); // reviewed rows sort to the tail
  }

  private async saveNote(text: string): Promise<void> {
    if (!this.client || !this.selectedPatient || !text.trim()) return;
    this.report = await this.client.addNote(
      this.selectedPatient,
      this.day,
      text,
      this.author,
    );
    this.renderReportPanelBody();
  }

  private async changeDay(day: string): Promise<void> {
    this.day = day;
    this.selectedPatient = null;
    this.selectedDot = null;
    this.pickerKey = null;
    this.detail = null;
    this.report = null;
    this.renderDetailPanel();
    this.renderReportPanelBody();
    await this.refreshList();
  }

  private async signIn(token: string, baseUrl: string, author: string): Promise<void> {
    const client = this.options.clientFactory(token, baseUrl);
    const payload = await client.listPatients(this.day); // validates the token
    this.client = client;
    this.author = author || 'clinician';
    this.rows = payload.patients;
    this.renderShell();
  }

  // ---- events -------------------------------------------------------

  private guard(work: Promise<void>): void {
    work.catch((error) => {
      const text =
        error instanceof ApiError
          ? `${error.code}: ${error.message}`
          : String(error);
      this.setStatus(text);
    });
  }

  private bindEvents(): void {
    this.root.addEventListener('submit', (event) => {
      const form = event.target as HTMLElement;
      if (form.matches('.login-form')) {
        event.preventDefault();
        const token = this.find<HTMLInputElement>('.token-input')?.value ?? '';
        const base = this.find<HTMLInputElement>('.base-input')?.value ?? '';
        const author = this.find<HTMLInputElement>('.author-input')?.value ?? '';
        this.signIn(token, base, author).catch((error) => {
          const message =
            error instanceof ApiError ? error.message : String(error);
          this.renderLogin(message);
        });
      } else if (form.matches('.note-form')) {
        event.preventDefault();
        const input = this.find<HTMLInputElement>('.note-input');
        this.guard(this.saveNote(input?.value ?? ''));
      }
    });

    this.root.addEventListener('change', (event) => {
      const target = event.target as HTMLElement;
      if (target.matches('.day-select')) {
        this.guard(this.changeDay((target as HTMLInputElement).value));
      }
    });

    this.root.addEventListener('click', (event) => {
      const target = event.target as HTMLElement;

      const row = target.closest<HTMLElement>('.patient-row');
      if (row?.dataset.patientId) {
        this.guard(this.openPatient(row.dataset.patientId));
        return;
      }

      const choice = target.closest<HTMLElement>('.severity-choice');
      if (choice?.dataset.key && choice.dataset.severity) {
        this.guard(
          this.chooseSeverity(
            choice.dataset.key as SymptomKey,
            choice.dataset.severity as SeverityLevel,
          ),
        );
        return;
      }
      if (target.closest('.severity-cancel')) {
        this.pickerKey = null;
        this.renderDetailPanel();
        return;
      }

      const dot = target.closest<HTMLElement>('.symptom-dot');
      if (dot?.dataset.key) {
        const key = dot.dataset.key;
        if (this.selectedDot === key && !this.pickerKey) {
          // Second click on the selected dot opens the severity picker.
          this.pickerKey = key;
          this.renderDetailPanel();
        } else {
          this.selectedDot = key;
          this.pickerKey = null;
          this.renderDetailPanel();
          const ids = (dot.dataset.logIds ?? '')
            .split(',')
            .filter(Boolean)
            .map(Number);
          this.navigateToLogs(ids);
        }
        return;
      }

      if (target.closest('.reviewed-toggle')) {
        this.guard(this.markReviewed());
        return;
      }

      if (target.closest('.contrast-toggle')) {
        this.root.classList.toggle('high-contrast');
      }
    });

    // mouseenter does not bubble; delegate hover through mouseover/out.
    this.root.addEventListener('mouseover', (event) => {
      const dot = (event.target as HTMLElement).closest<HTMLElement>('.symptom-dot');
      dot?.querySelector('.meter')?.removeAttribute('hidden');
    });
    this.root.addEventListener('mouseout', (event) => {
      const dot = (event.target as HTMLElement).closest<HTMLElement>('.symptom-dot');
      dot?.querySelector('.meter')?.setAttribute('hidden', '');
    });
  }
}
