/**
 * /v1 API client. Every request carries the clinician bearer token; error
 * responses use the {"error": {code, message}} envelope and surface as
 * ApiError so callers can branch on the code.
 */

import type {
  PatientDetailPayload,
  PatientListPayload,
  ReportPayload,
  SeverityLevel,
  SymptomKey,
} from './types.js';

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class DashboardClient {
  private readonly fetchImpl: FetchLike;

  constructor(
    private readonly token: string,
    private readonly baseUrl: string = '',
    fetchImpl?: FetchLike,
  ) {
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const init: RequestInit = {
      method,
      headers: {
        Authorization: `Bearer ${this.token}`,
        ...(body === undefined ? {} : { 'Content-Type': 'application/json' }),
      },
    };
    if (body !== undefined) init.body = JSON.stringify(body);
    const response = await this.fetchImpl(this.baseUrl + path, init);
    const payload = await response.json().catch(() => null);
    if (!response.ok) {
      const envelope = payload as { error?: { code?: string; message?: string } } | null;
      throw new ApiError(
        response.status,
        envelope?.error?.code ?? 'unknown_error',
        envelope?.error?.message ?? `request failed with ${response.status}`,
      );
    }
    return payload as T;
  }

  listPatients(day: string): Promise<PatientListPayload> {
    return this.request('GET', `/v1/patients?day=${encodeURIComponent(day)}`);
  }

  patientDetail(patientId: string): Promise<PatientDetailPayload> {
    return this.request('GET', `/v1/patients/${encodeURIComponent(patientId)}`);
  }

  getReport(patientId: string, day: string): Promise<ReportPayload> {
    return this.request('GET', `/v1/reports/${encodeURIComponent(patientId)}/${day}`);
  }

  setSeverity(
    patientId: string,
    day: string,
    key: SymptomKey,
    severity: SeverityLevel,
    author: string,
  ): Promise<ReportPayload> {
    return this.request(
      'PATCH',
      `/v1/reports/${encodeURIComponent(patientId)}/${day}/symptoms/${key}`,
      { severity, author },
    );
  }

  markReviewed(patientId: string, day: string, reviewer: string): Promise<ReportPayload> {
    return this.request(
      'POST',
      `/v1/reports/${encodeURIComponent(patientId)}/${day}/reviewed`,
      { reviewer },
    );
  }

  addNote(patientId: string, day: string, text: string, author: string): Promise<ReportPayload> {
    return this.request(
      'POST',
      `/v1/reports/${encodeURIComponent(patientId)}/${day}/notes`,
      { text, author },
    );
  }
}
