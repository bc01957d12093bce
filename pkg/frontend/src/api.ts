/**
 * The gateway client: one fetch per user action, no retries, no caching.
 * Failures become one of two typed errors so the screens can tell "the
 * server said no" apart from "nobody answered".
 */

import type {
  Certificate,
  GatewayErrorBody,
  RegisterTarget,
  StudentDetail,
  StudentListItem,
  Verification,
} from './types.js';

/** A reply from the gateway with a non-2xx status and an error body. */
export class GatewayFault extends Error {
  readonly status: number;
  readonly code: string;
  readonly detail: unknown;

  constructor(status: number, body: GatewayErrorBody) {
    super(body.message);
    this.status = status;
    this.code = body.code;
    this.detail = body.detail;
  }
}

/** No reply at all: connection refused, DNS, timeout, cut mid-body. */
export class GatewayDown extends Error {
  constructor(cause: string) {
    super(`gateway unreachable: ${cause}`);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class GatewayClient {
  private readonly base: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl: string, fetchImpl: FetchLike = (url, init) => fetch(url, init)) {
    this.base = baseUrl.replace(/\/+$/, '');
    this.fetchImpl = fetchImpl;
  }

  listStudents(): Promise<StudentListItem[]> {
    return this.request('GET', '/api/students');
  }

  getStudent(studentId: string): Promise<StudentDetail> {
    return this.request('GET', `/api/students/${encodeURIComponent(studentId)}`);
  }

  register(target: RegisterTarget, studentId: string): Promise<Record<string, unknown>> {
    return this.request('POST', `/api/register/${target}/${encodeURIComponent(studentId)}`);
  }

  verify(studentId: string): Promise<Verification> {
    return this.request('POST', `/api/verify/${encodeURIComponent(studentId)}`);
  }

  issueCertificate(studentId: string, programmeId: string): Promise<Certificate> {
    return this.request('POST', '/api/certificates', {
      student_id: studentId,
      programme_id: programmeId,
    });
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { 'Content-Type': 'application/json' };
      init.body = JSON.stringify(body);
    }
    let response: Response;
    try {
      response = await this.fetchImpl(this.base + path, init);
    } catch (error) {
      throw new GatewayDown(String(error));
    }
    if (response.ok) {
      try {
        return (await response.json()) as T;
      } catch (error) {
        throw new GatewayDown(`bad JSON in reply: ${String(error)}`);
      }
    }
    let parsed: GatewayErrorBody;
    try {
      parsed = (await response.json()) as GatewayErrorBody;
    } catch {
      parsed = { code: `HTTP ${response.status}`, message: response.statusText, detail: null };
    }
    throw new GatewayFault(response.status, parsed);
  }
}
