// Thin client over the audit service. All state changes go through the
// documented POST endpoints; nothing is cached or recomputed locally.

import type { AssertionView, AuditSnapshot, DrawTask, InterpretationEntry } from "./types.js";

export class ApiError extends Error {
  readonly code: string;
  readonly status: number;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.code = code;
    this.status = status;
  }
}

async function parseError(res: Response): Promise<ApiError> {
  let code = "http_error";
  let message = `${res.status} ${res.statusText}`;
  try {
    const body = await res.json();
    if (body && typeof body.code === "string") {
      code = body.code;
      message = body.message ?? message;
    }
  } catch {
    // non-JSON error body: keep the generic message
  }
  return new ApiError(res.status, code, message);
}

export class AuditApi {
  constructor(private readonly baseUrl: string) {}

  private async get<T>(path: string): Promise<T> {
    const res = await fetch(this.baseUrl + path);
    if (!res.ok) throw await parseError(res);
    return (await res.json()) as T;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const res = await fetch(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body ?? {}),
    });
    if (!res.ok) throw await parseError(res);
    return (await res.json()) as T;
  }

  state(): Promise<AuditSnapshot> {
    return this.get("/audit/state");
  }

  assertions(): Promise<AssertionView[]> {
    return this.get("/audit/assertions");
  }

  draws(round: number): Promise<DrawTask[]> {
    return this.get(`/audit/round/${round}/draws`);
  }

  submitInterpretations(
    round: number,
    items: InterpretationEntry[],
  ): Promise<{ accepted: number }> {
    return this.post(`/audit/round/${round}/interpretations`, { items });
  }

  closeRound(round: number, escalate = false): Promise<AuditSnapshot> {
    return this.post(`/audit/round/${round}/close`, { escalate });
  }
}
