// Typed client for the assistant API. The base URL is configurable at
// runtime via window.BITA_API_BASE (falls back to same-origin /api/v1).

import type {
  ChatResponse,
  Charter,
  Evidence,
  EvidenceDetail,
  Finding,
  Gap,
  Message,
  SessionDetail,
  SessionSummary,
  SystemDescriptionForm,
  TestPlanForm,
  ValidationDetail,
} from "./types.js";

export class ApiError extends Error {
  code: string;
  details: ValidationDetail[];

  constructor(code: string, message: string, details: ValidationDetail[] = []) {
    super(message);
    this.code = code;
    this.details = details;
  }
}

export class ConnectivityError extends Error {}

export function resolveBaseUrl(): string {
  const override = (globalThis as Record<string, unknown>)["BITA_API_BASE"];
  return typeof override === "string" && override ? override : "/api/v1";
}

export class ApiClient {
  readonly baseUrl: string;

  constructor(baseUrl: string = resolveBaseUrl()) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let response: Response;
    try {
      response = await fetch(this.baseUrl + path, {
        method,
        headers: body === undefined ? {} : { "content-type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ConnectivityError(`API unreachable: ${String(err)}`);
    }
    const payload = await response.json().catch(() => null);
    if (!response.ok) {
      const error = (payload as { error?: { code?: string; message?: string; details?: ValidationDetail[] } } | null)?.error;
      throw new ApiError(
        error?.code ?? "internal",
        error?.message ?? `HTTP ${response.status}`,
        error?.details ?? [],
      );
    }
    return payload as T;
  }

  health(): Promise<{ status: string }> {
    return this.request("GET", "/healthz");
  }

  async listSessions(): Promise<SessionSummary[]> {
    const body = await this.request<{ sessions: SessionSummary[] }>("GET", "/sessions");
    return body.sessions;
  }

  createSession(title: string): Promise<SessionSummary> {
    return this.request("POST", "/sessions", { title });
  }

  getSession(sessionId: string): Promise<SessionDetail> {
    return this.request("GET", `/sessions/${encodeURIComponent(sessionId)}`);
  }

  postMessage(sessionId: string, text: string, providerKind?: string): Promise<ChatResponse> {
    return this.request("POST", `/sessions/${encodeURIComponent(sessionId)}/messages`, {
      text,
      provider_kind: providerKind ?? null,
    });
  }

  putSystem(sessionId: string, form: SystemDescriptionForm): Promise<{ kind: string; version: number }> {
    return this.request("PUT", `/sessions/${encodeURIComponent(sessionId)}/system`, form);
  }

  putPlan(sessionId: string, form: TestPlanForm): Promise<{ kind: string; version: number }> {
    return this.request("PUT", `/sessions/${encodeURIComponent(sessionId)}/plan`, form);
  }

  runBiasDetect(sessionId: string, providerKind?: string): Promise<{ findings: Finding[]; evidence: Evidence[]; message: Message }> {
    return this.request("POST", `/sessions/${encodeURIComponent(sessionId)}/tasks/bias-detect`, {
      provider_kind: providerKind ?? null,
    });
  }

  runPlanCheck(sessionId: string, providerKind?: string): Promise<{ gaps: Gap[]; evidence: Evidence[]; message: Message }> {
    return this.request("POST", `/sessions/${encodeURIComponent(sessionId)}/tasks/plan-check`, {
      provider_kind: providerKind ?? null,
    });
  }

  runCharters(sessionId: string, count: number, providerKind?: string): Promise<{ charters: Charter[]; evidence: Evidence[]; message: Message }> {
    return this.request("POST", `/sessions/${encodeURIComponent(sessionId)}/tasks/charters`, {
      count,
      provider_kind: providerKind ?? null,
    });
  }

  replay(sessionId: string): Promise<{ transcript: string }> {
    return this.request("GET", `/sessions/${encodeURIComponent(sessionId)}/replay`);
  }

  getEvidence(chunkId: string): Promise<EvidenceDetail> {
    return this.request("GET", `/evidence/${encodeURIComponent(chunkId)}`);
  }
}
