// Thin typed client for the attribution service. Every error response is
// surfaced as an ApiError carrying the service's {code, message, stage} body
// so views can show stage-tagged toasts.

import type {
  ApiErrorBody,
  EvalJobPayload,
  HistoryPayload,
  IngestSummary,
  MetricReport,
  TurnResponse,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;
  readonly stage?: string;
  readonly details?: Record<string, unknown>;

  constructor(status: number, body: ApiErrorBody) {
    super(body.message);
    this.name = "ApiError";
    this.status = status;
    this.code = body.code;
    this.stage = body.stage;
    this.details = body.details;
  }

  static async fromResponse(response: Response): Promise<ApiError> {
    let body: ApiErrorBody = {
      code: `http_${response.status}`,
      message: response.statusText || `request failed with ${response.status}`,
    };
    try {
      const parsed = await response.json();
      if (parsed && typeof parsed === "object" && parsed.error) {
        body = parsed.error as ApiErrorBody;
      }
    } catch {
      // non-JSON error body; keep the status fallback
    }
    return new ApiError(response.status, body);
  }
}

export interface TurnBody {
  query?: string;
  record?: Record<string, unknown>;
}

export interface EvalBody {
  test_set?: unknown[];
  test_set_ref?: string;
  n_generations?: number;
  pass_rank?: number;
  pass_k?: number;
}

export interface IngestDocument {
  id?: string;
  title?: string;
  source?: string;
  text?: string;
  record?: Record<string, unknown>;
}

export class ApiClient {
  private fetchImpl: FetchLike;
  private base: string;
  private token: string | null;

  constructor(options: { fetchImpl?: FetchLike; base?: string; token?: string } = {}) {
    this.fetchImpl = options.fetchImpl ?? ((input, init) => fetch(input, init));
    this.base = options.base ?? "";
    this.token = options.token ?? null;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    const init: RequestInit = { method, headers };
    if (body !== undefined) init.body = JSON.stringify(body);
    const response = await this.fetchImpl(this.base + path, init);
    if (!response.ok) throw await ApiError.fromResponse(response);
    return (await response.json()) as T;
  }

  createSession(): Promise<{ session_id: string }> {
    return this.request("POST", "/api/sessions", {});
  }

  postTurn(sessionId: string, body: TurnBody): Promise<TurnResponse> {
    return this.request("POST", `/api/sessions/${sessionId}/turns`, body);
  }

  getHistory(sessionId: string): Promise<HistoryPayload> {
    return this.request("GET", `/api/sessions/${sessionId}/history`);
  }

  ingest(
    documents: IngestDocument[],
    options: { chunk_size?: number; overlap?: number } = {},
  ): Promise<IngestSummary> {
    return this.request("POST", "/api/ingest", { documents, ...options });
  }

  startEval(body: EvalBody): Promise<{ job_id: string; status: string }> {
    return this.request("POST", "/api/eval", body);
  }

  getEvalJob(jobId: string): Promise<EvalJobPayload> {
    return this.request("GET", `/api/eval/${jobId}`);
  }

  /** Poll an eval job until it settles; resolves with the finished report. */
  async pollEval(
    jobId: string,
    options: { intervalMs?: number; maxAttempts?: number } = {},
  ): Promise<MetricReport> {
    const intervalMs = options.intervalMs ?? 750;
    const maxAttempts = options.maxAttempts ?? 400;
    for (let attempt = 0; attempt < maxAttempts; attempt++) {
      const job = await this.getEvalJob(jobId);
      if (job.status === "done" && job.report) return job.report;
      if (job.status === "error") {
        const body = job.error ?? { code: "internal_error", message: "eval job failed" };
        throw new ApiError(500, body);
      }
      await new Promise((resolve) => setTimeout(resolve, intervalMs));
    }
    throw new ApiError(504, { code: "poll_timeout", message: `eval job ${jobId} did not settle` });
  }
}
