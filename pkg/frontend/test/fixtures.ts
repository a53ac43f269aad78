// Shared fixtures mirroring the service's JSON payloads, plus a scripted
// fetch for driving the client without a server.

import type { FetchLike } from "../src/api.js";
import type {
  AttributionPayload,
  HistoryPayload,
  JudgeReport,
  MetricReport,
  StageEvent,
  TurnRecord,
  TurnResponse,
} from "../src/types.js";

export const JUSTIFICATION =
  "The campaign delivers Crimson RAT through phishing lures aimed at Indian " +
  "government personnel, tooling and targeting consistent with APT36 " +
  "operations attributed to Pakistan.";

export function happyResult(overrides: Partial<AttributionPayload> = {}): AttributionPayload {
  return {
    primary_actor: "APT36",
    secondary_actor: "APT37",
    nation: "Pakistan",
    nation_secondary: "North Korea",
    justification: JUSTIFICATION,
    low_confidence: false,
    context_provenance: ["r-apt36#0", "r-apt36#1", "r-apt28#0"],
    ...overrides,
  };
}

export function happyTrace(): StageEvent[] {
  return [
    { stage: "extract", duration: 0.0021, outcome: "ok" },
    { stage: "rewrite", duration: 0.0018, outcome: "ok" },
    { stage: "retrieve", duration: 0.0009, outcome: "ok" },
    { stage: "decide", duration: 0.0016, outcome: "relevant" },
    { stage: "search", duration: 0.0, outcome: "skipped (context relevant)" },
    { stage: "attribute", duration: 0.0025, outcome: "ok" },
    { stage: "memorize", duration: 0.0001, outcome: "ok" },
  ];
}

/** Trace of a turn run with the web searcher disabled (eval mode). */
export function evalModeTrace(): StageEvent[] {
  return [
    { stage: "extract", duration: 0.002, outcome: "ok" },
    { stage: "rewrite", duration: 0.0017, outcome: "ok" },
    { stage: "retrieve", duration: 0.0008, outcome: "ok" },
    { stage: "decide", duration: 0.0015, outcome: "irrelevant" },
    { stage: "search", duration: 0.0, outcome: "skipped (disabled)" },
    { stage: "attribute", duration: 0.0024, outcome: "ok (low confidence)" },
    { stage: "memorize", duration: 0.0001, outcome: "ok" },
  ];
}

export const QUERY = "Who is behind the Crimson RAT phishing campaign against India?";
export const REWRITTEN =
  "Which threat actor distributes Crimson RAT via phishing against Indian targets?";

export function turnResponse(sessionId = "abc12345"): TurnResponse {
  return {
    session_id: sessionId,
    turn_index: 0,
    rewritten: REWRITTEN,
    result: happyResult(),
    stage_trace: happyTrace(),
  };
}

export function turnRecord(turnIndex = 0): TurnRecord {
  return {
    turn_index: turnIndex,
    query: QUERY,
    rewritten: REWRITTEN,
    entities: null,
    result: happyResult(),
    stage_trace: happyTrace(),
    timestamp: "2026-08-15T10:00:00+00:00",
  };
}

export function history(sessionId = "abc12345", turns: TurnRecord[] = [turnRecord()]): HistoryPayload {
  return {
    session_id: sessionId,
    created_at: "2026-08-15T10:00:00+00:00",
    turns,
  };
}

/** Report shaped like the 30-record accuracy fixture: 19/30 rank-1 and 22/30
 * rank-2 group matches. */
export function thirtyRecordReport(): MetricReport {
  const details = Array.from({ length: 30 }, (_, i) => ({
    report_id: `rec-${String(i).padStart(2, "0")}`,
    true_group: "APT36",
    true_nation: "Pakistan",
    status: "ok",
    errors: [] as string[],
    generations: [],
    justification: JUSTIFICATION,
    metrics: {
      flesch_reading_ease: 20 + i * 0.5,
      type_token_ratio: 0.5 + (i % 5) * 0.05,
      embedding_coherence: 0.3 + (i % 3) * 0.1,
      perplexity: 30 + i,
    },
  }));
  return {
    n_records: 30,
    n_generations: 3,
    pass_rank: 1,
    pass_k: 3,
    accuracy: {
      group: { top1: 19 / 30, top2: 22 / 30, pass_at_k: 22 / 30 },
      nation: { top1: 26 / 30, top2: 28 / 30, pass_at_k: 28 / 30 },
    },
    justification: {
      flesch_reading_ease: { mean: 27.28, scored: 30 },
      type_token_ratio: { mean: 0.67, scored: 30 },
      embedding_coherence: { mean: 0.33, scored: 30 },
      perplexity: { mean: 57.05, scored: 30 },
    },
    details,
  };
}

export function judgeReport(): JudgeReport {
  return {
    per_item: [
      { fluency: 9, clarity: 7, coherence: 9, informativeness: 8 },
      { fluency: 8, clarity: 7, coherence: 8, informativeness: 9 },
      { fluency: 9, clarity: 6, coherence: 9, informativeness: 8 },
    ],
    means: {
      fluency: 26 / 3,
      clarity: 20 / 3,
      coherence: 26 / 3,
      informativeness: 25 / 3,
    },
  };
}

export interface LoggedCall {
  method: string;
  path: string;
  body: unknown;
  headers: Record<string, string>;
}

export type RouteHandler = (call: LoggedCall) => Response | Promise<Response>;

export function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

/** First route whose method and path pattern match handles the request. */
export function scriptedFetch(
  routes: Array<[string, RegExp, RouteHandler]>,
): { fetchImpl: FetchLike; calls: LoggedCall[] } {
  const calls: LoggedCall[] = [];
  const fetchImpl: FetchLike = async (input, init) => {
    const method = init?.method ?? "GET";
    const headers = (init?.headers as Record<string, string>) ?? {};
    let body: unknown = undefined;
    if (typeof init?.body === "string") {
      try {
        body = JSON.parse(init.body);
      } catch {
        body = init.body;
      }
    }
    const call: LoggedCall = { method, path: input, body, headers };
    calls.push(call);
    for (const [routeMethod, pattern, handler] of routes) {
      if (routeMethod === method && pattern.test(input)) {
        return handler(call);
      }
    }
    return jsonResponse(404, { error: { code: "not_found", message: `no route for ${method} ${input}` } });
  };
  return { fetchImpl, calls };
}

/** Flush pending microtasks and zero-delay timers. */
export function settle(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}
