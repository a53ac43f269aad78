// Client-side mirrors of the service's JSON payloads. Unknown extra fields
// are tolerated everywhere; these list only what the views read.

export const STAGES = [
  "extract",
  "rewrite",
  "retrieve",
  "decide",
  "search",
  "attribute",
  "memorize",
] as const;

export interface StageEvent {
  stage: string;
  duration: number;
  outcome: string;
}

export interface AttributionPayload {
  primary_actor: string;
  secondary_actor: string | null;
  nation: string | null;
  nation_secondary: string | null;
  justification: string;
  low_confidence: boolean;
  context_provenance: string[];
}

export interface TurnResponse {
  session_id: string;
  turn_index: number;
  rewritten: string;
  result: AttributionPayload;
  stage_trace: StageEvent[];
}

export interface TurnRecord {
  turn_index: number;
  query: string;
  rewritten: string;
  entities: Record<string, unknown> | null;
  result: AttributionPayload;
  stage_trace: StageEvent[];
  timestamp: string;
}

export interface HistoryPayload {
  session_id: string;
  created_at: string;
  turns: TurnRecord[];
}

export interface IngestSummary {
  report_ids: string[];
  skipped: string[];
  chunks_indexed: number;
}

export interface AccuracyScores {
  top1: number | null;
  top2: number | null;
  pass_at_k: number | null;
}

export interface JustificationStat {
  mean: number | null;
  scored: number;
}

export interface EvalDetail {
  report_id: string;
  true_group: string;
  true_nation: string;
  status: string;
  errors: string[];
  generations: unknown[];
  justification: string | null;
  metrics: Record<string, number | null>;
}

export interface MetricReport {
  n_records: number;
  n_generations: number;
  pass_rank: number;
  pass_k: number;
  accuracy: { group: AccuracyScores; nation: AccuracyScores };
  justification: Record<string, JustificationStat>;
  details: EvalDetail[];
}

export const JUDGE_DIMENSIONS = [
  "fluency",
  "clarity",
  "coherence",
  "informativeness",
] as const;

export interface JudgeReport {
  per_item: Record<string, number>[];
  means: Record<string, number>;
}

export interface EvalJobPayload {
  job_id: string;
  status: "pending" | "done" | "error";
  report?: MetricReport;
  error?: ApiErrorBody;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  stage?: string;
  details?: Record<string, unknown>;
}
