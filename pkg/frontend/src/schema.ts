// Runtime checks for payloads arriving over the wire. Each validator returns
// a list of human-readable problems; an empty list means the payload is safe
// to render. Unknown extra fields are deliberately ignored.

import type {
  AttributionPayload,
  HistoryPayload,
  JudgeReport,
  MetricReport,
  StageEvent,
  TurnResponse,
} from "./types.js";

function isObject(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null && !Array.isArray(value);
}

function isFiniteNumber(value: unknown): value is number {
  return typeof value === "number" && Number.isFinite(value);
}

function isNumberOrNull(value: unknown): boolean {
  return value === null || isFiniteNumber(value);
}

function isStringOrNull(value: unknown): boolean {
  return value === null || typeof value === "string";
}

export function attributionProblems(value: unknown): string[] {
  if (!isObject(value)) return ["result: expected an object"];
  const problems: string[] = [];
  if (typeof value.primary_actor !== "string" || !value.primary_actor) {
    problems.push("result.primary_actor: expected a non-empty string");
  }
  if (!isStringOrNull(value.secondary_actor)) {
    problems.push("result.secondary_actor: expected a string or null");
  }
  if (!isStringOrNull(value.nation)) {
    problems.push("result.nation: expected a string or null");
  }
  if (typeof value.justification !== "string") {
    problems.push("result.justification: expected a string");
  }
  if (typeof value.low_confidence !== "boolean") {
    problems.push("result.low_confidence: expected a boolean");
  }
  if (
    !Array.isArray(value.context_provenance) ||
    value.context_provenance.some((item) => typeof item !== "string")
  ) {
    problems.push("result.context_provenance: expected a list of strings");
  }
  return problems;
}

function traceProblems(value: unknown): string[] {
  if (!Array.isArray(value)) return ["stage_trace: expected a list"];
  const problems: string[] = [];
  value.forEach((event, i) => {
    if (!isObject(event) || typeof event.stage !== "string" || typeof event.outcome !== "string") {
      problems.push(`stage_trace[${i}]: expected {stage, duration, outcome}`);
    }
  });
  return problems;
}

export function turnProblems(value: unknown): string[] {
  if (!isObject(value)) return ["turn: expected an object"];
  const problems: string[] = [];
  if (typeof value.rewritten !== "string") {
    problems.push("turn.rewritten: expected a string");
  }
  problems.push(...attributionProblems(value.result));
  problems.push(...traceProblems(value.stage_trace));
  return problems;
}

export function historyProblems(value: unknown): string[] {
  if (!isObject(value)) return ["history: expected an object"];
  const problems: string[] = [];
  if (typeof value.session_id !== "string") {
    problems.push("history.session_id: expected a string");
  }
  if (!Array.isArray(value.turns)) {
    problems.push("history.turns: expected a list");
  } else {
    value.turns.forEach((turn, i) => {
      problems.push(...turnProblems(turn).map((p) => `turns[${i}].${p}`));
    });
  }
  return problems;
}

function accuracyProblems(value: unknown, level: string): string[] {
  if (!isObject(value)) return [`accuracy.${level}: expected an object`];
  const problems: string[] = [];
  for (const key of ["top1", "top2", "pass_at_k"]) {
    if (!isNumberOrNull(value[key])) {
      problems.push(`accuracy.${level}.${key}: expected a number or null`);
    }
  }
  return problems;
}

export function metricReportProblems(value: unknown): string[] {
  if (!isObject(value)) return ["report: expected an object"];
  const problems: string[] = [];
  for (const key of ["n_records", "n_generations", "pass_rank", "pass_k"]) {
    if (!isFiniteNumber(value[key])) {
      problems.push(`report.${key}: expected a number`);
    }
  }
  if (!isObject(value.accuracy)) {
    problems.push("report.accuracy: expected an object");
  } else {
    problems.push(...accuracyProblems(value.accuracy.group, "group"));
    problems.push(...accuracyProblems(value.accuracy.nation, "nation"));
  }
  if (!isObject(value.justification)) {
    problems.push("report.justification: expected an object");
  } else {
    for (const [key, stat] of Object.entries(value.justification)) {
      if (!isObject(stat) || !isNumberOrNull(stat.mean)) {
        problems.push(`report.justification.${key}: expected {mean, scored}`);
      }
    }
  }
  if (!Array.isArray(value.details)) {
    problems.push("report.details: expected a list");
  } else {
    value.details.forEach((row, i) => {
      if (!isObject(row) || typeof row.report_id !== "string" || !isObject(row.metrics)) {
        problems.push(`report.details[${i}]: expected {report_id, metrics, ...}`);
      }
    });
  }
  return problems;
}

export function judgeReportProblems(value: unknown): string[] {
  if (!isObject(value)) return ["judge: expected an object"];
  const problems: string[] = [];
  if (!Array.isArray(value.per_item)) {
    problems.push("judge.per_item: expected a list");
  } else {
    value.per_item.forEach((item, i) => {
      if (!isObject(item) || Object.values(item).some((v) => !isFiniteNumber(v))) {
        problems.push(`judge.per_item[${i}]: expected numeric scores`);
      }
    });
  }
  if (!isObject(value.means)) {
    problems.push("judge.means: expected an object");
  }
  return problems;
}

export function asTurnResponse(value: unknown): TurnResponse | null {
  return turnProblems(value).length === 0 ? (value as TurnResponse) : null;
}

export function asHistory(value: unknown): HistoryPayload | null {
  return historyProblems(value).length === 0 ? (value as HistoryPayload) : null;
}

export function asMetricReport(value: unknown): MetricReport | null {
  return metricReportProblems(value).length === 0 ? (value as MetricReport) : null;
}

export function asJudgeReport(value: unknown): JudgeReport | null {
  return judgeReportProblems(value).length === 0 ? (value as JudgeReport) : null;
}

export type { AttributionPayload, StageEvent };
