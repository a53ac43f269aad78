// Pure HTML renderers. Everything here is a string-in, string-out function so
// the views can be tested without wiring up the whole app.

import { STAGES } from "./types.js";
import type { AttributionPayload, StageEvent, TurnRecord } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#039;");
}

function actorLine(role: string, actor: string | null, nation: string | null): string {
  if (!actor) return "";
  const where = nation ? ` <span class="nation">(${escapeHtml(nation)})</span>` : "";
  return `<div class="actor-line"><span class="actor-role">${role}</span> ` +
    `<span class="actor-name">${escapeHtml(actor)}</span>${where}</div>`;
}

function provenanceChip(ref: string): string {
  const web = ref.startsWith("web:");
  const cls = web ? "chip chip-web" : "chip";
  const hint = web ? "web search snippet" : "retrieved chunk";
  return `<span class="${cls}" data-prov="${escapeHtml(ref)}" title="${hint} ${escapeHtml(ref)}">` +
    `${escapeHtml(ref)}</span>`;
}

export function attributionCard(result: AttributionPayload): string {
  const badge = result.low_confidence
    ? '<span class="badge badge-low">low confidence</span>'
    : "";
  const chips = result.context_provenance.map(provenanceChip).join("");
  const provenance = chips
    ? `<div class="provenance"><span class="provenance-label">evidence</span>${chips}</div>`
    : "";
  return `<div class="card attribution-card">
  <div class="card-head">${actorLine("primary", result.primary_actor, result.nation)}
  ${actorLine("secondary", result.secondary_actor, result.nation_secondary)}${badge}</div>
  <p class="justification">${escapeHtml(result.justification)}</p>
  ${provenance}
</div>`;
}

function stageClass(outcome: string): string {
  if (outcome.startsWith("skipped")) return "stage-skipped";
  if (outcome === "irrelevant") return "stage-warn";
  return "stage-ok";
}

function formatDuration(seconds: number): string {
  return `${(seconds * 1000).toFixed(1)} ms`;
}

export function traceView(trace: StageEvent[]): string {
  const items = trace
    .map(
      (event) =>
        `<li class="stage ${stageClass(event.outcome)}" data-stage="${escapeHtml(event.stage)}">` +
        `<span class="stage-name">${escapeHtml(event.stage)}</span>` +
        `<span class="stage-outcome">${escapeHtml(event.outcome)}</span>` +
        `<span class="stage-duration">${formatDuration(event.duration)}</span></li>`,
    )
    .join("");
  return `<ol class="trace">${items}</ol>`;
}

/** Stage list for a failed turn: the service reports only the failing stage,
 * so later stages are shown as never reached. */
export function failedTraceView(failedStage: string): string {
  const cut = STAGES.indexOf(failedStage as (typeof STAGES)[number]);
  const items = STAGES.map((stage, i) => {
    let cls = "stage-ok";
    let note = "done";
    if (cut >= 0 && i === cut) {
      cls = "stage-failed";
      note = "failed";
    } else if (cut >= 0 && i > cut) {
      cls = "stage-pending";
      note = "not reached";
    }
    return (
      `<li class="stage ${cls}" data-stage="${stage}">` +
      `<span class="stage-name">${stage}</span>` +
      `<span class="stage-outcome">${note}</span></li>`
    );
  }).join("");
  return `<ol class="trace trace-failed">${items}</ol>`;
}

export interface TurnView {
  turn_index: number;
  query?: string;
  rewritten: string;
  result: AttributionPayload;
  stage_trace: StageEvent[];
}

export function turnView(turn: TurnView): string {
  const query = turn.query
    ? `<div class="bubble bubble-user">${escapeHtml(turn.query)}</div>`
    : "";
  return `<article class="turn" data-turn="${turn.turn_index}">
  ${query}
  <div class="rewritten" title="rewritten query">&#8627; ${escapeHtml(turn.rewritten)}</div>
  ${attributionCard(turn.result)}
  <details class="trace-details"><summary>pipeline trace</summary>${traceView(turn.stage_trace)}</details>
</article>`;
}

export function errorTurnView(query: string, code: string, message: string, stage?: string): string {
  const where = stage ? `<span class="stage-tag">${escapeHtml(stage)}</span>` : "";
  const trace = stage ? failedTraceView(stage) : "";
  return `<article class="turn turn-error">
  <div class="bubble bubble-user">${escapeHtml(query)}</div>
  <div class="card error-card">${where}<strong>${escapeHtml(code)}</strong> ${escapeHtml(message)}</div>
  ${trace ? `<details class="trace-details"><summary>pipeline trace</summary>${trace}</details>` : ""}
</article>`;
}

export function historyView(turns: TurnRecord[]): string {
  if (turns.length === 0) {
    return emptyState("No turns yet. Ask about a threat report to get started.");
  }
  return turns.map((turn) => turnView(turn)).join("\n");
}

export function emptyState(message: string): string {
  return `<div class="empty-state">${escapeHtml(message)}</div>`;
}

export function toast(kind: "info" | "error", message: string, stage?: string): string {
  const tag = stage ? `<span class="stage-tag">${escapeHtml(stage)}</span>` : "";
  return `<div class="toast toast-${kind}">${tag}${escapeHtml(message)}</div>`;
}
