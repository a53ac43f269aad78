// Single-page wiring over the JSON API. All state a view needs lives on the
// server: the chat pane re-renders from GET history after every turn, so a
// reload reconstructs the same view.

import { ApiClient, ApiError } from "./api.js";
import { renderDashboard, renderJudgePanel } from "./charts.js";
import {
  asHistory,
  asMetricReport,
  asJudgeReport,
  judgeReportProblems,
  metricReportProblems,
} from "./schema.js";
import {
  emptyState,
  errorTurnView,
  historyView,
  toast,
} from "./render.js";

const SHELL = `
<header class="top">
  <h1>aura</h1>
  <nav class="tabs">
    <button class="tab active" data-tab="chat">chat</button>
    <button class="tab" data-tab="corpus">corpus</button>
    <button class="tab" data-tab="eval">evaluation</button>
  </nav>
  <span id="session-label" class="session-label"></span>
</header>
<div id="toast-host" class="toast-host"></div>
<main>
  <section id="panel-chat" class="panel active">
    <div id="turns" class="turns"></div>
    <form id="chat-form" class="chat-form">
      <input id="query" name="query" type="text" autocomplete="off"
             placeholder="Ask about a threat report..." />
      <button id="send" type="submit">send</button>
      <button id="new-session" type="button" title="start a fresh session">new session</button>
    </form>
    <div id="chat-status" class="status-line"></div>
  </section>
  <section id="panel-corpus" class="panel">
    <form id="ingest-form" class="stack-form">
      <label>report id <input id="ingest-id" type="text" /></label>
      <label>title <input id="ingest-title" type="text" /></label>
      <label>report text <textarea id="ingest-text" rows="8"></textarea></label>
      <button type="submit">upload</button>
    </form>
    <div id="ingest-status" class="status-line"></div>
  </section>
  <section id="panel-eval" class="panel">
    <form id="eval-form" class="stack-form">
      <label>test set path (on the server) <input id="eval-ref" type="text" /></label>
      <label>generations per record <input id="eval-n" type="number" min="1" value="1" /></label>
      <button type="submit">run eval</button>
    </form>
    <div id="eval-status" class="status-line"></div>
    <details class="paste-box">
      <summary>load a saved report</summary>
      <textarea id="report-json" rows="6" placeholder="paste MetricReport JSON"></textarea>
      <textarea id="judge-json" rows="4" placeholder="paste judge output JSON (optional)"></textarea>
      <button id="render-report" type="button">render</button>
    </details>
    <div id="dashboard" class="dashboard"></div>
    <div id="judge-panel" class="dashboard"></div>
  </section>
</main>
`;

export interface AppOptions {
  pollIntervalMs?: number;
}

export interface AppHandle {
  state: { sessionId: string | null; turnInFlight: boolean };
  submitTurn(query: string): Promise<void>;
  restoreSession(): Promise<void>;
  newSession(): void;
  ingestDocument(doc: { id: string; title: string; text: string }): Promise<void>;
  runEval(testSetRef: string, nGenerations: number): Promise<void>;
  renderReportText(reportText: string, judgeText?: string): void;
}

function sessionFromHash(): string | null {
  const match = /[#&]s=([A-Za-z0-9-]+)/.exec(window.location.hash);
  return match ? match[1] : null;
}

export function mountApp(
  root: HTMLElement,
  client: ApiClient,
  options: AppOptions = {},
): AppHandle {
  root.innerHTML = SHELL;
  const pollIntervalMs = options.pollIntervalMs ?? 750;

  const el = <T extends HTMLElement>(selector: string): T => {
    const found = root.querySelector<T>(selector);
    if (!found) throw new Error(`missing element ${selector}`);
    return found;
  };

  const turns = el<HTMLDivElement>("#turns");
  const queryInput = el<HTMLInputElement>("#query");
  const sendButton = el<HTMLButtonElement>("#send");
  const chatStatus = el<HTMLDivElement>("#chat-status");
  const sessionLabel = el<HTMLSpanElement>("#session-label");
  const toastHost = el<HTMLDivElement>("#toast-host");
  const dashboard = el<HTMLDivElement>("#dashboard");
  const judgePanel = el<HTMLDivElement>("#judge-panel");
  const evalStatus = el<HTMLDivElement>("#eval-status");
  const ingestStatus = el<HTMLDivElement>("#ingest-status");

  const state = { sessionId: null as string | null, turnInFlight: false };

  function showToast(kind: "info" | "error", message: string, stage?: string) {
    toastHost.innerHTML = toast(kind, message, stage);
    const current = toastHost.firstElementChild;
    if (current) {
      current.addEventListener("click", () => current.remove());
    }
  }

  function showApiError(err: unknown, fallback: string) {
    if (err instanceof ApiError) {
      showToast("error", `${err.code}: ${err.message}`, err.stage);
    } else {
      showToast("error", `${fallback}: ${String(err)}`);
    }
  }

  function setSession(sessionId: string | null) {
    state.sessionId = sessionId;
    sessionLabel.textContent = sessionId ? `session ${sessionId.slice(0, 8)}` : "";
    window.location.hash = sessionId ? `s=${sessionId}` : "";
  }

  async function refreshHistory() {
    if (!state.sessionId) return;
    const history = asHistory(await client.getHistory(state.sessionId));
    if (!history) {
      showToast("error", "history payload failed schema validation");
      return;
    }
    turns.innerHTML = historyView(history.turns);
  }

  async function submitTurn(query: string): Promise<void> {
    if (state.turnInFlight) {
      showToast("error", "a turn is already in progress for this session");
      return;
    }
    if (!query.trim()) return;
    state.turnInFlight = true;
    sendButton.disabled = true;
    chatStatus.textContent = "running pipeline...";
    try {
      if (!state.sessionId) {
        const created = await client.createSession();
        setSession(created.session_id);
      }
      await client.postTurn(state.sessionId as string, { query });
      await refreshHistory();
      queryInput.value = "";
      chatStatus.textContent = "";
    } catch (err) {
      chatStatus.textContent = "";
      if (err instanceof ApiError && err.code === "turn_in_progress") {
        showToast("error", "a turn is already in progress for this session");
      } else if (err instanceof ApiError) {
        turns.insertAdjacentHTML(
          "beforeend",
          errorTurnView(query, err.code, err.message, err.stage),
        );
        showApiError(err, "turn failed");
      } else {
        showApiError(err, "turn failed");
      }
    } finally {
      state.turnInFlight = false;
      sendButton.disabled = false;
    }
  }

  async function restoreSession(): Promise<void> {
    const fromHash = sessionFromHash();
    if (!fromHash) {
      turns.innerHTML = emptyState("No turns yet. Ask about a threat report to get started.");
      return;
    }
    try {
      state.sessionId = fromHash;
      sessionLabel.textContent = `session ${fromHash.slice(0, 8)}`;
      await refreshHistory();
    } catch (err) {
      state.sessionId = null;
      showApiError(err, "could not restore session");
    }
  }

  function newSession() {
    setSession(null);
    turns.innerHTML = emptyState("No turns yet. Ask about a threat report to get started.");
  }

  async function ingestDocument(doc: { id: string; title: string; text: string }): Promise<void> {
    try {
      const summary = await client.ingest([doc]);
      ingestStatus.textContent =
        `${summary.report_ids.length} new, ${summary.skipped.length} skipped, ` +
        `${summary.chunks_indexed} chunks indexed`;
      showToast("info", "corpus updated");
    } catch (err) {
      showApiError(err, "ingest failed");
    }
  }

  async function runEval(testSetRef: string, nGenerations: number): Promise<void> {
    if (!testSetRef.trim()) {
      showToast("error", "a test set path is required");
      return;
    }
    try {
      const started = await client.startEval({
        test_set_ref: testSetRef,
        n_generations: nGenerations,
      });
      evalStatus.textContent = `job ${started.job_id}: running...`;
      const payload = await client.pollEval(started.job_id, { intervalMs: pollIntervalMs });
      const report = asMetricReport(payload);
      if (!report) {
        showToast("error", `report failed schema validation: ${metricReportProblems(payload)[0]}`);
        return;
      }
      evalStatus.textContent = `job ${started.job_id}: done`;
      dashboard.innerHTML = renderDashboard(report);
    } catch (err) {
      evalStatus.textContent = "";
      showApiError(err, "eval failed");
    }
  }

  function renderReportText(reportText: string, judgeText = ""): void {
    let parsed: unknown;
    try {
      parsed = JSON.parse(reportText);
    } catch {
      showToast("error", "report is not valid JSON");
      return;
    }
    const report = asMetricReport(parsed);
    if (!report) {
      showToast("error", `report failed schema validation: ${metricReportProblems(parsed)[0]}`);
      return;
    }
    dashboard.innerHTML = renderDashboard(report);
    if (judgeText.trim()) {
      let judgeParsed: unknown;
      try {
        judgeParsed = JSON.parse(judgeText);
      } catch {
        showToast("error", "judge output is not valid JSON");
        return;
      }
      const judge = asJudgeReport(judgeParsed);
      if (!judge) {
        showToast("error", `judge output failed schema validation: ${judgeReportProblems(judgeParsed)[0]}`);
        return;
      }
      judgePanel.innerHTML = renderJudgePanel(judge);
    }
  }

  for (const tab of Array.from(root.querySelectorAll<HTMLButtonElement>(".tab"))) {
    tab.addEventListener("click", () => {
      for (const other of Array.from(root.querySelectorAll(".tab"))) {
        other.classList.toggle("active", other === tab);
      }
      for (const panel of Array.from(root.querySelectorAll(".panel"))) {
        panel.classList.toggle("active", panel.id === `panel-${tab.dataset.tab}`);
      }
    });
  }

  el<HTMLFormElement>("#chat-form").addEventListener("submit", (event) => {
    event.preventDefault();
    void submitTurn(queryInput.value);
  });
  el<HTMLButtonElement>("#new-session").addEventListener("click", () => newSession());
  el<HTMLFormElement>("#ingest-form").addEventListener("submit", (event) => {
    event.preventDefault();
    void ingestDocument({
      id: el<HTMLInputElement>("#ingest-id").value,
      title: el<HTMLInputElement>("#ingest-title").value,
      text: el<HTMLTextAreaElement>("#ingest-text").value,
    });
  });
  el<HTMLFormElement>("#eval-form").addEventListener("submit", (event) => {
    event.preventDefault();
    void runEval(
      el<HTMLInputElement>("#eval-ref").value,
      Number(el<HTMLInputElement>("#eval-n").value) || 1,
    );
  });
  el<HTMLButtonElement>("#render-report").addEventListener("click", () => {
    renderReportText(
      el<HTMLTextAreaElement>("#report-json").value,
      el<HTMLTextAreaElement>("#judge-json").value,
    );
  });

  void restoreSession();

  return {
    state,
    submitTurn,
    restoreSession,
    newSession,
    ingestDocument,
    runEval,
    renderReportText,
  };
}
