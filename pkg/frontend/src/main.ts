// App wiring: keyboard-first review loop plus the explanation-benefit vote
// flow. Hotkeys: r retain, e submit edit, n next task, y/u vote yes/no.

import { ApiError, ReviewApi } from "./api.js";
import { ReviewSession } from "./session.js";
import {
  renderConditions,
  renderPostText,
  renderReportPanel,
  renderStats,
  renderTrace,
} from "./ui.js";
import type { ReportResponse } from "./types.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? "http://127.0.0.1:8351";
const token = params.get("token");
const reviewer =
  params.get("reviewer") ?? window.localStorage.getItem("reviewer") ?? "expert-1";
window.localStorage.setItem("reviewer", reviewer);

const api = new ReviewApi(baseUrl, token);
const session = new ReviewSession(api, reviewer);

const root = document.getElementById("app")!;
const statusLine = document.createElement("div");
statusLine.className = "status-line";

let currentReport: ReportResponse | null = null;

function setStatus(message: string) {
  statusLine.textContent =
    session.pendingSubmissions > 0
      ? `${message} (${session.pendingSubmissions} parked for retry)`
      : message;
}

async function refresh() {
  root.replaceChildren();
  root.appendChild(statusLine);
  try {
    root.appendChild(renderStats(await api.stats()));
  } catch {
    // stats are non-critical; keep reviewing if the call hiccups
  }
  const task = session.current;
  if (!task) {
    root.appendChild(Object.assign(document.createElement("p"), {
      textContent: "no more tasks: review round complete",
    }));
    return;
  }
  const header = document.createElement("h2");
  header.textContent = `${task.id} — proposed: ${task.proposal.label}` +
    (task.proposal.mandatory_edit ? " (edit required)" : "") +
    ` — revision ${task.revision}`;
  root.appendChild(header);

  currentReport = null;
  try {
    currentReport = await api.report(task.id);
  } catch (error) {
    if (!(error instanceof ApiError && (error.status === 409 || error.status === 404))) {
      throw error;
    }
  }
  const conditionIndex = new Map(
    (session.pk?.conditions ?? []).map((c, i) => [c.id, i] as const),
  );
  root.appendChild(renderPostText(task, currentReport, conditionIndex));
  root.appendChild(
    renderConditions(session, task, (conditionId) => {
      void session.toggle(conditionId).then(refresh);
    }),
  );
  root.appendChild(renderTrace(session));
  if (currentReport) root.appendChild(renderReportPanel(currentReport));

  const buttons = document.createElement("div");
  buttons.className = "buttons";
  const actions: Array<[string, () => Promise<void>]> = [
    ["retain (r)", retain],
    ["submit edit (e)", edit],
    ["next (n)", next],
    ["beneficial (y)", () => voteAndReport(true)],
    ["not beneficial (u)", () => voteAndReport(false)],
  ];
  for (const [label, handler] of actions) {
    const button = document.createElement("button");
    button.textContent = label;
    button.disabled = label.startsWith("retain") && task.proposal.mandatory_edit;
    button.addEventListener("click", () => void handler());
    buttons.appendChild(button);
  }
  root.appendChild(buttons);
}

async function retain() {
  const result = await session.retain();
  if (result.outcome === "accepted") {
    setStatus("retained");
    await next();
    return;
  }
  handleSubmitResult(result);
  await refresh();
}

async function edit() {
  const result = await session.edit();
  if (result.outcome === "accepted") {
    setStatus(`edited to ${session.liveTrace?.label ?? "?"}`);
    await next();
    return;
  }
  handleSubmitResult(result);
  await refresh();
}

function handleSubmitResult(result: { outcome: string; message?: string }) {
  if (result.outcome === "conflict") {
    // the task was refreshed by the session; ask the expert to rebase
    window.alert(
      `someone else reviewed this task first: ${result.message ?? ""}\n` +
        "the latest revision was loaded; please re-check your toggles and resubmit.",
    );
  } else if (result.outcome === "inconsistent") {
    window.alert(`decision rejected: ${result.message ?? ""}`);
  } else {
    setStatus(result.message ?? result.outcome);
  }
}

async function next() {
  const task = await session.next();
  setStatus(task ? `reviewing ${task.id}` : "round complete");
  await refresh();
}

async function voteAndReport(beneficial: boolean) {
  const result = await session.vote(beneficial);
  setStatus(result.outcome === "accepted" ? "vote recorded" : (result.message ?? "queued"));
  await refresh();
}

window.addEventListener("keydown", (event) => {
  if (event.target instanceof HTMLInputElement) return;
  const handlers: Record<string, () => Promise<void>> = {
    r: retain,
    e: edit,
    n: next,
    y: () => voteAndReport(true),
    u: () => voteAndReport(false),
  };
  const handler = handlers[event.key];
  if (handler) void handler();
});

window.addEventListener("online", () => {
  void session.flushQueues().then((sent) => {
    if (sent > 0) setStatus(`flushed ${sent} parked submissions`);
    void refresh();
  });
});

void session
  .start()
  .then(refresh)
  .catch((error) => {
    statusLine.textContent = `cannot reach the review service at ${baseUrl}: ${error}`;
    root.replaceChildren(statusLine);
  });
