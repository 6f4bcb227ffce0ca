// DOM rendering for the review app. All labels shown here come from the
// service (proposals, live traces, reports); this layer only draws them.

import type { ReviewSession } from "./session.js";
import type { ReportResponse, StatsResponse, TaskDetail } from "./types.js";

const CONDITION_COLORS = [
  "#e9724d", "#5bc0eb", "#9bc53d", "#c3423f", "#846b8a",
  "#ffc857", "#3c91e6", "#a2d729", "#fa824c",
];

export function conditionColor(index: number): string {
  return CONDITION_COLORS[index % CONDITION_COLORS.length]!;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderStats(stats: StatsResponse): HTMLElement {
  const bar = el("div", "stats-bar");
  const parts = [
    `tasks ${stats.fully_reviewed}/${stats.tasks_total} reviewed`,
    `retain ${stats.retain_decisions} / edit ${stats.edit_decisions}`,
    stats.edited_fraction !== null
      ? `edited fraction ${(stats.edited_fraction * 100).toFixed(1)}%`
      : "edited fraction n/a",
    stats.kappa !== null
      ? `${stats.kappa_statistic} kappa ${stats.kappa.toFixed(3)}`
      : "kappa n/a",
    stats.benefit_rate !== null
      ? `explanations beneficial ${(stats.benefit_rate * 100).toFixed(0)}%`
      : "no benefit votes yet",
  ];
  for (const part of parts) bar.appendChild(el("span", "stat", part));
  return bar;
}

/** Post text with fragment highlights colored by their first satisfied condition. */
export function renderPostText(
  task: TaskDetail,
  report: ReportResponse | null,
  conditionIndex: Map<string, number>,
): HTMLElement {
  const container = el("div", "post-text");
  if (!report) {
    container.appendChild(el("p", undefined, task.post.text));
    return container;
  }
  for (const line of report.structured.split("\n")) {
    if (!line.trim()) continue;
    const record = JSON.parse(line) as {
      record: string;
      text?: string;
      satisfied?: string[];
      positive_sentiment?: string[];
    };
    if (record.record !== "fragment") continue;
    const span = el("span", "fragment", (record.text ?? "") + " ");
    const firstHit = (record.satisfied ?? [])[0];
    if (firstHit !== undefined) {
      span.style.backgroundColor = conditionColor(conditionIndex.get(firstHit) ?? 0) + "55";
      span.title = `matches ${(record.satisfied ?? []).join(", ")}`;
    }
    if ((record.positive_sentiment ?? []).length > 0) {
      span.classList.add("positive-sentiment");
    }
    container.appendChild(span);
  }
  return container;
}

/** One row per condition: toggle, text, and per-store similarity bars. */
export function renderConditions(
  session: ReviewSession,
  task: TaskDetail,
  onToggle: (conditionId: string) => void,
): HTMLElement {
  const list = el("div", "conditions");
  const pk = session.pk;
  if (!pk) return list;
  pk.conditions.forEach((condition, index) => {
    const row = el("div", "condition-row");
    const checkbox = el("input") as HTMLInputElement;
    checkbox.type = "checkbox";
    checkbox.id = `cond-${condition.id}`;
    checkbox.checked = session.truths[condition.id] ?? false;
    checkbox.addEventListener("change", () => onToggle(condition.id));
    row.appendChild(checkbox);

    const swatch = el("span", "swatch");
    swatch.style.backgroundColor = conditionColor(index);
    row.appendChild(swatch);

    const label = el("label", "condition-text", `${condition.id}: ${condition.text}`);
    label.htmlFor = checkbox.id;
    row.appendChild(label);

    const bars = el("div", "sim-bars");
    for (const [store, sims] of Object.entries(task.proposal.per_store)) {
      const sim = sims[condition.id] ?? 0;
      const bar = el("div", "sim-bar");
      const fill = el("div", "sim-fill");
      fill.style.width = `${Math.max(0, Math.min(1, (sim + 1) / 2)) * 100}%`;
      fill.title = `${store}: ${sim.toFixed(3)}`;
      bar.appendChild(fill);
      bars.appendChild(bar);
    }
    row.appendChild(bars);
    list.appendChild(row);
  });
  return list;
}

export function renderTrace(session: ReviewSession): HTMLElement {
  const box = el("div", "trace-box");
  const trace = session.liveTrace;
  if (!trace) {
    box.appendChild(el("div", "trace-label muted", "toggle conditions to preview the label"));
    return box;
  }
  box.appendChild(el("div", "trace-label", `these truths entail: ${trace.label}`));
  for (const line of trace.trace) box.appendChild(el("div", "trace-line", line));
  return box;
}

export function renderReportPanel(report: ReportResponse): HTMLElement {
  const panel = el("div", "report-panel");
  panel.appendChild(el("h3", undefined, `explanation for ${report.post_id}`));
  const pre = el("pre", "report-human", report.human);
  panel.appendChild(pre);
  return panel;
}
