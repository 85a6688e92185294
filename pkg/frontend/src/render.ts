// DOM rendering. render(container, view, handlers) rebuilds the session
// panel from the view model; no state lives in the DOM.

import {
  enabledControls,
  layoutGraph,
  type SessionView,
} from "./model";
import type { Decision } from "./types";

export interface Handlers {
  onDecision: (decision: Decision) => void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: Array<Node | string> = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  for (const child of children) {
    node.append(child);
  }
  return node;
}

function renderVerdictPanel(view: SessionView, handlers: Handlers): HTMLElement {
  const panel = el("section", { class: "panel verdict-panel" });
  panel.append(el("h2", {}, ["Verdict"]));
  if (view.error) {
    panel.append(el("div", { class: "error-banner", role: "alert" }, [view.error]));
    return panel;
  }
  const verdict = view.verdict;
  if (!verdict) {
    panel.append(el("p", { class: "muted" }, ["No verdict yet."]));
    return panel;
  }
  const controls = enabledControls(view);
  if (verdict.verdict === "clear") {
    panel.append(
      el("p", { class: "verdict-clear", "data-verdict": "clear" }, [
        "Query is clear; execution proceeds automatically.",
      ]),
    );
  } else if (verdict.verdict === "numeric_underspecified") {
    panel.append(
      el("p", { class: "verdict-warning", "data-verdict": "numeric_underspecified" }, [
        verdict.warning ?? "Numeric criteria are unspecified.",
      ]),
    );
    const proceed = el(
      "button",
      { class: "proceed-button", "data-action": "proceed" },
      ["Proceed"],
    ) as HTMLButtonElement;
    proceed.disabled = !controls.includes("proceed");
    proceed.addEventListener("click", () => handlers.onDecision({ action: "proceed" }));
    const respecifyBox = el("input", {
      class: "respecify-input",
      type: "text",
      placeholder: "Respecify the query with explicit numbers",
    }) as HTMLInputElement;
    const respecify = el(
      "button",
      { class: "respecify-button", "data-action": "respecify" },
      ["Respecify"],
    ) as HTMLButtonElement;
    respecify.disabled = !controls.includes("respecify");
    respecify.addEventListener("click", () => {
      if (respecifyBox.value.trim()) {
        handlers.onDecision({ action: "respecify", query: respecifyBox.value.trim() });
      }
    });
    panel.append(el("div", { class: "decision-controls" }, [proceed, respecifyBox, respecify]));
  } else {
    panel.append(
      el("p", { class: "verdict-vague", "data-verdict": "vague" }, [
        `Query is vague (${verdict.reason ?? "unspecified reason"}). Pick an alternative:`,
      ]),
    );
    const list = el("ol", { class: "alternatives" });
    (verdict.alternatives ?? []).forEach((text, index) => {
      const button = el(
        "button",
        { class: "alternative-button", "data-index": String(index) },
        [text],
      ) as HTMLButtonElement;
      button.disabled = !controls.includes("choose_alternative");
      button.addEventListener("click", () =>
        handlers.onDecision({ action: "choose_alternative", index }),
      );
      list.append(el("li", {}, [button]));
    });
    panel.append(list);
  }
  return panel;
}

function renderTimeline(view: SessionView): HTMLElement {
  const panel = el("section", { class: "panel timeline-panel" });
  panel.append(el("h2", {}, ["Stages"]));
  const list = el("ul", { class: "stage-timeline" });
  for (const entry of view.stages) {
    list.append(
      el("li", { class: `stage stage-${entry.status}`, "data-stage": entry.stage }, [
        `${entry.stage}: ${entry.status}${entry.detail ? ` (${entry.detail})` : ""}`,
      ]),
    );
  }
  panel.append(list);
  return panel;
}

function renderGraph(view: SessionView): HTMLElement {
  const panel = el("section", { class: "panel graph-panel" });
  panel.append(el("h2", {}, ["Column mapping"]));
  const placed = layoutGraph(view.graph);
  const byId = new Map(placed.map((n) => [n.id, n]));
  const width = Math.max(...placed.map((n) => n.x), 0) + 1;
  const height = Math.max(...placed.map((n) => n.y), 0) + 1;
  const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.setAttribute("viewBox", `0 0 ${width * 180} ${height * 70 + 40}`);
  svg.setAttribute("class", "graph-svg");
  for (const edge of view.graph.edges) {
    for (const input of edge.inputs) {
      const from = byId.get(input);
      const to = byId.get(edge.output);
      if (!from || !to) continue;
      const line = document.createElementNS("http://www.w3.org/2000/svg", "line");
      line.setAttribute("x1", String(from.x * 180 + 130));
      line.setAttribute("y1", String(from.y * 70 + 30));
      line.setAttribute("x2", String(to.x * 180 + 10));
      line.setAttribute("y2", String(to.y * 70 + 30));
      line.setAttribute("class", edge.kind === "alias" ? "edge edge-alias" : "edge edge-execute");
      line.setAttribute("data-function", edge.function);
      line.setAttribute("data-kind", edge.kind);
      if (edge.kind === "alias") {
        line.setAttribute("stroke-dasharray", "6 4");
      }
      svg.append(line);
    }
  }
  for (const node of placed) {
    const group = document.createElementNS("http://www.w3.org/2000/svg", "g");
    group.setAttribute("class", "graph-node");
    group.setAttribute("data-column", node.name);
    const rect = document.createElementNS("http://www.w3.org/2000/svg", "rect");
    rect.setAttribute("x", String(node.x * 180 + 10));
    rect.setAttribute("y", String(node.y * 70 + 12));
    rect.setAttribute("width", "120");
    rect.setAttribute("height", "36");
    rect.setAttribute("rx", "6");
    const label = document.createElementNS("http://www.w3.org/2000/svg", "text");
    label.setAttribute("x", String(node.x * 180 + 70));
    label.setAttribute("y", String(node.y * 70 + 34));
    label.setAttribute("text-anchor", "middle");
    label.textContent = node.name;
    group.append(rect, label);
    svg.append(group);
  }
  panel.append(svg);
  return panel;
}

function renderResult(view: SessionView): HTMLElement {
  const panel = el("section", { class: "panel result-panel" });
  panel.append(el("h2", {}, ["Result"]));
  if (view.feedback) {
    panel.append(el("pre", { class: "abort-feedback" }, [view.feedback]));
    return panel;
  }
  if (!view.result) {
    panel.append(el("p", { class: "muted" }, ["No result yet."]));
    return panel;
  }
  if (view.sql) {
    panel.append(el("pre", { class: "generated-sql" }, [view.sql]));
  }
  const table = el("table", { class: "result-grid" });
  const head = el("tr");
  for (const column of view.result.columns) {
    head.append(el("th", {}, [column.name]));
  }
  table.append(el("thead", {}, [head]));
  const body = el("tbody");
  for (const row of view.result.rows) {
    const tr = el("tr");
    for (const cell of row) {
      tr.append(el("td", {}, [cell === null ? "NULL" : String(cell)]));
    }
    body.append(tr);
  }
  table.append(body);
  panel.append(table);
  const resolutions = Object.entries(view.result.metadata.placeholder_resolutions ?? {});
  if (resolutions.length > 0) {
    const notes = el("ul", { class: "resolution-notes" });
    for (const [name, resolution] of resolutions) {
      notes.append(el("li", {}, [`@${name}@ = ${resolution.value} (${resolution.note})`]));
    }
    panel.append(notes);
  }
  return panel;
}

function renderCosts(view: SessionView): HTMLElement {
  const panel = el("section", { class: "panel cost-panel" });
  panel.append(el("h2", {}, ["Costs"]));
  if (!view.costs) {
    panel.append(el("p", { class: "muted" }, ["No cost data yet."]));
    return panel;
  }
  const table = el("table", { class: "cost-grid" });
  const head = el("tr");
  for (const title of ["stage", "requests", "prompt", "completion", "dollars"]) {
    head.append(el("th", {}, [title]));
  }
  table.append(el("thead", {}, [head]));
  const body = el("tbody");
  for (const stage of view.costs.stages) {
    const tr = el("tr", { "data-stage": stage.stage });
    tr.append(el("td", {}, [stage.stage]));
    tr.append(el("td", {}, [String(stage.requests)]));
    tr.append(el("td", {}, [String(stage.prompt_tokens)]));
    tr.append(el("td", {}, [String(stage.completion_tokens)]));
    tr.append(el("td", {}, [stage.dollars.toFixed(6)]));
    body.append(tr);
  }
  const total = el("tr", { class: "cost-total" });
  total.append(el("td", {}, ["total"]));
  total.append(el("td", {}, [""]));
  total.append(el("td", {}, [String(view.costs.total.prompt_tokens)]));
  total.append(el("td", {}, [String(view.costs.total.completion_tokens)]));
  total.append(el("td", {}, [view.costs.total.dollars.toFixed(6)]));
  body.append(total);
  table.append(body);
  panel.append(table);
  return panel;
}

export function render(container: HTMLElement, view: SessionView, handlers: Handlers): void {
  container.replaceChildren(
    renderVerdictPanel(view, handlers),
    renderTimeline(view),
    renderGraph(view),
    renderResult(view),
    renderCosts(view),
  );
}
