// View-model construction and DOM rendering.
//
// The state table is a pure projection of the last GET /state payload:
// one row per filled slot (with its provenance) plus one "missing-mandatory"
// row per unfilled mandatory slot. No client-side inference.

import { DstResultPayload, StateView, TranscriptEntry } from "./api.js";

export interface StateRow {
  slot: string;
  value: string;
  status: string; // extracted | dont_care_default | carried_over | missing-mandatory
}

export function buildStateRows(state: StateView): StateRow[] {
  const rows: StateRow[] = [];
  for (const [slot, fill] of Object.entries(state.fills)) {
    rows.push({ slot, value: fill.value, status: fill.source });
  }
  for (const slot of state.missing_mandatory) {
    rows.push({ slot, value: "", status: "missing-mandatory" });
  }
  return rows;
}

export function renderTranscript(container: HTMLElement,
                                 entries: TranscriptEntry[]): void {
  container.innerHTML = "";
  for (const entry of entries) {
    container.appendChild(messageBubble(entry.speaker, entry.text));
  }
  container.scrollTop = container.scrollHeight;
}

export function appendMessage(container: HTMLElement, speaker: "user" | "system",
                              text: string): void {
  container.appendChild(messageBubble(speaker, text));
  container.scrollTop = container.scrollHeight;
}

function messageBubble(speaker: "user" | "system", text: string): HTMLElement {
  const bubble = document.createElement("div");
  bubble.className = `bubble ${speaker}`;
  bubble.textContent = text;
  // Persian and other RTL content lays out per message.
  bubble.dir = "auto";
  return bubble;
}

export function renderStateTable(table: HTMLElement, state: StateView,
                                 highlightSlot: string | null): void {
  const rows = buildStateRows(state);
  table.innerHTML = "";
  const head = document.createElement("tr");
  for (const label of ["slot", "value", "status"]) {
    const th = document.createElement("th");
    th.textContent = label;
    head.appendChild(th);
  }
  table.appendChild(head);
  for (const row of rows) {
    const tr = document.createElement("tr");
    tr.className = `row-${row.status}`;
    tr.dataset.slot = row.slot;
    if (row.slot === highlightSlot) {
      tr.classList.add("highlight");
    }
    for (const cell of [row.slot, row.value, row.status]) {
      const td = document.createElement("td");
      td.textContent = cell;
      td.dir = "auto";
      tr.appendChild(td);
    }
    table.appendChild(tr);
  }
}

export function readStateTable(table: HTMLElement): StateRow[] {
  const rows: StateRow[] = [];
  for (const tr of Array.from(table.querySelectorAll("tr")).slice(1)) {
    const cells = tr.querySelectorAll("td");
    rows.push({
      slot: cells[0]?.textContent ?? "",
      value: cells[1]?.textContent ?? "",
      status: cells[2]?.textContent ?? "",
    });
  }
  return rows;
}

export function renderVerdictBadge(badge: HTMLElement, verdict: string): void {
  badge.textContent = verdict;
  badge.className = `badge badge-${verdict}`;
}

export function renderIntent(element: HTMLElement, state: StateView): void {
  element.textContent = state.active_intent ?? "no active intent";
}

export function renderSqlPreview(element: HTMLElement,
                                 result: DstResultPayload | null): void {
  if (!result) {
    element.textContent = "";
    return;
  }
  const params = result.sql.params.map((p) => JSON.stringify(p)).join(", ");
  element.textContent = params
    ? `${result.sql.text}  -- [${params}]`
    : result.sql.text;
}

export function renderStatus(element: HTMLElement,
                             result: DstResultPayload | null): void {
  element.textContent = result ? result.dialogue_status : "";
  element.className = result ? `status status-${result.dialogue_status}` : "status";
}
