import { describe, expect, it } from "vitest";

import { StateView } from "../src/api.js";
import {
  buildStateRows,
  readStateTable,
  renderStateTable,
  renderSqlPreview,
  appendMessage,
} from "../src/view.js";

function state(partial: Partial<StateView>): StateView {
  return {
    session_id: "s",
    active_intent: null,
    pending: "none",
    turn_no: 0,
    fills: {},
    history: [],
    missing_mandatory: [],
    ...partial,
  };
}

describe("buildStateRows", () => {
  it("maps fills to rows with their provenance", () => {
    const rows = buildStateRows(state({
      fills: {
        city: { value: "Tehran", source: "extracted", turn_no: 1 },
        cuisine: { value: "kebab", source: "dont_care_default", turn_no: 2 },
      },
    }));
    expect(rows).toEqual([
      { slot: "city", value: "Tehran", status: "extracted" },
      { slot: "cuisine", value: "kebab", status: "dont_care_default" },
    ]);
  });

  it("appends missing-mandatory rows", () => {
    const rows = buildStateRows(state({
      fills: { city: { value: "Tehran", source: "extracted", turn_no: 1 } },
      missing_mandatory: ["cuisine"],
    }));
    expect(rows[1]).toEqual({ slot: "cuisine", value: "", status: "missing-mandatory" });
  });
});

describe("renderStateTable", () => {
  it("renders exactly the view-model rows, with optional highlight", () => {
    const table = document.createElement("table");
    const view = state({
      fills: { city: { value: "Tehran", source: "extracted", turn_no: 1 } },
      missing_mandatory: ["cuisine"],
    });
    renderStateTable(table, view, "cuisine");
    expect(readStateTable(table)).toEqual(buildStateRows(view));
    const highlighted = table.querySelector("tr.highlight") as HTMLElement;
    expect(highlighted.dataset.slot).toBe("cuisine");
  });
});

describe("renderSqlPreview", () => {
  it("shows text with params and clears on null", () => {
    const pre = document.createElement("pre");
    renderSqlPreview(pre, {
      dialogue_status: "complete",
      intent: "find_restaurant",
      state: { city: "Tehran" },
      sql: { text: "SELECT * FROM find_restaurant WHERE city = ?", params: ["Tehran"] },
      followup: null,
    });
    expect(pre.textContent).toContain("WHERE city = ?");
    expect(pre.textContent).toContain('"Tehran"');
    renderSqlPreview(pre, null);
    expect(pre.textContent).toBe("");
  });
});

describe("appendMessage", () => {
  it("keeps per-message direction automatic for RTL text", () => {
    const box = document.createElement("div");
    appendMessage(box, "user", "هوا چطور است تهران");
    const bubble = box.querySelector(".bubble") as HTMLElement;
    expect(bubble.dir).toBe("auto");
    expect(bubble.textContent).toBe("هوا چطور است تهران");
  });
});
