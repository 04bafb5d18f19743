// @vitest-environment happy-dom
import { beforeEach, describe, expect, it } from "vitest";

import type { PredictionRecord } from "../src/api.js";
import { renderConceptPanel, renderPredictionHeader } from "../src/concept_panel.js";
import { renderSweepChart } from "../src/sweep.js";
import { freshState, setToggle, type ToggleMode } from "../src/state.js";
import type { SweepTable } from "../src/api.js";

import prediction from "../fixtures/prediction_3.json";
import model from "../fixtures/model.json";
import sweepFixture from "../fixtures/sweep.json";

const record = prediction as unknown as PredictionRecord;
const names: string[] = (model as { concept_names: string[] }).concept_names;
const classNames: string[] = (model as { class_names: string[] }).class_names;
const sweep = sweepFixture as unknown as SweepTable;

let container: HTMLDivElement;

beforeEach(() => {
  container = document.createElement("div");
  document.body.replaceChildren(container);
});

function noop(): { onToggle: (k: number, m: ToggleMode) => void } {
  return { onToggle: () => undefined };
}

describe("concept panel", () => {
  it("renders one row per concept", () => {
    renderConceptPanel(container, record, names, new Map(), noop());
    expect(container.querySelectorAll(".concept-row")).toHaveLength(
      record.concept_scores.length,
    );
  });

  it("marks a tied-logit concept with the maximal badge", () => {
    const tied: PredictionRecord = {
      ...record,
      uncertainties: record.uncertainties.map((u, i) => (i === 0 ? 1.0 : u)),
    };
    renderConceptPanel(container, tied, names, new Map(), noop());
    const row = container.querySelector("#concept-row-0");
    expect(row?.querySelector(".uncertainty-badge")?.classList.contains("maximal")).toBe(true);
  });

  it("toggling then untoggling restores the original row state", () => {
    const fresh = freshState().overrides;
    renderConceptPanel(container, record, names, fresh, noop());
    const before = container.querySelector("#concept-row-2")?.innerHTML;

    const toggled = setToggle(fresh, 2, "present");
    renderConceptPanel(container, record, names, toggled, noop());
    const during = container.querySelector("#concept-row-2")?.innerHTML;
    expect(during).not.toBe(before);

    const restored = setToggle(toggled, 2, "model");
    renderConceptPanel(container, record, names, restored, noop());
    const after = container.querySelector("#concept-row-2")?.innerHTML;
    expect(after).toBe(before);
  });

  it("reflects score-bar widths from the server scores", () => {
    renderConceptPanel(container, record, names, new Map(), noop());
    const fill = container.querySelector<HTMLDivElement>("#concept-row-1 .score-fill");
    expect(fill?.style.width).toBe(`${(record.concept_scores[1] * 100).toFixed(1)}%`);
  });

  it("invokes the toggle callback with the clicked mode", () => {
    const calls: Array<[number, ToggleMode]> = [];
    renderConceptPanel(container, record, names, new Map(), {
      onToggle: (k, m) => calls.push([k, m]),
    });
    const btn = container.querySelector<HTMLButtonElement>(
      "#concept-row-0 .toggle-present",
    );
    btn?.click();
    expect(calls).toEqual([[0, "present"]]);
  });
});

describe("prediction header", () => {
  it("displays the class name for the server's predicted_class", () => {
    renderPredictionHeader(container, record, classNames, 0);
    const title = container.querySelector<HTMLDivElement>(".predicted-class");
    expect(title?.dataset.classIndex).toBe(String(record.predicted_class));
    expect(title?.textContent).toBe(classNames[record.predicted_class]);
  });

  it("reports the override count", () => {
    renderPredictionHeader(container, record, classNames, 3);
    expect(container.querySelector(".prediction-meta")?.textContent).toContain("3 overrides");
  });
});

describe("sweep chart rendering", () => {
  it("draws one point per (ratio, seed) and one mean line", () => {
    renderSweepChart(container, sweep);
    expect(container.querySelectorAll(".seed-point")).toHaveLength(
      sweep.ratios.length * sweep.seeds.length,
    );
    expect(container.querySelectorAll(".mean-line")).toHaveLength(1);
  });
});
