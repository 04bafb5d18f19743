/**
 * Concept panel: one row per concept with a score bar, an uncertainty badge,
 * and a three-state toggle (model / force-present / force-absent).
 *
 * Rows are ordered least-confident-first so the human sees the concepts the
 * model is unsure about before anything else. All numbers shown come from
 * the prediction record the server returned.
 */

import type { PredictionRecord } from "./api.js";
import {
  badgeColor,
  badgeLabel,
  conceptOrder,
  toggleModeOf,
  type ToggleMode,
} from "./state.js";

export interface PanelCallbacks {
  onToggle: (concept: number, mode: ToggleMode) => void;
}

const MODES: { mode: ToggleMode; label: string }[] = [
  { mode: "model", label: "Model" },
  { mode: "present", label: "Present" },
  { mode: "absent", label: "Absent" },
];

export function renderConceptPanel(
  container: HTMLElement,
  record: PredictionRecord,
  conceptNames: string[],
  overrides: Map<number, 0 | 1>,
  callbacks: PanelCallbacks,
  invalidConcept: number | null = null,
): void {
  container.replaceChildren();
  for (const k of conceptOrder(record)) {
    const row = document.createElement("div");
    row.className = "concept-row";
    row.id = `concept-row-${k}`;
    if (invalidConcept === k) row.classList.add("invalid");

    const name = document.createElement("span");
    name.className = "concept-name";
    name.textContent = conceptNames[k] ?? `concept_${k}`;
    row.appendChild(name);

    const bar = document.createElement("div");
    bar.className = "score-bar";
    const fill = document.createElement("div");
    fill.className = "score-fill";
    fill.style.width = `${(record.concept_scores[k] * 100).toFixed(1)}%`;
    bar.appendChild(fill);
    row.appendChild(bar);

    const score = document.createElement("span");
    score.className = "score-value";
    score.textContent = record.concept_scores[k].toFixed(3);
    row.appendChild(score);

    const badge = document.createElement("span");
    badge.className = "uncertainty-badge";
    const u = record.uncertainties[k];
    badge.style.backgroundColor = badgeColor(u);
    badge.textContent = `u=${badgeLabel(u)}`;
    if (u >= 1.0) badge.classList.add("maximal");
    badge.title = "uncertainty (1 = maximal)";
    row.appendChild(badge);

    const toggles = document.createElement("span");
    toggles.className = "toggle-group";
    const active = toggleModeOf(overrides, k);
    for (const { mode, label } of MODES) {
      const btn = document.createElement("button");
      btn.textContent = label;
      btn.className = `toggle toggle-${mode}`;
      if (mode === active) btn.classList.add("active");
      btn.addEventListener("click", () => callbacks.onToggle(k, mode));
      toggles.appendChild(btn);
    }
    row.appendChild(toggles);

    container.appendChild(row);
  }
}

export function renderPredictionHeader(
  container: HTMLElement,
  record: PredictionRecord,
  classNames: string[],
  overrideCount: number,
): void {
  const cls = record.predicted_class;
  container.replaceChildren();
  const title = document.createElement("div");
  title.className = "predicted-class";
  title.textContent = classNames[cls] ?? `class_${cls}`;
  title.dataset.classIndex = String(cls);
  container.appendChild(title);
  const sub = document.createElement("div");
  sub.className = "prediction-meta";
  sub.textContent =
    overrideCount === 0
      ? "model prediction (no overrides)"
      : `with ${overrideCount} override${overrideCount === 1 ? "" : "s"}`;
  container.appendChild(sub);
}
