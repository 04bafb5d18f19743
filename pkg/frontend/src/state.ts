/**
 * Session state and its pure update logic.
 *
 * The override map holds only concepts the user has touched; every displayed
 * number comes verbatim from a server response field (the client never
 * recomputes model math), so clearing all overrides and re-fetching restores
 * exactly the server's unmodified prediction.
 */

import type { PredictionRecord, SweepTable } from "./api.js";

export type ToggleMode = "model" | "present" | "absent";

export interface SessionState {
  split: string;
  sampleId: number | null;
  overrides: Map<number, 0 | 1>;
  record: PredictionRecord | null;
  sweep: SweepTable | null;
}

export function freshState(split = "test"): SessionState {
  return { split, sampleId: null, overrides: new Map(), record: null, sweep: null };
}

/** Apply one three-state toggle; "model" removes the concept from the map. */
export function setToggle(
  overrides: Map<number, 0 | 1>,
  concept: number,
  mode: ToggleMode,
): Map<number, 0 | 1> {
  const next = new Map(overrides);
  if (mode === "model") {
    next.delete(concept);
  } else {
    next.set(concept, mode === "present" ? 1 : 0);
  }
  return next;
}

export function toggleModeOf(overrides: Map<number, 0 | 1>, concept: number): ToggleMode {
  if (!overrides.has(concept)) return "model";
  return overrides.get(concept) === 1 ? "present" : "absent";
}

/** Request body for the intervention endpoint. */
export function overridesBody(overrides: Map<number, 0 | 1>): Record<string, number> {
  const body: Record<string, number> = {};
  for (const [k, v] of [...overrides.entries()].sort((a, b) => a[0] - b[0])) {
    body[String(k)] = v;
  }
  return body;
}

/** The UI displays exactly the server's predicted class, no client math. */
export function displayedClass(record: PredictionRecord): number {
  return record.predicted_class;
}

/** Concept row ordering: least confident first (descending uncertainty). */
export function conceptOrder(record: PredictionRecord): number[] {
  const idx = record.uncertainties.map((u, k) => k);
  idx.sort((a, b) => {
    const d = record.uncertainties[b] - record.uncertainties[a];
    return d !== 0 ? d : a - b;
  });
  return idx;
}

/** Badge color for an uncertainty in (0, 1]; u = 1 is maximal (deep red). */
export function badgeColor(u: number): string {
  const clamped = Math.max(0, Math.min(1, u));
  const hue = Math.round(120 * (1 - clamped)); // green 120 -> red 0
  return `hsl(${hue}, 85%, 42%)`;
}

export function badgeLabel(u: number): string {
  return u.toFixed(3);
}
