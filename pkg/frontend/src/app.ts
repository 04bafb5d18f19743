/**
 * Intervention explorer wiring: sample browser, concept panel with live
 * overrides, prediction header, and the sweep chart with CSV export.
 *
 * At most one intervention request is in flight per sample; a newer toggle
 * supersedes the pending one (stale responses are dropped by token).
 */

import { ApiClient, ApiRequestError, type ModelSummary, type SampleItem } from "./api.js";
import { renderConceptPanel, renderPredictionHeader } from "./concept_panel.js";
import { csvDownloadHref, renderSweepChart, sweepToCsv } from "./sweep.js";
import { freshState, overridesBody, setToggle, type SessionState, type ToggleMode } from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function boot(): void {
  const params = new URLSearchParams(window.location.search);
  const client = new ApiClient(params.get("api") ?? "");
  const state: SessionState = freshState(params.get("split") ?? "test");
  let model: ModelSummary | null = null;
  let requestToken = 0;
  let invalidConcept: number | null = null;

  const banner = el<HTMLDivElement>("error-banner");
  const samplesBox = el<HTMLSelectElement>("sample-select");
  const header = el<HTMLDivElement>("prediction-header");
  const panel = el<HTMLDivElement>("concept-panel");
  const clearBtn = el<HTMLButtonElement>("clear-overrides");
  const sweepBtn = el<HTMLButtonElement>("run-sweep");
  const csvLink = el<HTMLAnchorElement>("csv-download");
  const chartBox = el<HTMLDivElement>("sweep-chart-box");

  function showError(message: string): void {
    banner.textContent = message;
    banner.style.display = "block";
  }

  function clearError(): void {
    banner.style.display = "none";
  }

  function redraw(): void {
    if (!state.record || !model) return;
    renderPredictionHeader(header, state.record, model.class_names, state.overrides.size);
    renderConceptPanel(panel, state.record, model.concept_names, state.overrides, {
      onToggle: handleToggle,
    }, invalidConcept);
  }

  async function selectSample(id: number): Promise<void> {
    state.sampleId = id;
    state.overrides = new Map();
    invalidConcept = null;
    try {
      state.record = await client.getPrediction(id, state.split);
      clearError();
    } catch (e) {
      showError(`failed to fetch prediction: ${(e as Error).message}`);
      return; // stale view preserved
    }
    redraw();
  }

  function handleToggle(concept: number, mode: ToggleMode): void {
    if (state.sampleId === null) return;
    state.overrides = setToggle(state.overrides, concept, mode);
    invalidConcept = null;
    redraw(); // optimistic toggle highlight; numbers update on response
    void applyIntervention();
  }

  async function applyIntervention(): Promise<void> {
    if (state.sampleId === null) return;
    const token = ++requestToken;
    const body = overridesBody(state.overrides);
    try {
      const record = await client.postIntervention(state.sampleId, body, state.split);
      if (token !== requestToken) return; // superseded by a newer toggle
      state.record = record; // displayed record is the server response verbatim
      clearError();
      redraw();
    } catch (e) {
      if (token !== requestToken) return;
      if (e instanceof ApiRequestError && e.code === "bad_request") {
        const m = e.message.match(/concept '?(\d+)'?/);
        invalidConcept = m ? Number(m[1]) : null;
        showError(e.message);
        redraw();
      } else {
        showError(`intervention failed: ${(e as Error).message}`);
      }
    }
  }

  clearBtn.addEventListener("click", () => {
    if (state.sampleId === null) return;
    state.overrides = new Map();
    invalidConcept = null;
    redraw();
    void applyIntervention(); // empty overrides equal the unmodified prediction
  });

  samplesBox.addEventListener("change", () => {
    void selectSample(Number(samplesBox.value));
  });

  sweepBtn.addEventListener("click", () => {
    void runSweep();
  });

  async function runSweep(): Promise<void> {
    const ratios = el<HTMLInputElement>("sweep-ratios")
      .value.split(",").map((s) => Number(s.trim())).filter((x) => !Number.isNaN(x));
    const seeds = el<HTMLInputElement>("sweep-seeds")
      .value.split(",").map((s) => Number(s.trim())).filter((x) => !Number.isNaN(x));
    const strategy = el<HTMLSelectElement>("sweep-strategy").value;
    sweepBtn.disabled = true;
    sweepBtn.textContent = "running...";
    try {
      state.sweep = await client.postSweep({ ratios, strategy, seeds, split: state.split });
      clearError();
      renderSweepChart(chartBox, state.sweep);
      const csv = sweepToCsv(state.sweep);
      csvLink.href = csvDownloadHref(csv);
      csvLink.download = "sweep.csv";
      csvLink.style.display = "inline";
    } catch (e) {
      showError(`sweep failed: ${(e as Error).message} (retry when the server is free)`);
    } finally {
      sweepBtn.disabled = false;
      sweepBtn.textContent = "Run sweep";
    }
  }

  async function init(): Promise<void> {
    try {
      model = await client.getModel();
      const listing = await client.getSamples(state.split, 0, 200);
      samplesBox.replaceChildren(
        ...listing.items.map((item: SampleItem) => {
          const opt = document.createElement("option");
          opt.value = String(item.id);
          opt.textContent = `#${item.id} (label: ${model!.class_names[item.class_label]})`;
          return opt;
        }),
      );
      el<HTMLSpanElement>("model-info").textContent =
        `${model.num_concepts} concepts, ${model.num_classes} classes, ` +
        `${model.total_parameters.toLocaleString()} parameters, ` +
        `${listing.total} ${state.split} samples`;
      if (listing.items.length > 0) {
        await selectSample(listing.items[0].id);
      }
    } catch (e) {
      showError(`cannot reach the API: ${(e as Error).message}`);
    }
  }

  void init();
}

if (typeof document !== "undefined" && document.getElementById("concept-panel")) {
  boot();
}
