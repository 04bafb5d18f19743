/**
 * Typed client for the concept-bottleneck inspection API.
 */

export interface PredictionRecord {
  sample_id?: number;
  concept_scores: number[];
  energy_logits: [number, number][];
  composed_energies: number[];
  uncertainties: number[];
  class_logits: number[];
  predicted_class: number;
  overrides_applied: Record<string, number>;
}

export interface ModelSummary {
  num_concepts: number;
  num_classes: number;
  input_dim: number;
  latent_dim: number;
  parameter_counts: Record<string, number>;
  total_parameters: number;
  dataset_sizes: Record<string, number>;
  concept_names: string[];
  class_names: string[];
}

export interface SampleItem {
  id: number;
  class_label: number;
  concept_labels: number[];
}

export interface SampleListing {
  split: string;
  total: number;
  offset: number;
  items: SampleItem[];
}

export interface SweepTable {
  ratios: number[];
  strategy: string;
  seeds: number[];
  accuracy_per_seed: number[][];
  mean: number[];
  ci95: number[];
}

export interface SweepRequest {
  ratios: number[];
  strategy: string;
  seeds: number[];
  split?: string;
}

export class ApiRequestError extends Error {
  constructor(
    public code: string,
    message: string,
    public status: number,
  ) {
    super(message);
  }
}

async function parseOrThrow<T>(response: Response): Promise<T> {
  const body = await response.json();
  if (!response.ok) {
    const code = typeof body?.code === "string" ? body.code : "server_error";
    const message = typeof body?.message === "string" ? body.message : response.statusText;
    throw new ApiRequestError(code, message, response.status);
  }
  return body as T;
}

export class ApiClient {
  constructor(private base: string = "") {}

  private url(path: string): string {
    return `${this.base}${path}`;
  }

  getModel(): Promise<ModelSummary> {
    return fetch(this.url("/api/model")).then((r) => parseOrThrow<ModelSummary>(r));
  }

  getSamples(split = "test", offset = 0, limit = 50): Promise<SampleListing> {
    const q = new URLSearchParams({ split, offset: String(offset), limit: String(limit) });
    return fetch(this.url(`/api/samples?${q}`)).then((r) => parseOrThrow<SampleListing>(r));
  }

  getPrediction(sampleId: number, split = "test"): Promise<PredictionRecord> {
    const q = new URLSearchParams({ split });
    return fetch(this.url(`/api/predict/${sampleId}?${q}`)).then((r) =>
      parseOrThrow<PredictionRecord>(r),
    );
  }

  postIntervention(
    sampleId: number,
    overrides: Record<string, number>,
    split = "test",
  ): Promise<PredictionRecord> {
    const q = new URLSearchParams({ split });
    return fetch(this.url(`/api/predict/${sampleId}?${q}`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ overrides }),
    }).then((r) => parseOrThrow<PredictionRecord>(r));
  }

  postSweep(request: SweepRequest): Promise<SweepTable> {
    return fetch(this.url("/api/sweep"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    }).then((r) => parseOrThrow<SweepTable>(r));
  }
}
