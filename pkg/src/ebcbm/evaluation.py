"""Evaluation: metrics, intervention sweeps, energy histograms, neighbors,
embedding export, and the nuisance-shift robustness harness.

Sweeps override concepts with ground-truth routing. For the random strategy
each (seed, sample) draws one concept ordering and a ratio r overrides the
first ceil(r*K) concepts of that ordering, so larger ratios extend smaller
ones; the uncertainty strategy orders concepts by descending model
uncertainty. Accuracies are aggregated per ratio per seed with mean and a
1.96-standard-error interval across seeds.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import datagen, pipeline
from .errors import ContractViolation
from .numerics import seed_stream

STRATEGIES = ("random", "uncertainty_desc")


@dataclass
class SweepResult:
    ratios: list[float]
    strategy: str
    seeds: list[int]
    accuracy: np.ndarray          # (num_seeds, num_ratios)
    mean: np.ndarray              # (num_ratios,)
    ci95: np.ndarray              # (num_ratios,)

    def to_json_dict(self) -> dict:
        return {
            "ratios": [float(r) for r in self.ratios],
            "strategy": self.strategy,
            "seeds": [int(s) for s in self.seeds],
            "accuracy_per_seed": [[float(a) for a in row] for row in self.accuracy],
            "mean": [float(m) for m in self.mean],
            "ci95": [float(c) for c in self.ci95],
        }


def metrics(records: list[pipeline.PredictionRecord], C_star: np.ndarray,
            y_star: np.ndarray) -> tuple[float, float, float]:
    """(concept accuracy, task accuracy, mean uncertainty) over records."""
    C_star = np.asarray(C_star)
    y_star = np.asarray(y_star)
    if len(records) != C_star.shape[0] or len(records) != y_star.shape[0]:
        raise ContractViolation(
            f"{len(records)} records vs {C_star.shape[0]} concept rows "
            f"and {y_star.shape[0]} labels")
    scores = np.stack([r.concept_scores for r in records])
    preds = np.array([r.predicted_class for r in records])
    uncerts = np.stack([r.uncertainties for r in records])
    concept_acc = float(np.mean((scores > 0.5) == (C_star > 0.5)))
    task_acc = float(np.mean(preds == y_star))
    return concept_acc, task_acc, float(uncerts.mean())


def dataset_metrics(params: pipeline.ModelParams,
                    dataset: datagen.SyntheticDataset) -> dict:
    """Vectorized metrics over a whole split (deterministic, eps = 0)."""
    raw = pipeline.predict_batch(params, dataset.X)
    concept_acc = float(np.mean((raw["scores"] > 0.5) == (dataset.C_star > 0.5)))
    task_acc = float(np.mean(raw["predicted"] == dataset.y_star))
    return {
        "split": dataset.split,
        "num_samples": int(dataset.num_samples),
        "concept_accuracy": concept_acc,
        "task_accuracy": task_acc,
        "mean_uncertainty": float(raw["uncertainty"].mean()),
        "mean_composed_energy": float(raw["composed"].mean()),
    }


def intervention_sweep(params: pipeline.ModelParams,
                       dataset: datagen.SyntheticDataset,
                       ratios, strategy: str = "random",
                       seeds=(10, 11, 12)) -> SweepResult:
    ratios = [float(r) for r in ratios]
    if any(r < 0.0 or r > 1.0 for r in ratios):
        raise ContractViolation("ratios must lie in [0, 1]")
    if strategy not in STRATEGIES:
        raise ContractViolation(f"unknown strategy '{strategy}'")
    seeds = [int(s) for s in seeds]
    B, K = dataset.C_star.shape
    gt_branch = np.where(dataset.C_star == 1, 0, 1)

    if strategy == "uncertainty_desc":
        base = pipeline.predict_batch(params, dataset.X)
        uncert = base["uncertainty"]

    accuracy = np.zeros((len(seeds), len(ratios)))
    for si, seed in enumerate(seeds):
        if strategy == "random":
            keys = seed_stream(seed, "intervention-order").random((B, K))
            order = np.argsort(keys, axis=1)
        else:
            order = np.argsort(-uncert, axis=1, kind="stable")
        for ri, r in enumerate(ratios):
            m = math.ceil(r * K)
            branch = np.full((B, K), -1, dtype=np.int64)
            if m > 0:
                rows = np.repeat(np.arange(B), m)
                cols = order[:, :m].reshape(-1)
                branch[rows, cols] = gt_branch[rows, cols]
            raw = pipeline.predict_batch(params, dataset.X, overrides_branch=branch)
            accuracy[si, ri] = float(np.mean(raw["predicted"] == dataset.y_star))

    mean = accuracy.mean(axis=0)
    if len(seeds) > 1:
        stderr = accuracy.std(axis=0, ddof=1) / math.sqrt(len(seeds))
    else:
        stderr = np.zeros(len(ratios))
    return SweepResult(ratios=ratios, strategy=strategy, seeds=seeds,
                       accuracy=accuracy, mean=mean, ci95=1.96 * stderr)


def energy_histogram(params: pipeline.ModelParams,
                     dataset: datagen.SyntheticDataset, concept_k: int,
                     bins: int, edges: np.ndarray | None = None) -> dict:
    """Histogram of composed energies for one concept. Pass `edges` computed
    from a reference split to keep variants comparable on shared bins."""
    if bins < 2:
        raise ContractViolation(f"need at least 2 bins, got {bins}")
    if dataset.num_samples == 0:
        raise ContractViolation("empty dataset")
    if not (0 <= concept_k < dataset.num_concepts):
        raise ContractViolation(f"concept index {concept_k} out of range")
    raw = pipeline.predict_batch(params, dataset.X)
    energies = raw["composed"][:, concept_k]
    if edges is None:
        lo, hi = float(energies.min()), float(energies.max())
        pad = 0.05 * max(hi - lo, 1e-6)
        edges = np.linspace(lo - pad, hi + pad, bins + 1)
    else:
        edges = np.asarray(edges, dtype=np.float64)
    counts, _ = np.histogram(energies, bins=edges)
    return {
        "concept": int(concept_k),
        "split": dataset.split,
        "edges": [float(e) for e in edges],
        "counts": [int(c) for c in counts],
        "below": int(np.sum(energies < edges[0])),
        "above": int(np.sum(energies > edges[-1])),
    }


def concept_latents(params: pipeline.ModelParams,
                    dataset: datagen.SyntheticDataset) -> np.ndarray:
    """Deterministic (N, K, d) concept latents (posterior means)."""
    raw = pipeline.predict_batch(params, dataset.X)
    return raw["latents"]


def nearest_neighbors(params: pipeline.ModelParams,
                      dataset: datagen.SyntheticDataset, concept_k: int,
                      query_index: int, n: int) -> list[tuple[int, float]]:
    """The n samples whose concept-k latents sit closest to the query's,
    ascending by Euclidean distance, ties broken by lower index."""
    N = dataset.num_samples
    if not (0 <= query_index < N):
        raise ContractViolation(f"query index {query_index} out of range")
    if n < 1 or n > N - 1:
        raise ContractViolation(f"n must lie in [1, {N - 1}], got {n}")
    if not (0 <= concept_k < dataset.num_concepts):
        raise ContractViolation(f"concept index {concept_k} out of range")
    v = concept_latents(params, dataset)[:, concept_k, :].astype(np.float64)
    dist = np.sqrt(((v - v[query_index]) ** 2).sum(axis=1))
    order = np.lexsort((np.arange(N), dist))
    order = order[order != query_index][:n]
    return [(int(i), float(dist[i])) for i in order]


def export_embeddings(params: pipeline.ModelParams,
                      dataset: datagen.SyntheticDataset, path) -> None:
    """One CSV row per (sample, concept): label, selected vector, latent."""
    raw = pipeline.predict_batch(params, dataset.X)
    latents, selected = raw["latents"], raw["selected"]
    d = params.config.latent_dim
    header = (["sample_id", "concept_id", "concept_label"]
              + [f"sel_{j}" for j in range(d)] + [f"v_{j}" for j in range(d)])
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for i in range(dataset.num_samples):
            for k in range(dataset.num_concepts):
                row = [i, k, int(dataset.C_star[i, k])]
                row += [f"{x:.9g}" for x in selected[i, k]]
                row += [f"{x:.9g}" for x in latents[i, k]]
                writer.writerow(row)


def robustness_report(params: pipeline.ModelParams,
                      dataset: datagen.SyntheticDataset) -> dict:
    """Metrics on the original split and both nuisance-shift variants."""
    rows = [dataset_metrics(params, dataset)]
    for mode in ("black", "random"):
        rows.append(dataset_metrics(params, datagen.shift_variant(dataset, mode)))
    return {"rows": rows}


def format_table(rows: list[dict]) -> str:
    """Aligned-column plain-text rendering of a list of flat dicts."""
    if not rows:
        return ""
    cols = list(rows[0].keys())
    rendered = [[_cell(r[c]) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in rendered))
              for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    for row in rendered:
        lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)))
    return "\n".join(lines) + "\n"


def _cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"
