"""Quantized concept activation vector codebook.

Each concept k owns a (positive, negative) vector pair. The pairs are never
touched by gradient updates: they move only through exponential moving
averages of the latent vectors routed to each branch, or through checkpoint
loading. Selection routes each concept to one pair member, either by
thresholding the concept score or by an explicit override (the intervention
path).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation
from .numerics import seed_stream


@dataclass
class Codebook:
    """K concept vector pairs; vectors[k, 0] is q+ and vectors[k, 1] is q-."""

    vectors: np.ndarray          # (K, 2, d) float32
    decay: float = 0.95
    step: int = 0

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float32)
        if v.ndim != 3 or v.shape[1] != 2:
            raise ContractViolation(f"codebook must be (K, 2, d), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ContractViolation("codebook contains non-finite entries")
        if not 0.0 <= self.decay <= 1.0:
            raise ContractViolation(f"decay must lie in [0, 1], got {self.decay}")
        self.vectors = v

    @property
    def num_concepts(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[2]

    def copy(self) -> "Codebook":
        return Codebook(self.vectors.copy(), self.decay, self.step)


def init(num_concepts: int, dim: int, seed: int, decay: float = 0.95) -> Codebook:
    """Fresh codebook with entries i.i.d. uniform on [-1/sqrt(d), +1/sqrt(d)]."""
    if num_concepts < 1 or dim < 1:
        raise ContractViolation(
            f"need num_concepts >= 1 and dim >= 1, got ({num_concepts}, {dim})")
    bound = 1.0 / np.sqrt(dim)
    rng = seed_stream(seed, "codebook-init")
    vectors = rng.uniform(-bound, bound, size=(num_concepts, 2, dim))
    return Codebook(vectors.astype(np.float32), decay=decay, step=0)


def ema_update(codebook: Codebook, k: int, batch_v: np.ndarray,
               batch_labels: np.ndarray) -> Codebook:
    """Move concept k's pair toward the batch means of its routed latents.

    The positive vector absorbs the mean of latents labeled 1, the negative
    the mean of latents labeled 0; a branch with no batch members is left
    bit-identical. Mutates and returns `codebook`; the step counter advances
    once per call.
    """
    v = np.asarray(batch_v, dtype=np.float32)
    labels = np.asarray(batch_labels)
    if v.ndim != 2 or v.shape[0] == 0:
        raise ContractViolation(f"batch_v must be a non-empty (n, d) array, got {v.shape}")
    if v.shape[1] != codebook.dim:
        raise ContractViolation(
            f"latent dim {v.shape[1]} != codebook dim {codebook.dim}")
    if labels.shape != (v.shape[0],):
        raise ContractViolation(
            f"labels shape {labels.shape} does not align with batch of {v.shape[0]}")
    if not (0 <= k < codebook.num_concepts):
        raise ContractViolation(f"concept index {k} out of range")

    eta = np.float32(codebook.decay)
    for branch, wanted in ((0, 1), (1, 0)):
        mask = labels == wanted
        if np.any(mask):
            m = v[mask].mean(axis=0, dtype=np.float64).astype(np.float32)
            codebook.vectors[k, branch] = eta * codebook.vectors[k, branch] + (1 - eta) * m
    codebook.step += 1
    return codebook


def select(codebook: Codebook, scores, overrides: dict[int, int] | None = None) -> np.ndarray:
    """Pick one pair member per concept: q+ when the score exceeds 0.5 (ties
    go to q+), or the member an override names. Returns a (K, d) array."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (codebook.num_concepts,):
        raise ContractViolation(
            f"expected {codebook.num_concepts} scores, got shape {scores.shape}")
    if np.any(scores < 0.0) or np.any(scores > 1.0):
        raise ContractViolation("scores must lie in [0, 1]")
    branch = np.where(scores >= 0.5, 0, 1)
    if overrides:
        for k, val in overrides.items():
            if not (0 <= int(k) < codebook.num_concepts):
                raise ContractViolation(f"override key {k} out of range")
            if int(val) not in (0, 1):
                raise ContractViolation(f"override value for concept {k} must be 0 or 1")
            branch[int(k)] = 0 if int(val) == 1 else 1
    return codebook.vectors[np.arange(codebook.num_concepts), branch].copy()


def select_batch(codebook: Codebook, scores: np.ndarray,
                 overrides_branch: np.ndarray | None = None) -> np.ndarray:
    """Vectorized selection for (B, K) score matrices; overrides_branch is an
    optional (B, K) int array with -1 for "use the score"."""
    scores = np.asarray(scores)
    branch = np.where(scores >= 0.5, 0, 1)
    if overrides_branch is not None:
        branch = np.where(overrides_branch >= 0, overrides_branch, branch)
    k_idx = np.arange(codebook.num_concepts)[None, :]
    return codebook.vectors[k_idx, branch]  # (B, K, d)
