"""Synthetic concept-structured classification data.

Each class owns a binary concept prototype (pairwise Hamming distance >= 3).
A sample draws a class uniformly, corrupts the prototype with per-bit flips,
and embeds the resulting +-1 concept pattern into feature space through a
fixed matrix with orthonormal columns, plus observation noise and pure-noise
nuisance dimensions. Flip masks are resampled until the corrupted pattern
remains uniquely closest to its own prototype, so the concept labels always
determine the class; this keeps full ground-truth intervention a sufficient
statistic for classification.

Shift variants disturb only the nuisance dimensions, leaving signal,
concepts, and labels untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ContractViolation, GenerationError
from .numerics import seed_stream
from .serialize import read_container, write_container

_PROTO_MIN_DIST = 3
_FLIP_RETRIES = 1000


@dataclass
class DatasetConfig:
    num_concepts: int = 8
    num_classes: int = 10
    input_dim: int = 32
    nuisance_dims: int = 8
    train_size: int = 2000
    test_size: int = 500
    concept_flip_prob: float = 0.05
    observation_noise_std: float = 0.1
    seed: int = 0

    def validate(self) -> "DatasetConfig":
        if self.num_classes > 2 ** self.num_concepts:
            raise ContractViolation(
                f"num_classes {self.num_classes} exceeds 2^K = {2 ** self.num_concepts}")
        if self.num_classes > 256:
            raise ContractViolation("num_classes above 256 not supported by the file format")
        if not 0 <= self.nuisance_dims < self.input_dim:
            raise ContractViolation(
                f"nuisance_dims {self.nuisance_dims} must be < input_dim {self.input_dim}")
        if self.input_dim - self.nuisance_dims < self.num_concepts:
            raise ContractViolation(
                "signal dims must be >= num_concepts for orthonormal concept columns")
        if not 0.0 <= self.concept_flip_prob < 0.5:
            raise ContractViolation("concept_flip_prob must lie in [0, 0.5)")
        if self.observation_noise_std < 0:
            raise ContractViolation("observation_noise_std must be >= 0")
        if self.train_size < 1 or self.test_size < 1:
            raise ContractViolation("split sizes must be positive")
        return self


@dataclass
class SyntheticDataset:
    X: np.ndarray            # (N, D) float32
    C_star: np.ndarray       # (N, K) uint8
    y_star: np.ndarray       # (N,) uint8
    prototypes: np.ndarray   # (M, K) uint8
    split: str
    config: DatasetConfig

    @property
    def num_samples(self) -> int:
        return self.X.shape[0]

    @property
    def num_concepts(self) -> int:
        return self.C_star.shape[1]

    @property
    def signal_dims(self) -> int:
        return self.config.input_dim - self.config.nuisance_dims


def _sample_prototypes(rng: np.random.Generator, num_classes: int,
                       num_concepts: int) -> np.ndarray:
    """Greedy rejection sampling of a prototype set with min Hamming distance 3."""
    for _ in range(50):
        rows: list[np.ndarray] = []
        stale = 0
        while stale < 2000:
            cand = rng.integers(0, 2, size=num_concepts, dtype=np.uint8)
            if all(int(np.sum(cand != r)) >= _PROTO_MIN_DIST for r in rows):
                rows.append(cand)
                stale = 0
                if len(rows) == num_classes:
                    return np.stack(rows)
            else:
                stale += 1
    raise GenerationError(
        f"could not place {num_classes} prototypes of length {num_concepts} "
        f"with pairwise Hamming distance >= {_PROTO_MIN_DIST}")


def _mixing_matrix(rng: np.random.Generator, signal_dims: int,
                   num_concepts: int) -> np.ndarray:
    """Fixed (signal_dims, K) matrix with orthonormal columns."""
    gauss = rng.standard_normal((signal_dims, num_concepts))
    q, r = np.linalg.qr(gauss)
    q = q * np.sign(np.diag(r))  # pin the QR sign convention
    return q[:, :num_concepts]


def _corrupt(rng: np.random.Generator, proto: np.ndarray, prototypes: np.ndarray,
             y: int, flip_prob: float) -> np.ndarray:
    """I.i.d. bit flips, resampled until the result stays uniquely decodable."""
    if flip_prob == 0.0:
        return proto.copy()
    for _ in range(_FLIP_RETRIES):
        mask = rng.random(proto.shape[0]) < flip_prob
        c = proto ^ mask.astype(np.uint8)
        dists = np.sum(prototypes != c[None, :], axis=1)
        if dists[y] < np.min(np.delete(dists, y)):
            return c
    raise GenerationError("could not draw a decodable flip mask")


def _build_split(config: DatasetConfig, prototypes: np.ndarray, mix: np.ndarray,
                 size: int, split: str) -> SyntheticDataset:
    rng = seed_stream(config.seed, "samples", split)
    K = config.num_concepts
    sig = config.input_dim - config.nuisance_dims

    y = rng.integers(0, config.num_classes, size=size).astype(np.uint8)
    C = np.empty((size, K), dtype=np.uint8)
    for i in range(size):
        C[i] = _corrupt(rng, prototypes[y[i]], prototypes, int(y[i]),
                        config.concept_flip_prob)

    signal = (2.0 * C - 1.0) @ mix.T
    signal = signal + rng.standard_normal((size, sig)) * config.observation_noise_std
    nuisance = rng.standard_normal((size, config.nuisance_dims))
    X = np.concatenate([signal, nuisance], axis=1).astype(np.float32)
    return SyntheticDataset(X=X, C_star=C, y_star=y, prototypes=prototypes.copy(),
                            split=split, config=config)


def generate(config: DatasetConfig) -> tuple[SyntheticDataset, SyntheticDataset]:
    """Deterministic (train, test) pair; both splits share prototypes and mixing."""
    config.validate()
    proto_rng = seed_stream(config.seed, "prototypes")
    prototypes = _sample_prototypes(proto_rng, config.num_classes, config.num_concepts)
    mix = _mixing_matrix(seed_stream(config.seed, "mixing"),
                         config.input_dim - config.nuisance_dims, config.num_concepts)
    train = _build_split(config, prototypes, mix, config.train_size, "train")
    test = _build_split(config, prototypes, mix, config.test_size, "test")
    return train, test


def shift_variant(dataset: SyntheticDataset, mode: str,
                  seed: int | None = None) -> SyntheticDataset:
    """Nuisance-only distribution shift: zero them out or redraw them far away."""
    if dataset.config.nuisance_dims == 0:
        raise ContractViolation("dataset has no nuisance dims to shift")
    if mode not in ("black", "random"):
        raise ContractViolation(f"unknown shift mode '{mode}'")
    X = dataset.X.copy()
    nuis = slice(dataset.signal_dims, dataset.config.input_dim)
    if mode == "black":
        X[:, nuis] = 0.0
    else:
        rng = seed_stream(dataset.config.seed if seed is None else seed,
                          "shift-random", dataset.split)
        X[:, nuis] = (rng.standard_normal((dataset.num_samples,
                                           dataset.config.nuisance_dims)) + 3.0
                      ).astype(np.float32)
    return SyntheticDataset(X=X, C_star=dataset.C_star.copy(),
                            y_star=dataset.y_star.copy(),
                            prototypes=dataset.prototypes.copy(),
                            split=f"{dataset.split}-{mode}", config=dataset.config)


def save(dataset: SyntheticDataset, path) -> None:
    meta = {
        "kind": "dataset",
        "split": dataset.split,
        "config": asdict(dataset.config),
    }
    write_container(path, meta, {
        "X": dataset.X,
        "C_star": dataset.C_star,
        "y_star": dataset.y_star,
        "prototypes": dataset.prototypes,
    })


def load(path) -> SyntheticDataset:
    meta, arrays = read_container(path)
    if meta.get("kind") != "dataset":
        raise ContractViolation(f"{path} is not a dataset file")
    config = DatasetConfig(**meta["config"])
    return SyntheticDataset(X=arrays["X"], C_star=arrays["C_star"],
                            y_star=arrays["y_star"], prototypes=arrays["prototypes"],
                            split=meta["split"], config=config)
