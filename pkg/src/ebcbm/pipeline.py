"""End-to-end model: backbone, concept encoders, vector selection, task head.

The backbone maps a feature vector to a shared latent z. Each concept encoder
scores its codebook pair from z; selection routes every concept to one pair
member, and the task head reads the concatenated selected vectors. With hard
selection the class logits depend on the routing bits alone, which is what
makes ground-truth intervention exact: overriding a concept swaps in the
codebook vector of the overridden branch and nothing else.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import concept_encoder as ce
from . import qcav
from .errors import ContractViolation
from .numerics import Tensor, concat, matmul, seed_stream
from .serialize import read_container, write_container


@dataclass
class ModelConfig:
    num_concepts: int = 8
    num_classes: int = 10
    input_dim: int = 32
    latent_dim: int = 16          # d, the concept/codebook dimension
    z_dim: int = 32
    backbone_hidden: int = 64
    energy_hidden: int = ce.ENERGY_HIDDEN
    soft_selection: bool = False
    direct_concept_head: bool = False   # energy path ablated
    seed: int = 0


@dataclass
class ModelParams:
    config: ModelConfig
    backbone_w1: Tensor
    backbone_b1: Tensor
    backbone_w2: Tensor
    backbone_b2: Tensor
    backbone_w3: Tensor
    backbone_b3: Tensor
    encoders: ce.ConceptEncoderParams
    task_w: Tensor                # (K*d, M)
    task_b: Tensor                # (M,)
    codebook: qcav.Codebook
    # capacity-matched direct concept head (d -> H -> 1), only when the
    # energy path is ablated
    direct_w1: Tensor | None = None
    direct_b1: Tensor | None = None
    direct_w2: Tensor | None = None
    direct_b2: Tensor | None = None

    def backbone_tensors(self) -> dict[str, Tensor]:
        return {
            "backbone.w1": self.backbone_w1, "backbone.b1": self.backbone_b1,
            "backbone.w2": self.backbone_w2, "backbone.b2": self.backbone_b2,
            "backbone.w3": self.backbone_w3, "backbone.b3": self.backbone_b3,
        }

    def trainable_tensors(self) -> dict[str, Tensor]:
        out = dict(self.backbone_tensors())
        out.update(self.encoders.tensors())
        out["task.w"] = self.task_w
        out["task.b"] = self.task_b
        if self.direct_w1 is not None:
            out["direct.w1"] = self.direct_w1
            out["direct.b1"] = self.direct_b1
            out["direct.w2"] = self.direct_w2
            out["direct.b2"] = self.direct_b2
        return out


@dataclass
class PredictionRecord:
    concept_scores: np.ndarray       # (K,) float64 in [0, 1]
    energy_logits: np.ndarray        # (K, 2): [:, 0] = e+, [:, 1] = e-
    composed_energies: np.ndarray    # (K,)
    uncertainties: np.ndarray        # (K,)
    class_logits: np.ndarray         # (M,)
    predicted_class: int
    overrides_applied: dict[int, int] = field(default_factory=dict)

    def to_json_dict(self, sample_id: int | None = None) -> dict:
        doc = {
            "concept_scores": [float(s) for s in self.concept_scores],
            "energy_logits": [[float(a), float(b)] for a, b in self.energy_logits],
            "composed_energies": [float(e) for e in self.composed_energies],
            "uncertainties": [float(u) for u in self.uncertainties],
            "class_logits": [float(l) for l in self.class_logits],
            "predicted_class": int(self.predicted_class),
            "overrides_applied": {str(k): int(v)
                                  for k, v in sorted(self.overrides_applied.items())},
        }
        if sample_id is not None:
            doc = {"sample_id": int(sample_id), **doc}
        return doc


def init_model(config: ModelConfig) -> ModelParams:
    cfg = config
    rng = seed_stream(cfg.seed, "model-init")

    def u(shape, fan_in):
        return Tensor(rng.uniform(-1.0 / np.sqrt(fan_in), 1.0 / np.sqrt(fan_in), shape))

    h = cfg.backbone_hidden
    enc = ce.init_params(cfg.num_concepts, cfg.z_dim, cfg.latent_dim,
                         seed_stream(cfg.seed, "encoder-init"))
    kd = cfg.num_concepts * cfg.latent_dim
    direct = {}
    if cfg.direct_concept_head:
        drng = seed_stream(cfg.seed, "direct-init")
        K, d, hd = cfg.num_concepts, cfg.latent_dim, cfg.energy_hidden
        b_in, b_hid = 1.0 / np.sqrt(d), 1.0 / np.sqrt(hd)
        direct = {
            "direct_w1": Tensor(drng.uniform(-b_in, b_in, (K, d, hd))),
            "direct_b1": Tensor(drng.uniform(-b_in, b_in, (K, 1, hd))),
            "direct_w2": Tensor(drng.uniform(-b_hid, b_hid, (K, hd, 1))),
            "direct_b2": Tensor(drng.uniform(-b_hid, b_hid, (K, 1, 1))),
        }
    return ModelParams(
        config=cfg,
        backbone_w1=u((cfg.input_dim, h), cfg.input_dim),
        backbone_b1=u((h,), cfg.input_dim),
        backbone_w2=u((h, h), h),
        backbone_b2=u((h,), h),
        backbone_w3=u((h, cfg.z_dim), h),
        backbone_b3=u((cfg.z_dim,), h),
        encoders=enc,
        task_w=u((kd, cfg.num_classes), kd),
        task_b=u((cfg.num_classes,), kd),
        codebook=qcav.init(cfg.num_concepts, cfg.latent_dim, cfg.seed),
        **direct,
    )


# -- forward paths -------------------------------------------------------------


def backbone_forward(params: ModelParams, x: Tensor) -> Tensor:
    h1 = (matmul(x, params.backbone_w1) + params.backbone_b1).silu()
    h2 = (matmul(h1, params.backbone_w2) + params.backbone_b2).silu()
    return matmul(h2, params.backbone_w3) + params.backbone_b3


def concept_logits_forward(params: ModelParams, v: Tensor) -> Tensor:
    """(K, B, 2) energy logits; the ablated variant emits (s, 0) so that
    softmax over the pair reproduces sigmoid(s)."""
    if params.config.direct_concept_head:
        hidden = (matmul(v, params.direct_w1) + params.direct_b1).silu()
        s = matmul(hidden, params.direct_w2) + params.direct_b2   # (K, B, 1)
        zero = Tensor(np.zeros_like(s.data))
        return concat([s, zero], axis=-1)
    return ce.logits_pair_batch(params.encoders, v, params.codebook.vectors)


def task_forward(params: ModelParams, selected: Tensor) -> Tensor:
    """Class logits from (B, K*d) selected concept vectors."""
    return matmul(selected, params.task_w) + params.task_b


def predict_batch(params: ModelParams, X: np.ndarray,
                  eps: np.ndarray | None = None,
                  overrides_branch: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """Vectorized forward pass over a (B, D) batch of inputs.

    Returns raw arrays: scores (B, K), logit pairs (B, K, 2), composed
    energies (B, K), uncertainties (B, K), class logits (B, M), predictions
    (B,). `overrides_branch` is a (B, K) int array, -1 where the model's own
    routing applies.
    """
    X = np.asarray(X, dtype=np.float32)
    if X.ndim != 2 or X.shape[1] != params.config.input_dim:
        raise ContractViolation(
            f"expected inputs of shape (B, {params.config.input_dim}), got {X.shape}")
    z = backbone_forward(params, Tensor(X))
    v = ce.encode_batch(params.encoders, z, eps)
    logits = concept_logits_forward(params, v)            # (K, B, 2)
    e = logits.data.astype(np.float64)
    e_plus, e_minus = e[..., 0], e[..., 1]
    with np.errstate(over="ignore"):
        scores = 1.0 / (1.0 + np.exp(np.clip(e_minus - e_plus, -700, 700)))
    m = np.maximum(e_plus, e_minus)
    composed = -(m + np.log(np.exp(e_plus - m) + np.exp(e_minus - m)))
    uncert = ce.uncertainty_from_logits(e_plus, e_minus)

    scores_bk = scores.T                                   # (B, K)
    if params.config.soft_selection and overrides_branch is None:
        w = scores_bk[..., None].astype(np.float32)
        sel = w * params.codebook.vectors[None, :, 0] + \
            (1.0 - w) * params.codebook.vectors[None, :, 1]
    else:
        sel = qcav.select_batch(params.codebook, scores_bk, overrides_branch)
    B = X.shape[0]
    flat = sel.reshape(B, -1).astype(np.float32)
    class_logits = task_forward(params, Tensor(flat)).data.astype(np.float64)
    preds = np.argmax(class_logits, axis=1)                # ties -> lowest index
    return {
        "scores": scores_bk,
        "energy_logits": np.stack([e_plus.T, e_minus.T], axis=-1),
        "composed": composed.T,
        "uncertainty": uncert.T,
        "class_logits": class_logits,
        "predicted": preds,
        "latents": np.transpose(v.data, (1, 0, 2)),        # (B, K, d)
        "selected": sel,                                   # (B, K, d)
    }


def _record_from_batch(raw: dict[str, np.ndarray], i: int,
                       overrides: dict[int, int]) -> PredictionRecord:
    return PredictionRecord(
        concept_scores=raw["scores"][i].copy(),
        energy_logits=raw["energy_logits"][i].copy(),
        composed_energies=raw["composed"][i].copy(),
        uncertainties=raw["uncertainty"][i].copy(),
        class_logits=raw["class_logits"][i].copy(),
        predicted_class=int(raw["predicted"][i]),
        overrides_applied=dict(overrides),
    )


def predict(x: np.ndarray, params: ModelParams, eps_mode: str = "zero",
            rng: np.random.Generator | None = None,
            mc_samples: int = 1) -> PredictionRecord:
    """Single-sample prediction; eps_mode "zero" is the deterministic default.

    "sample" draws one reparameterization noise per concept; "mc" averages
    the energy logits over `mc_samples` draws before scoring.
    """
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 1:
        raise ContractViolation(f"predict expects a single D-vector, got {x.shape}")
    K, d = params.config.num_concepts, params.config.latent_dim
    if eps_mode == "zero":
        raw = predict_batch(params, x[None, :], eps=None)
    elif eps_mode == "sample":
        if rng is None:
            raise ContractViolation("eps_mode 'sample' requires an rng")
        eps = rng.standard_normal((K, 1, d)).astype(np.float32)
        raw = predict_batch(params, x[None, :], eps=eps)
    elif eps_mode == "mc":
        if rng is None:
            raise ContractViolation("eps_mode 'mc' requires an rng")
        logit_sum = None
        for _ in range(max(1, mc_samples)):
            eps = rng.standard_normal((K, 1, d)).astype(np.float32)
            raw = predict_batch(params, x[None, :], eps=eps)
            cur = raw["energy_logits"]
            logit_sum = cur if logit_sum is None else logit_sum + cur
        mean_logits = logit_sum / max(1, mc_samples)
        return _record_from_logits(params, mean_logits[0], {})
    else:
        raise ContractViolation(f"unknown eps_mode '{eps_mode}'")
    return _record_from_batch(raw, 0, {})


def _record_from_logits(params: ModelParams, pairs: np.ndarray,
                        overrides: dict[int, int]) -> PredictionRecord:
    e_plus, e_minus = pairs[:, 0], pairs[:, 1]
    scores = 1.0 / (1.0 + np.exp(np.clip(e_minus - e_plus, -700, 700)))
    m = np.maximum(e_plus, e_minus)
    composed = -(m + np.log(np.exp(e_plus - m) + np.exp(e_minus - m)))
    sel = qcav.select(params.codebook, scores, overrides or None)
    logits = task_forward(params, Tensor(sel.reshape(1, -1))).data[0].astype(np.float64)
    return PredictionRecord(
        concept_scores=scores,
        energy_logits=pairs.astype(np.float64),
        composed_energies=composed,
        uncertainties=ce.uncertainty_from_logits(e_plus, e_minus),
        class_logits=logits,
        predicted_class=int(np.argmax(logits)),
        overrides_applied=dict(overrides),
    )


def intervene_predict(x: np.ndarray, params: ModelParams,
                      overrides: dict[int, int]) -> PredictionRecord:
    """Prediction with ground-truth routing for the overridden concepts.

    Scores, energies, and uncertainties still report the model's own
    judgment; only the selection (and through it the class logits) changes.
    """
    x = np.asarray(x, dtype=np.float32)
    K = params.config.num_concepts
    clean: dict[int, int] = {}
    for k, val in (overrides or {}).items():
        ki, vi = int(k), int(val)
        if not (0 <= ki < K):
            raise ContractViolation(f"override key {k} out of range")
        if vi not in (0, 1):
            raise ContractViolation(f"override value for concept {k} must be 0 or 1")
        clean[ki] = vi
    branch = np.full((1, K), -1, dtype=np.int64)
    for k, vi in clean.items():
        branch[0, k] = 0 if vi == 1 else 1
    raw = predict_batch(params, x[None, :], eps=None, overrides_branch=branch)
    return _record_from_batch(raw, 0, clean)


# -- reporting and persistence ---------------------------------------------


def model_info(params: ModelParams, latency_runs: int = 100) -> dict:
    """Parameter counts per module plus mean single-sample predict latency."""
    groups = {
        "backbone": params.backbone_tensors(),
        "concept_encoders": params.encoders.tensors(),
        "task_head": {"task.w": params.task_w, "task.b": params.task_b},
    }
    if params.direct_w1 is not None:
        groups["direct_head"] = {
            "direct.w1": params.direct_w1, "direct.b1": params.direct_b1,
            "direct.w2": params.direct_w2, "direct.b2": params.direct_b2}
    counts = {name: int(sum(t.size for t in tensors.values()))
              for name, tensors in groups.items()}
    counts["codebook"] = int(params.codebook.vectors.size)
    total = int(sum(counts.values()))
    x = np.zeros(params.config.input_dim, dtype=np.float32)
    predict(x, params)  # warm-up
    t0 = time.perf_counter()
    for _ in range(latency_runs):
        predict(x, params)
    latency_ms = (time.perf_counter() - t0) / latency_runs * 1e3
    return {
        "parameter_counts": counts,
        "total_parameters": total,
        "predict_latency_ms": latency_ms,
        "num_concepts": params.config.num_concepts,
        "num_classes": params.config.num_classes,
        "latent_dim": params.config.latent_dim,
    }


def save_checkpoint(params: ModelParams, path) -> None:
    arrays = {name: t.data for name, t in params.trainable_tensors().items()}
    arrays["codebook.vectors"] = params.codebook.vectors
    meta = {
        "kind": "checkpoint",
        "config": asdict(params.config),
        "codebook": {"decay": params.codebook.decay, "step": params.codebook.step},
        "rng": {"root_seed": params.config.seed},
    }
    write_container(path, meta, arrays)


def load_checkpoint(path, expect: ModelConfig | None = None) -> ModelParams:
    meta, arrays = read_container(path)
    if meta.get("kind") != "checkpoint":
        raise ContractViolation(f"{path} is not a checkpoint file")
    config = ModelConfig(**meta["config"])
    if expect is not None:
        for field_name in ("num_concepts", "num_classes", "input_dim", "latent_dim"):
            have, want = getattr(config, field_name), getattr(expect, field_name)
            if have != want:
                raise ContractViolation(
                    f"checkpoint {field_name}={have} does not match expected {want}")
    book = qcav.Codebook(arrays["codebook.vectors"],
                         decay=meta["codebook"]["decay"],
                         step=int(meta["codebook"]["step"]))
    enc = ce.ConceptEncoderParams(
        alpha_w=Tensor(arrays["enc.alpha_w"]), alpha_b=Tensor(arrays["enc.alpha_b"]),
        beta_w=Tensor(arrays["enc.beta_w"]), beta_b=Tensor(arrays["enc.beta_b"]),
        theta_w1=Tensor(arrays["enc.theta_w1"]), theta_b1=Tensor(arrays["enc.theta_b1"]),
        theta_w2=Tensor(arrays["enc.theta_w2"]), theta_b2=Tensor(arrays["enc.theta_b2"]),
    )
    return ModelParams(
        config=config,
        backbone_w1=Tensor(arrays["backbone.w1"]), backbone_b1=Tensor(arrays["backbone.b1"]),
        backbone_w2=Tensor(arrays["backbone.w2"]), backbone_b2=Tensor(arrays["backbone.b2"]),
        backbone_w3=Tensor(arrays["backbone.w3"]), backbone_b3=Tensor(arrays["backbone.b3"]),
        encoders=enc,
        task_w=Tensor(arrays["task.w"]), task_b=Tensor(arrays["task.b"]),
        codebook=book,
        **({name.replace(".", "_"): Tensor(arrays[name])
            for name in ("direct.w1", "direct.b1", "direct.w2", "direct.b2")}
           if "direct.w1" in arrays else {}),
    )
