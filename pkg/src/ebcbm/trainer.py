"""Training: contrastive-divergence losses, per-batch step, and the fit loop.

A training step runs the full forward pass as one differentiable expression:
backbone, reparameterized concept latents, 2-logit energies for the data
latents, Langevin-refined negatives (treated as constants by the loss), and
the task head over hard-selected codebook vectors. The codebook itself is
updated only by EMA at the end of the step and never appears among the
gradient-updated tensors.

The energy loss defaults to the contrastive direction that lowers the energy
of data encodings and raises it for sampled negatives; the opposite printed
sign is kept behind `literal_eq18_sign` for comparison. Langevin sign choice
is likewise mirrored by `literal_eq17_sign`.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import concept_encoder as ce
from . import pipeline, qcav
from .datagen import SyntheticDataset
from .errors import ContractViolation, NumericError
from .numerics import Tensor, seed_stream


@dataclass
class TrainConfig:
    latent_dim: int = 16            # d
    sgld_steps: int = 20            # T
    sgld_step_size: float = 0.4
    lambda_concept: float = 5.0
    lambda_task: float = 1.0
    lambda_energy: float = 0.05
    learning_rate: float = 0.005
    ema_decay: float = 0.95
    batch_size: int = 256
    epochs: int = 10
    seed: int = 0
    optimizer: str = "adam"
    sgld_noise: bool = True
    sgld_conditional: bool = False
    ablate_ema: bool = False
    ablate_energy: bool = False
    ablate_variational: bool = False
    literal_eq18_sign: bool = False
    literal_eq17_sign: bool = False
    soft_selection: bool = False

    def validate(self) -> "TrainConfig":
        if min(self.lambda_concept, self.lambda_task, self.lambda_energy) < 0:
            raise ContractViolation("loss weights must be >= 0")
        if self.sgld_step_size <= 0:
            raise ContractViolation("sgld_step_size must be positive")
        if self.sgld_steps < 0:
            raise ContractViolation("sgld_steps must be >= 0")
        if not 0.0 <= self.ema_decay <= 1.0:
            raise ContractViolation("ema_decay must lie in [0, 1]")
        if self.optimizer not in ("adam", "sgd"):
            raise ContractViolation(f"unknown optimizer '{self.optimizer}'")
        if self.batch_size < 1 or self.epochs < 0:
            raise ContractViolation("batch_size must be >= 1 and epochs >= 0")
        return self


@dataclass
class TrainHistory:
    epochs: list[dict] = field(default_factory=list)

    def append(self, record: dict) -> None:
        self.epochs.append(record)

    def last(self) -> dict:
        return self.epochs[-1]

    def to_jsonl(self, path) -> None:
        import json

        with open(path, "w") as f:
            for rec in self.epochs:
                f.write(json.dumps(rec, sort_keys=True) + "\n")


# -- losses --------------------------------------------------------------------


def energy_loss(e_bar, e_bar_neg, literal_sign: bool = False):
    """Contrastive energy objective with quadratic containment.

    Default direction: mean(e_bar - e_bar_neg + (e_bar + e_bar_neg)^2), which
    pushes data energies down and negative energies up. `literal_sign` flips
    the difference term. Accepts Tensors (stays on the tape) or arrays
    (returns a float).
    """
    tensor_in = isinstance(e_bar, Tensor) or isinstance(e_bar_neg, Tensor)
    eb = e_bar if isinstance(e_bar, Tensor) else Tensor(np.asarray(e_bar, dtype=np.float32))
    en = e_bar_neg if isinstance(e_bar_neg, Tensor) else Tensor(np.asarray(e_bar_neg, dtype=np.float32))
    if eb.shape != en.shape:
        raise ContractViolation(
            f"energy vectors must align, got {eb.shape} vs {en.shape}")
    diff = (en - eb) if literal_sign else (eb - en)
    loss = (diff + (eb + en).square()).mean()
    return loss if tensor_in else loss.item()


def total_loss(concept_scores, concept_labels, class_logits, class_labels,
               energy_term: float, lambda_concept: float, lambda_task: float,
               lambda_energy: float) -> float:
    """Weighted sum of concept BCE, task CE, and the energy loss (arrays in,
    float out; the trainer's tape path mirrors this arithmetic exactly)."""
    scores = np.asarray(concept_scores, dtype=np.float64)
    labels = np.asarray(concept_labels, dtype=np.float64)
    logits = np.asarray(class_logits, dtype=np.float64)
    y = np.asarray(class_labels)
    eps = 1e-12
    bce = -np.mean(labels * np.log(scores + eps)
                   + (1.0 - labels) * np.log(1.0 - scores + eps))
    m = logits.max(axis=1, keepdims=True)
    lse = (m + np.log(np.exp(logits - m).sum(axis=1, keepdims=True))).squeeze(1)
    picked = logits[np.arange(len(y)), y]
    task = float(np.mean(lse - picked))
    return float(lambda_concept * bce + lambda_task * task
                 + lambda_energy * energy_term)


# -- optimizers ------------------------------------------------------------------


class Adam:
    def __init__(self, tensors: dict[str, Tensor], lr: float,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.tensors = tensors
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {n: np.zeros(t.shape, dtype=np.float64) for n, t in tensors.items()}
        self.v = {n: np.zeros(t.shape, dtype=np.float64) for n, t in tensors.items()}

    def step(self) -> None:
        self.t += 1
        for name, tensor in self.tensors.items():
            if tensor.grad is None:
                continue
            g = tensor.grad.astype(np.float64)
            self.m[name] = self.b1 * self.m[name] + (1 - self.b1) * g
            self.v[name] = self.b2 * self.v[name] + (1 - self.b2) * g * g
            mhat = self.m[name] / (1 - self.b1 ** self.t)
            vhat = self.v[name] / (1 - self.b2 ** self.t)
            tensor.data = (tensor.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)
                           ).astype(tensor.dtype)
            tensor.grad = None


class SGD:
    def __init__(self, tensors: dict[str, Tensor], lr: float):
        self.tensors = tensors
        self.lr = lr

    def step(self) -> None:
        for tensor in self.tensors.values():
            if tensor.grad is None:
                continue
            tensor.data = (tensor.data - self.lr * tensor.grad).astype(tensor.dtype)
            tensor.grad = None


def make_optimizer(config: TrainConfig, tensors: dict[str, Tensor]):
    if config.optimizer == "adam":
        return Adam(tensors, config.learning_rate)
    return SGD(tensors, config.learning_rate)


# -- the training step ------------------------------------------------------------


def _finite_or_abort(value: float, term: str) -> float:
    if not math.isfinite(value):
        raise NumericError(term, "training aborted: loss term is not finite")
    return value


def train_step(batch: tuple[np.ndarray, np.ndarray, np.ndarray],
               params: pipeline.ModelParams, codebook: qcav.Codebook,
               config: TrainConfig, eps_rng: np.random.Generator,
               sgld_rng: np.random.Generator, optimizer) -> dict:
    """One batch of the learning algorithm; returns step statistics."""
    X, C, y = batch
    X = np.asarray(X, dtype=np.float32)
    C = np.asarray(C)
    y = np.asarray(y)
    B = X.shape[0]
    K = params.config.num_concepts
    d = params.config.latent_dim
    labels_kb = C.T.astype(np.float32)                      # (K, B)

    z = pipeline.backbone_forward(params, Tensor(X))
    eps = None
    if not config.ablate_variational:
        eps = eps_rng.standard_normal((K, B, d)).astype(np.float32)
    v = ce.encode_batch(params.encoders, z, eps)            # (K, B, d)
    logits = pipeline.concept_logits_forward(params, v)     # (K, B, 2)

    # concept cross-entropy on the 2-logit pairs: LSE(e) - e[label]; identical
    # to BCE on softmax(e)[+] but stable at any logit scale
    onehot = np.stack([labels_kb, 1.0 - labels_kb], axis=-1)  # (K, B, 2)
    lse = logits.logsumexp(axis=-1)                         # (K, B)
    picked = (logits * Tensor(onehot)).sum(axis=-1)
    concept_ce = (lse - picked).mean()
    _finite_or_abort(concept_ce.item(), "concept_ce")

    e_bar = -lse                                            # composed data energies

    use_energy = not config.ablate_energy and config.lambda_energy > 0
    if use_energy:
        v0 = sgld_rng.standard_normal((K, B, d)).astype(np.float32)
        cond = labels_kb if config.sgld_conditional else None
        v_neg = ce.sgld_batch(
            params.encoders, v0, codebook.vectors, config.sgld_steps,
            config.sgld_step_size, sgld_rng,
            variant="literal_eq17" if config.literal_eq17_sign else "descend_energy",
            noise=config.sgld_noise, conditional_labels=cond)
        neg_logits = ce.logits_pair_batch(params.encoders, Tensor(v_neg),
                                          codebook.vectors)
        e_bar_neg = -neg_logits.logsumexp(axis=-1)
        loss_energy = energy_loss(e_bar, e_bar_neg,
                                  literal_sign=config.literal_eq18_sign)
        _finite_or_abort(loss_energy.item(), "energy_loss")
        mean_e_neg = float(e_bar_neg.data.mean())
    else:
        loss_energy = None
        mean_e_neg = float("nan")

    # concept scores; routing is detached under hard selection
    with np.errstate(over="ignore"):
        delta = np.clip(logits.data[..., 1] - logits.data[..., 0], -700, 700)
        scores_np = (1.0 / (1.0 + np.exp(delta))).T  # (B, K)

    if config.soft_selection:
        probs = logits.softmax(axis=-1)
        plus_w = (probs * Tensor(np.stack(
            [np.ones_like(labels_kb), np.zeros_like(labels_kb)], axis=-1))).sum(axis=-1)
        w = plus_w.reshape(K, B, 1)
        qp = Tensor(codebook.vectors[:, None, 0, :])
        qm = Tensor(codebook.vectors[:, None, 1, :])
        sel = w * qp + (Tensor(np.ones((K, B, 1), dtype=np.float32)) - w) * qm
        flat = sel.transpose((1, 0, 2)).reshape(B, K * d)
    else:
        sel = qcav.select_batch(codebook, scores_np)        # (B, K, d) constants
        flat = Tensor(sel.reshape(B, K * d))
    class_logits = pipeline.task_forward(params, flat)      # (B, M)

    y_onehot = np.zeros((B, params.config.num_classes), dtype=np.float32)
    y_onehot[np.arange(B), y] = 1.0
    task_ce = (class_logits.logsumexp(axis=-1)
               - (class_logits * Tensor(y_onehot)).sum(axis=-1)).mean()
    _finite_or_abort(task_ce.item(), "task_ce")

    total = concept_ce * config.lambda_concept + task_ce * config.lambda_task
    if loss_energy is not None:
        total = total + loss_energy * config.lambda_energy
    _finite_or_abort(total.item(), "total_loss")

    total.backward()
    optimizer.step()

    if not config.ablate_ema:
        latents = v.data  # sampled latents, detached
        for k in range(K):
            qcav.ema_update(codebook, k, latents[k], C[:, k])

    pred = np.argmax(class_logits.data, axis=1)
    return {
        "total_loss": total.item(),
        "concept_ce": concept_ce.item(),
        "task_ce": task_ce.item(),
        "energy_loss": loss_energy.item() if loss_energy is not None else 0.0,
        "mean_e_data": float(e_bar.data.mean()),
        "mean_e_neg": mean_e_neg,
        "concept_acc": float(np.mean((scores_np > 0.5) == (C > 0.5))),
        "task_acc": float(np.mean(pred == y)),
        "batch_size": B,
    }


# -- fit ---------------------------------------------------------------------------


def fit(dataset: SyntheticDataset, config: TrainConfig) -> tuple[pipeline.ModelParams, TrainHistory]:
    """Train a fresh model on `dataset`; ablation flags reshape the model."""
    config.validate()
    dcfg = dataset.config
    model_config = pipeline.ModelConfig(
        num_concepts=dcfg.num_concepts,
        num_classes=dcfg.num_classes,
        input_dim=dcfg.input_dim,
        latent_dim=config.latent_dim,
        soft_selection=config.soft_selection,
        direct_concept_head=config.ablate_energy,
        seed=config.seed,
    )
    params = pipeline.init_model(model_config)
    params.codebook.decay = config.ema_decay
    for t in params.trainable_tensors().values():
        t.requires_grad = True
    optimizer = make_optimizer(config, params.trainable_tensors())
    eps_rng = seed_stream(config.seed, "train-eps")
    sgld_rng = seed_stream(config.seed, "train-sgld")

    history = TrainHistory()
    N = dataset.num_samples
    for epoch in range(config.epochs):
        order = seed_stream(config.seed, "shuffle", epoch).permutation(N)
        sums: dict[str, float] = {}
        seen = 0
        for start in range(0, N, config.batch_size):
            idx = order[start:start + config.batch_size]
            stats = train_step(
                (dataset.X[idx], dataset.C_star[idx], dataset.y_star[idx]),
                params, params.codebook, config, eps_rng, sgld_rng, optimizer)
            w = stats.pop("batch_size")
            seen += w
            for key, val in stats.items():
                sums[key] = sums.get(key, 0.0) + val * w
        record = {"epoch": epoch}
        record.update({k: s / seen for k, s in sums.items()})
        history.append(record)
    for t in params.trainable_tensors().values():
        t.requires_grad = False
    return params, history
