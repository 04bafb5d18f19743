"""Per-concept probabilistic encoders with energy-based scoring.

Each concept k carries three parameter groups: a mean head and a log-variance
head that turn the shared latent z into a reparameterized concept latent
v_k = mu(z) + exp(0.5 * logvar(z)) * eps, and an energy head that scores v_k
against each member of the concept's codebook pair. The two scores form a
2-logit vector: softmax over it gives the concept score, the negative
LogSumExp gives the composed energy, and the spread between the two logits
determines the uncertainty. Negative latents are synthesized by Langevin
dynamics on the composed-energy surface.

The energy head is shared between the two pair members, so swapping
(q+, q-) swaps the logits exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, SamplerDivergenceError
from .numerics import Tensor, concat, matmul

ENERGY_HIDDEN = 32
_DIVERGENCE_BOUND = 1e6


@dataclass
class EnergyLogits:
    e_plus: float
    e_minus: float

    def as_array(self) -> np.ndarray:
        return np.array([self.e_plus, self.e_minus], dtype=np.float64)


@dataclass
class ConceptEncoderParams:
    """Stacked per-concept parameters; leading axis indexes the concept."""

    alpha_w: Tensor   # (K, z_dim, d)
    alpha_b: Tensor   # (K, 1, d)
    beta_w: Tensor    # (K, z_dim, d)
    beta_b: Tensor    # (K, 1, d)
    theta_w1: Tensor  # (K, 2d, H)
    theta_b1: Tensor  # (K, 1, H)
    theta_w2: Tensor  # (K, H, 1)
    theta_b2: Tensor  # (K, 1, 1)

    @property
    def num_concepts(self) -> int:
        return self.alpha_w.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.alpha_w.shape[2]

    def tensors(self) -> dict[str, Tensor]:
        return {
            "enc.alpha_w": self.alpha_w, "enc.alpha_b": self.alpha_b,
            "enc.beta_w": self.beta_w, "enc.beta_b": self.beta_b,
            "enc.theta_w1": self.theta_w1, "enc.theta_b1": self.theta_b1,
            "enc.theta_w2": self.theta_w2, "enc.theta_b2": self.theta_b2,
        }


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(num_concepts: int, z_dim: int, latent_dim: int,
                rng: np.random.Generator) -> ConceptEncoderParams:
    K, d, h = num_concepts, latent_dim, ENERGY_HIDDEN
    return ConceptEncoderParams(
        alpha_w=Tensor(_uniform(rng, (K, z_dim, d), z_dim)),
        alpha_b=Tensor(_uniform(rng, (K, 1, d), z_dim)),
        beta_w=Tensor(_uniform(rng, (K, z_dim, d), z_dim)),
        beta_b=Tensor(_uniform(rng, (K, 1, d), z_dim)),
        theta_w1=Tensor(_uniform(rng, (K, 2 * d, h), 2 * d)),
        theta_b1=Tensor(_uniform(rng, (K, 1, h), 2 * d)),
        theta_w2=Tensor(_uniform(rng, (K, h, 1), h)),
        theta_b2=Tensor(_uniform(rng, (K, 1, 1), h)),
    )


# -- batched tape paths (used by the pipeline and trainer) --------------------


def encode_batch(params: ConceptEncoderParams, z: Tensor,
                 eps: np.ndarray | None) -> Tensor:
    """All concepts at once: z (B, z_dim) -> v (K, B, d); eps None means 0."""
    mu = matmul(z, params.alpha_w) + params.alpha_b
    if eps is None:
        return mu
    logvar = matmul(z, params.beta_w) + params.beta_b
    sigma = (logvar * 0.5).exp()
    return mu + sigma * Tensor(eps)


def energy_batch(params: ConceptEncoderParams, v: Tensor,
                 pair_member: np.ndarray) -> Tensor:
    """Energy logits of v (K, B, d) against one pair member (K, d) -> (K, B)."""
    K, B, d = v.shape
    q = Tensor(np.broadcast_to(pair_member[:, None, :], (K, B, d)))
    x = concat([v, q], axis=-1)
    hidden = (matmul(x, params.theta_w1) + params.theta_b1).silu()
    out = matmul(hidden, params.theta_w2) + params.theta_b2
    return out.reshape(K, B)


def logits_pair_batch(params: ConceptEncoderParams, v: Tensor,
                      codebook_vectors: np.ndarray) -> Tensor:
    """Stacked (K, B, 2) logits for (q+, q-) of every concept."""
    e_plus = energy_batch(params, v, codebook_vectors[:, 0])
    e_minus = energy_batch(params, v, codebook_vectors[:, 1])
    K, B = e_plus.shape
    return concat([e_plus.reshape(K, B, 1), e_minus.reshape(K, B, 1)], axis=-1)


# -- single-sample contract surface -------------------------------------------


def encode(params: ConceptEncoderParams, z: np.ndarray, k: int, eps_mode: str,
           rng: np.random.Generator | None = None) -> np.ndarray:
    """Concept latent for one sample; eps_mode "zero" gives the posterior mean."""
    z = np.asarray(z, dtype=np.float32)
    if not np.all(np.isfinite(z)):
        raise ContractViolation("latent z must be finite")
    sub = _slice_params(params, k)
    if eps_mode == "zero":
        eps = None
    elif eps_mode == "sample":
        if rng is None:
            raise ContractViolation("eps_mode 'sample' requires an rng")
        eps = rng.standard_normal((1, 1, params.latent_dim)).astype(np.float32)
    else:
        raise ContractViolation(f"unknown eps_mode '{eps_mode}'")
    v = encode_batch(sub, Tensor(z.reshape(1, -1)), eps)
    return v.data[0, 0].copy()


def energy_logits(params: ConceptEncoderParams, k: int, v: np.ndarray,
                  q_pair: tuple[np.ndarray, np.ndarray]) -> EnergyLogits:
    """Score a single latent against a concept's (q+, q-) pair."""
    v = np.asarray(v, dtype=np.float32)
    qp, qm = (np.asarray(q, dtype=np.float32) for q in q_pair)
    d = params.latent_dim
    if v.shape != (d,) or qp.shape != (d,) or qm.shape != (d,):
        raise ContractViolation(
            f"v and pair members must have dim {d}, got {v.shape}, {qp.shape}, {qm.shape}")
    sub = _slice_params(params, k)
    vt = Tensor(v.reshape(1, 1, d))
    e_p = energy_batch(sub, vt, qp.reshape(1, d)).item()
    e_m = energy_batch(sub, vt, qm.reshape(1, d)).item()
    return EnergyLogits(e_plus=e_p, e_minus=e_m)


def _slice_params(params: ConceptEncoderParams, k: int) -> ConceptEncoderParams:
    if not (0 <= k < params.num_concepts):
        raise ContractViolation(f"concept index {k} out of range")
    return ConceptEncoderParams(*(
        Tensor(t.data[k:k + 1]) for t in (
            params.alpha_w, params.alpha_b, params.beta_w, params.beta_b,
            params.theta_w1, params.theta_b1, params.theta_w2, params.theta_b2)
    ))


def concept_score(e: EnergyLogits) -> float:
    """softmax(e)[+], computed stably; probability the concept is present."""
    delta = e.e_minus - e.e_plus
    return float(1.0 / (1.0 + np.exp(np.clip(delta, -700, 700))))


def composed_energy(e: EnergyLogits) -> float:
    """Negative LogSumExp of the 2-logit energy vector."""
    arr = e.as_array()
    m = arr.max()
    return float(-(m + np.log(np.exp(arr - m).sum())))


def uncertainty(e: EnergyLogits) -> float:
    """1 / (exp(LSE(e) - mean(e)) - 1); equals 1 at tied logits, falls toward 0
    as the logits separate. For two logits this is 1 / (2 cosh(|e+ - e-| / 2) - 1),
    always in (0, 1] (underflows to 0 only for astronomically split logits)."""
    t = np.exp(-abs(e.e_plus - e.e_minus) / 2.0)
    return float(t / (1.0 - t + t * t))


def uncertainty_from_logits(e_plus: np.ndarray, e_minus: np.ndarray) -> np.ndarray:
    t = np.exp(-np.abs(np.asarray(e_plus, dtype=np.float64)
                       - np.asarray(e_minus, dtype=np.float64)) / 2.0)
    return t / (1.0 - t + t * t)


# -- Langevin sampling ---------------------------------------------------------


def sgld_batch(params: ConceptEncoderParams, v0: np.ndarray,
               codebook_vectors: np.ndarray, steps: int, step_size: float,
               rng: np.random.Generator | None, variant: str = "descend_energy",
               noise: bool = True,
               conditional_labels: np.ndarray | None = None) -> np.ndarray:
    """Drive (K, B, d) chains for `steps` Langevin updates.

    The default variant descends the composed energy (ascends the LSE of the
    logits) by step_size/2 per step; "literal_eq17" flips that sign. Gaussian
    noise with per-coordinate variance step_size is added when `noise` is on.
    Parameters are treated as constants: gradients flow only into the chains.
    """
    if steps < 0:
        raise ContractViolation(f"steps must be >= 0, got {steps}")
    if step_size <= 0:
        raise ContractViolation(f"step_size must be positive, got {step_size}")
    if variant not in ("descend_energy", "literal_eq17"):
        raise ContractViolation(f"unknown sgld variant '{variant}'")
    if noise and rng is None:
        raise ContractViolation("noise requires an rng")

    const = ConceptEncoderParams(*(Tensor(t.data) for t in params.tensors().values()))
    v = np.array(v0, dtype=np.float32, copy=True)
    K, B, d = v.shape
    sign = 1.0 if variant == "descend_energy" else -1.0
    cond = None
    if conditional_labels is not None:
        lab = np.asarray(conditional_labels).reshape(K, B)
        cond = np.stack([lab == 1, lab == 0], axis=-1).astype(np.float32)  # (K,B,2)

    for t in range(steps):
        vt = Tensor(v, requires_grad=True)
        logits = logits_pair_batch(const, vt, codebook_vectors)  # (K, B, 2)
        if cond is None:
            obj = logits.logsumexp(axis=-1).sum()
        else:
            obj = (logits * Tensor(cond)).sum()
        obj.backward()
        v = v + (sign * step_size / 2.0) * vt.grad
        if noise:
            v = v + (rng.standard_normal(v.shape) * math.sqrt(step_size)
                     ).astype(np.float32)
        v = v.astype(np.float32)
        max_abs = float(np.max(np.abs(v)))
        if not np.isfinite(max_abs) or max_abs > _DIVERGENCE_BOUND:
            raise SamplerDivergenceError(t, max_abs)
    return v


def sgld(params: ConceptEncoderParams, k: int, v0: np.ndarray,
         q_pair: tuple[np.ndarray, np.ndarray], steps: int, step_size: float,
         rng: np.random.Generator | None = None, variant: str = "descend_energy",
         noise: bool = True, conditional_label: int | None = None) -> np.ndarray:
    """Single-chain Langevin refinement of v0 for concept k."""
    v0 = np.asarray(v0, dtype=np.float32)
    if v0.shape != (params.latent_dim,):
        raise ContractViolation(f"v0 must have shape ({params.latent_dim},)")
    sub = _slice_params(params, k)
    book = np.stack([np.asarray(q_pair[0], dtype=np.float32),
                     np.asarray(q_pair[1], dtype=np.float32)])[None, :, :]
    cond = None
    if conditional_label is not None:
        cond = np.array([[conditional_label]])
    out = sgld_batch(sub, v0.reshape(1, 1, -1), book, steps, step_size, rng,
                     variant=variant, noise=noise, conditional_labels=cond)
    return out[0, 0]
