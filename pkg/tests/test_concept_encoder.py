import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ebcbm import concept_encoder as ce
from ebcbm.errors import ContractViolation, SamplerDivergenceError
from ebcbm.numerics import Tensor, check_gradients, seed_stream
from ebcbm import qcav

Z_DIM = 6
D = 4
K = 3


@pytest.fixture()
def params():
    return ce.init_params(K, Z_DIM, D, seed_stream(1, "enc-init"))


@pytest.fixture()
def book():
    return qcav.init(K, D, seed=2)


def test_encode_zero_mode_is_mean(params):
    z = seed_stream(3, "z").normal(size=Z_DIM)
    v = ce.encode(params, z, 1, "zero")
    mu = (z.astype(np.float32) @ params.alpha_w.data[1] + params.alpha_b.data[1, 0])
    np.testing.assert_allclose(v, mu, rtol=1e-6)


def test_encode_unit_eps_offsets_by_sigma(params):
    # force logvar == 0 so sigma == 1, then eps of all ones shifts mu by one
    params.beta_w.data[:] = 0.0
    params.beta_b.data[:] = 0.0
    z = seed_stream(3, "z2").normal(size=Z_DIM)

    class OnesRng:
        def standard_normal(self, shape):
            return np.ones(shape)

    v = ce.encode(params, z, 0, "sample", rng=OnesRng())
    mu = ce.encode(params, z, 0, "zero")
    np.testing.assert_allclose(v, mu + 1.0, rtol=1e-5)


def test_encode_sample_std_matches_logvar(params):
    z = seed_stream(4, "z3").normal(size=Z_DIM)
    rng = seed_stream(4, "eps")
    draws = np.stack([ce.encode(params, z, 2, "sample", rng=rng) for _ in range(10_000)])
    logvar = z.astype(np.float32) @ params.beta_w.data[2] + params.beta_b.data[2, 0]
    expected = np.exp(0.5 * logvar)
    np.testing.assert_allclose(draws.std(axis=0), expected, rtol=0.05)


def test_encode_zero_deterministic(params):
    z = seed_stream(5, "z4").normal(size=Z_DIM)
    a = ce.encode(params, z, 0, "zero")
    b = ce.encode(params, z, 0, "zero")
    assert np.array_equal(a, b)


def test_swapping_pair_swaps_logits(params, book):
    v = seed_stream(6, "v").normal(size=D)
    qp, qm = book.vectors[1, 0], book.vectors[1, 1]
    e = ce.energy_logits(params, 1, v, (qp, qm))
    swapped = ce.energy_logits(params, 1, v, (qm, qp))
    assert e.e_plus == pytest.approx(swapped.e_minus, abs=1e-7)
    assert e.e_minus == pytest.approx(swapped.e_plus, abs=1e-7)


def test_identical_pair_ties_logits(params):
    v = seed_stream(6, "v2").normal(size=D)
    q = seed_stream(6, "q").normal(size=D).astype(np.float32)
    e = ce.energy_logits(params, 0, v, (q, q))
    assert e.e_plus == pytest.approx(e.e_minus, abs=1e-7)
    assert math.isfinite(e.e_plus)


def test_energy_logits_dim_mismatch(params):
    with pytest.raises(ContractViolation):
        ce.energy_logits(params, 0, np.zeros(D + 1), (np.zeros(D), np.zeros(D)))


def test_concept_score_values():
    assert ce.concept_score(ce.EnergyLogits(1.3, 1.3)) == pytest.approx(0.5)
    assert ce.concept_score(ce.EnergyLogits(math.log(3.0), 0.0)) == pytest.approx(0.75)
    a = ce.concept_score(ce.EnergyLogits(2.0, -1.0))
    b = ce.concept_score(ce.EnergyLogits(2.0 + 17.5, -1.0 + 17.5))
    assert a == pytest.approx(b, rel=1e-12)


def test_composed_energy_values():
    assert ce.composed_energy(ce.EnergyLogits(0.0, 0.0)) == pytest.approx(-math.log(2.0))
    # oracle: -ln(e^2 + e^0) at double precision
    assert ce.composed_energy(ce.EnergyLogits(2.0, 0.0)) == pytest.approx(-2.126928, abs=1e-6)
    base = ce.composed_energy(ce.EnergyLogits(0.7, -0.4))
    shifted = ce.composed_energy(ce.EnergyLogits(0.7 + 3.0, -0.4 + 3.0))
    assert shifted == pytest.approx(base - 3.0, abs=1e-9)


def test_uncertainty_values():
    assert ce.uncertainty(ce.EnergyLogits(4.2, 4.2)) == pytest.approx(1.0, abs=1e-12)
    # oracle: 1/(exp(LSE(2,0) - 1) - 1) at double precision = 0.479349...
    direct = 1.0 / (math.exp(math.log(math.exp(2.0) + 1.0) - 1.0) - 1.0)
    assert ce.uncertainty(ce.EnergyLogits(2.0, 0.0)) == pytest.approx(direct, rel=1e-12)
    assert ce.uncertainty(ce.EnergyLogits(2.0, 0.0)) == pytest.approx(0.4794, abs=1e-4)
    assert ce.uncertainty(ce.EnergyLogits(3.0, 0.0)) < ce.uncertainty(ce.EnergyLogits(1.0, 0.0))


@settings(max_examples=300, deadline=None)
@given(
    a=st.floats(min_value=-200, max_value=200),
    delta=st.floats(min_value=0, max_value=400),
)
def test_uncertainty_bounds_and_monotonicity(a, delta):
    u = ce.uncertainty(ce.EnergyLogits(a + delta, a))
    assert 0.0 < u <= 1.0
    if delta > 1e-6:  # below this the gap from 1 is under float64 resolution
        assert u < 1.0
        assert u < ce.uncertainty(ce.EnergyLogits(a + delta / 2.0, a))


def test_score_agrees_with_selection_and_energy(params, book):
    # score > 0.5 iff e_plus > e_minus iff q+ has the lower single-member energy
    rng = seed_stream(8, "agree")
    for _ in range(20):
        v = rng.normal(size=D)
        k = int(rng.integers(0, K))
        e = ce.energy_logits(params, k, v, (book.vectors[k, 0], book.vectors[k, 1]))
        score = ce.concept_score(e)
        scores = np.full(K, 0.5)
        scores[k] = score
        sel = qcav.select(book, scores)
        branch = 0 if score >= 0.5 else 1
        np.testing.assert_array_equal(sel[k], book.vectors[k, branch])
        assert (score > 0.5) == (e.e_plus > e.e_minus)


def test_sgld_zero_steps_identity(params, book):
    v0 = seed_stream(9, "v0").normal(size=D)
    out = ce.sgld(params, 0, v0, (book.vectors[0, 0], book.vectors[0, 1]),
                  steps=0, step_size=1e-3, rng=seed_stream(9, "chain"))
    np.testing.assert_array_equal(out, v0.astype(np.float32))


def test_sgld_noise_off_descends_energy(params, book):
    rng = seed_stream(10, "chains")
    v0 = rng.normal(size=(K, 64, D)).astype(np.float32)
    before = _median_composed(params, v0, book)
    out = ce.sgld_batch(params, v0, book.vectors, steps=20, step_size=1e-3,
                        rng=None, noise=False)
    after = _median_composed(params, out, book)
    assert after < before


def _median_composed(params, v, book):
    vt = Tensor(v)
    logits = ce.logits_pair_batch(params, vt, book.vectors)
    lse = Tensor(logits.data).logsumexp(axis=-1)
    return float(np.median(-lse.data))


def test_sgld_deterministic(params, book):
    v0 = seed_stream(11, "v0").normal(size=D)
    pair = (book.vectors[1, 0], book.vectors[1, 1])
    a = ce.sgld(params, 1, v0, pair, steps=10, step_size=0.05,
                rng=seed_stream(11, "n"))
    b = ce.sgld(params, 1, v0, pair, steps=10, step_size=0.05,
                rng=seed_stream(11, "n"))
    np.testing.assert_array_equal(a, b)


def test_sgld_literal_variant_ascends_energy(params, book):
    rng = seed_stream(12, "lit")
    v0 = rng.normal(size=(K, 32, D)).astype(np.float32)
    before = _median_composed(params, v0, book)
    out = ce.sgld_batch(params, v0, book.vectors, steps=20, step_size=1e-3,
                        rng=None, noise=False, variant="literal_eq17")
    after = _median_composed(params, out, book)
    assert after > before


def test_sgld_divergence_detected(params, book):
    params2 = ce.init_params(1, Z_DIM, D, seed_stream(13, "big"))
    params2.theta_w1.data[:] *= 1e4   # blow up the energy surface
    params2.theta_w2.data[:] *= 1e4
    v0 = np.full((1, 1, D), 10.0, dtype=np.float32)
    with pytest.raises(SamplerDivergenceError):
        ce.sgld_batch(params2, v0, book.vectors[:1], steps=200, step_size=1e3,
                      rng=seed_stream(13, "n"), noise=False)


def test_sgld_gradient_matches_finite_differences(params, book):
    # gradient of LSE(energy logits) w.r.t. the chain state
    k = 1
    sub_w1 = params.theta_w1.data[k]
    v = Tensor(seed_stream(14, "probe").normal(size=(D,)))

    def f(vt):
        K1 = 1
        vt3 = vt.reshape(1, 1, D)
        stacked = ce.logits_pair_batch(
            ce.ConceptEncoderParams(*(Tensor(t.data[k:k + 1]) for t in params.tensors().values())),
            vt3, book.vectors[k:k + 1])
        return stacked.logsumexp(axis=-1).sum()

    assert check_gradients(f, [v], fd_step=1e-3) < 1e-4


def test_sgld_matches_manual_two_steps(params, book):
    # independent oracle: explicit finite-difference gradient stepping
    k = 0
    pair = (book.vectors[k, 0], book.vectors[k, 1])
    v0 = seed_stream(15, "v0").normal(size=D).astype(np.float32)
    gamma = 0.01

    def lse_of(v):
        e = ce.energy_logits(params, k, v, pair)
        m = max(e.e_plus, e.e_minus)
        return m + math.log(math.exp(e.e_plus - m) + math.exp(e.e_minus - m))

    v_manual = v0.astype(np.float64).copy()
    for _ in range(2):
        g = np.zeros(D)
        for j in range(D):
            h = 1e-4
            vp, vm = v_manual.copy(), v_manual.copy()
            vp[j] += h
            vm[j] -= h
            g[j] = (lse_of(vp) - lse_of(vm)) / (2 * h)
        v_manual = v_manual + (gamma / 2.0) * g

    out = ce.sgld(params, k, v0, pair, steps=2, step_size=gamma, noise=False)
    np.testing.assert_allclose(out, v_manual, rtol=1e-3, atol=1e-5)


def test_sgld_conditional_mode(params, book):
    v0 = seed_stream(16, "v0").normal(size=D)
    pair = (book.vectors[2, 0], book.vectors[2, 1])
    out_u = ce.sgld(params, 2, v0, pair, steps=5, step_size=0.05, noise=False)
    out_c = ce.sgld(params, 2, v0, pair, steps=5, step_size=0.05, noise=False,
                    conditional_label=1)
    assert not np.array_equal(out_u, out_c)


def test_sgld_rejects_bad_args(params, book):
    pair = (book.vectors[0, 0], book.vectors[0, 1])
    with pytest.raises(ContractViolation):
        ce.sgld(params, 0, np.zeros(D), pair, steps=-1, step_size=0.1, noise=False)
    with pytest.raises(ContractViolation):
        ce.sgld(params, 0, np.zeros(D), pair, steps=1, step_size=0.0, noise=False)
    with pytest.raises(ContractViolation):
        ce.sgld(params, 0, np.zeros(D), pair, steps=1, step_size=0.1,
                variant="sideways", noise=False)
