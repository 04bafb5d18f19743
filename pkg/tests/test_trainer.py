import hashlib
import math

import numpy as np
import pytest

from ebcbm import datagen, pipeline, trainer
from ebcbm.errors import ContractViolation
from ebcbm.numerics import Tensor, seed_stream


@pytest.fixture(scope="module")
def tiny_data():
    cfg = datagen.DatasetConfig(train_size=256, test_size=64, seed=21)
    return datagen.generate(cfg)


def small_config(**kw):
    base = dict(epochs=2, batch_size=64, seed=5, sgld_steps=5)
    base.update(kw)
    return trainer.TrainConfig(**base)


def test_energy_loss_zeros():
    z = np.zeros(4)
    assert trainer.energy_loss(z, z) == pytest.approx(0.0)
    assert trainer.energy_loss(z, z, literal_sign=True) == pytest.approx(0.0)


def test_energy_loss_single_pair():
    assert trainer.energy_loss(np.array([-1.0]), np.array([1.0])) == pytest.approx(-2.0)
    assert trainer.energy_loss(np.array([-1.0]), np.array([1.0]),
                               literal_sign=True) == pytest.approx(2.0)


def test_energy_loss_mode_identity():
    rng = seed_stream(2, "el")
    eb = rng.normal(size=6).astype(np.float32)
    en = rng.normal(size=6).astype(np.float32)
    default = trainer.energy_loss(eb, en)
    literal = trainer.energy_loss(eb, en, literal_sign=True)
    reg = float(np.mean((eb + en) ** 2))
    assert default + literal == pytest.approx(2.0 * reg, rel=1e-5)


def test_energy_loss_gradient_direction():
    # the default mode's gradient w.r.t. a data energy includes the +1 term
    eb = Tensor(np.zeros(3, dtype=np.float32), requires_grad=True)
    en = Tensor(np.zeros(3, dtype=np.float32), requires_grad=True)
    loss = trainer.energy_loss(eb, en)
    loss.backward()
    np.testing.assert_allclose(eb.grad, 1.0 / 3.0, rtol=1e-6)
    np.testing.assert_allclose(en.grad, -1.0 / 3.0, rtol=1e-6)


def test_total_loss_zero_weights():
    scores = np.full((4, 3), 0.7)
    labels = np.ones((4, 3))
    logits = seed_stream(3, "tl").normal(size=(4, 5))
    y = np.array([0, 1, 2, 3])
    assert trainer.total_loss(scores, labels, logits, y, 1.0, 0, 0, 0) == 0.0


def test_total_loss_perfect_predictions_leave_energy_term():
    scores = np.array([[1.0 - 1e-12, 1e-12]])
    labels = np.array([[1.0, 0.0]])
    logits = np.array([[50.0, -50.0, -50.0]])
    y = np.array([0])
    val = trainer.total_loss(scores, labels, logits, y, 2.0, 5.0, 1.0, 0.05)
    assert val == pytest.approx(0.05 * 2.0, abs=1e-6)


def test_total_loss_default_weights_match_graph_arithmetic():
    rng = seed_stream(4, "bce")
    e = rng.normal(size=(6, 2))
    labels = rng.integers(0, 2, size=6)
    scores = 1.0 / (1.0 + np.exp(e[:, 1] - e[:, 0]))
    # BCE on softmax(e)[+] equals the 2-logit cross-entropy LSE(e) - e[label]
    lse = np.log(np.exp(e[:, 0]) + np.exp(e[:, 1]))
    picked = np.where(labels == 1, e[:, 0], e[:, 1])
    direct = float(np.mean(lse - picked))
    via_bce = trainer.total_loss(scores[None, :], labels[None, :],
                                 np.zeros((1, 2)), np.array([0]), 0.0, 1.0, 0.0, 0.0)
    assert via_bce == pytest.approx(direct, rel=1e-6)


def test_loss_gradient_matches_finite_differences(tiny_data):
    # random 16-parameter slice of the full training objective
    train, _ = tiny_data
    config = small_config(sgld_noise=False, sgld_steps=2)
    params, _ = trainer.fit(train, small_config(epochs=0))
    for t in params.trainable_tensors().values():
        t.requires_grad = True
    X = train.X[:16]
    C = train.C_star[:16]
    y = train.y_star[:16]
    K, d = params.config.num_concepts, params.config.latent_dim
    B = X.shape[0]
    v0 = seed_stream(9, "v0").standard_normal((K, B, d)).astype(np.float32)

    from ebcbm import concept_encoder as cem

    v_neg = cem.sgld_batch(params.encoders, v0, params.codebook.vectors, 2,
                           config.sgld_step_size, None, noise=False)

    from ebcbm.numerics import concat

    rest = params.encoders.theta_w1.data.reshape(-1)[16:].copy()

    def loss_given(theta_slice: Tensor) -> Tensor:
        # the probed 16 parameters are the head of theta_w1, flattened
        w1 = concat([theta_slice, Tensor(rest, dtype=theta_slice.dtype)], axis=0)
        w1 = w1.reshape(params.encoders.theta_w1.shape)
        enc = cem.ConceptEncoderParams(
            alpha_w=Tensor(params.encoders.alpha_w.data),
            alpha_b=Tensor(params.encoders.alpha_b.data),
            beta_w=Tensor(params.encoders.beta_w.data),
            beta_b=Tensor(params.encoders.beta_b.data),
            theta_w1=w1,
            theta_b1=Tensor(params.encoders.theta_b1.data),
            theta_w2=Tensor(params.encoders.theta_w2.data),
            theta_b2=Tensor(params.encoders.theta_b2.data),
        )
        z = pipeline.backbone_forward(params, Tensor(X))
        z = Tensor(z.data)
        v = cem.encode_batch(enc, z, None)
        logits = cem.logits_pair_batch(enc, v, params.codebook.vectors)
        labels_kb = C.T.astype(np.float32)
        onehot_lab = np.stack([labels_kb, 1.0 - labels_kb], axis=-1)
        lse = logits.logsumexp(axis=-1)
        picked = (logits * Tensor(onehot_lab)).sum(axis=-1)
        concept_ce = (lse - picked).mean()
        e_bar = -lse
        neg_logits = cem.logits_pair_batch(enc, Tensor(v_neg), params.codebook.vectors)
        e_bar_neg = -neg_logits.logsumexp(axis=-1)
        le = trainer.energy_loss(e_bar, e_bar_neg)
        return concept_ce * config.lambda_concept + le * config.lambda_energy

    from ebcbm.numerics import check_gradients

    slice0 = Tensor(params.encoders.theta_w1.data.reshape(-1)[:16].copy())
    err = check_gradients(loss_given, [slice0], fd_step=1e-3)
    assert err < 1e-3


def test_one_step_changes_parameters(tiny_data):
    train, _ = tiny_data
    params, _ = trainer.fit(train, small_config(epochs=0))
    before = {n: t.data.copy() for n, t in params.trainable_tensors().items()}
    for t in params.trainable_tensors().values():
        t.requires_grad = True
    config = small_config()
    opt = trainer.make_optimizer(config, params.trainable_tensors())
    trainer.train_step((train.X[:64], train.C_star[:64], train.y_star[:64]),
                       params, params.codebook, config,
                       seed_stream(1, "eps"), seed_stream(1, "sgld"), opt)
    changed = [n for n, t in params.trainable_tensors().items()
               if not np.array_equal(before[n], t.data)]
    assert changed


def test_all_positive_labels_keep_negative_branch(tiny_data):
    train, _ = tiny_data
    params, _ = trainer.fit(train, small_config(epochs=0))
    for t in params.trainable_tensors().values():
        t.requires_grad = True
    config = small_config()
    opt = trainer.make_optimizer(config, params.trainable_tensors())
    C = np.ones_like(train.C_star[:32])
    before = params.codebook.vectors[:, 1, :].copy()
    trainer.train_step((train.X[:32], C, train.y_star[:32]),
                       params, params.codebook, config,
                       seed_stream(2, "eps"), seed_stream(2, "sgld"), opt)
    np.testing.assert_array_equal(params.codebook.vectors[:, 1, :], before)


def test_ablate_ema_freezes_codebook(tiny_data):
    train, _ = tiny_data
    params, _ = trainer.fit(train, small_config(epochs=1, ablate_ema=True))
    fresh = pipeline.init_model(params.config)
    np.testing.assert_array_equal(params.codebook.vectors, fresh.codebook.vectors)


def test_codebook_never_gradient_updated(tiny_data):
    # decay 1 makes EMA a no-op, so any change would come from gradients
    train, _ = tiny_data
    config = small_config(epochs=1, ema_decay=1.0)
    params, _ = trainer.fit(train, config)
    checksum = hashlib.sha256(params.codebook.vectors.tobytes()).hexdigest()
    fresh = pipeline.init_model(params.config)
    fresh.codebook.decay = 1.0
    assert checksum == hashlib.sha256(fresh.codebook.vectors.tobytes()).hexdigest()


def test_fit_deterministic(tiny_data):
    train, _ = tiny_data
    _, hist_a = trainer.fit(train, small_config())
    _, hist_b = trainer.fit(train, small_config())
    assert hist_a.epochs == hist_b.epochs


def test_fit_history_lengths(tiny_data):
    train, _ = tiny_data
    _, hist = trainer.fit(train, small_config(epochs=3))
    assert len(hist.epochs) == 3
    for rec in hist.epochs:
        for key in ("total_loss", "concept_ce", "task_ce", "energy_loss",
                    "mean_e_data", "mean_e_neg", "concept_acc", "task_acc"):
            assert key in rec


def test_ablate_energy_uses_direct_head(tiny_data):
    train, _ = tiny_data
    params, hist = trainer.fit(train, small_config(ablate_energy=True))
    assert params.config.direct_concept_head
    assert params.direct_w1 is not None
    assert all(rec["energy_loss"] == 0.0 for rec in hist.epochs)


def test_ablate_variational_uses_mean_latent(tiny_data):
    train, _ = tiny_data
    params, _ = trainer.fit(train, small_config(ablate_variational=True, epochs=1))
    # beta heads receive no gradient when eps is disabled
    fresh = pipeline.init_model(params.config)
    np.testing.assert_array_equal(params.encoders.beta_w.data, fresh.encoders.beta_w.data)


def test_invalid_config_rejected():
    with pytest.raises(ContractViolation):
        trainer.TrainConfig(sgld_step_size=0.0).validate()
    with pytest.raises(ContractViolation):
        trainer.TrainConfig(lambda_concept=-1).validate()
    with pytest.raises(ContractViolation):
        trainer.TrainConfig(optimizer="lion").validate()
