import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ebcbm import qcav
from ebcbm.errors import ContractViolation
from ebcbm.numerics import seed_stream


def make_book(K=3, d=4, seed=0, decay=0.95):
    return qcav.init(K, d, seed=seed, decay=decay)


def test_init_shape_and_bound():
    book = qcav.init(112, 16, seed=1)
    assert book.vectors.shape == (112, 2, 16)
    assert np.all(np.abs(book.vectors) <= 0.25)
    assert book.step == 0


def test_init_deterministic():
    a = qcav.init(5, 8, seed=9)
    b = qcav.init(5, 8, seed=9)
    assert np.array_equal(a.vectors, b.vectors)


def test_init_rejects_bad_sizes():
    with pytest.raises(ContractViolation):
        qcav.init(0, 4, seed=0)
    with pytest.raises(ContractViolation):
        qcav.init(4, 0, seed=0)


def test_all_positive_labels_leave_negative_branch_untouched():
    book = make_book()
    before = book.vectors[1, 1].copy()
    v = seed_stream(2, "v").normal(size=(6, 4)).astype(np.float32)
    qcav.ema_update(book, 1, v, np.ones(6, dtype=int))
    assert np.array_equal(book.vectors[1, 1], before)
    assert not np.array_equal(book.vectors[1, 0], before)
    assert book.step == 1


def test_update_from_zero_vector_is_scaled_batch_mean():
    book = make_book(decay=0.95)
    book.vectors[0, 0] = 0.0
    v = np.tile(np.array([1.0, 2.0, -1.0, 0.5], dtype=np.float32), (3, 1))
    qcav.ema_update(book, 0, v, np.ones(3, dtype=int))
    np.testing.assert_allclose(book.vectors[0, 0], 0.05 * v[0], rtol=1e-6)


def test_decay_one_is_noop():
    book = make_book(decay=1.0)
    before = book.vectors.copy()
    v = seed_stream(3, "v").normal(size=(5, 4)).astype(np.float32)
    qcav.ema_update(book, 2, v, np.array([0, 1, 0, 1, 1]))
    assert np.array_equal(book.vectors, before)
    assert book.step == 1


def test_length_mismatch_rejected():
    book = make_book()
    with pytest.raises(ContractViolation):
        qcav.ema_update(book, 0, np.zeros((4, 4), dtype=np.float32), np.zeros(3))


@settings(max_examples=150, deadline=None)
@given(
    seed=st.integers(0, 2**31 - 1),
    decay=st.floats(0.0, 1.0),
    labels=st.lists(st.integers(0, 1), min_size=1, max_size=8),
)
def test_ema_convexity_and_branch_isolation(seed, decay, labels):
    rng = seed_stream(seed, "prop")
    book = qcav.init(2, 3, seed=seed, decay=decay)
    before = book.vectors.copy()
    v = rng.normal(size=(len(labels), 3)).astype(np.float32)
    labels = np.array(labels)
    qcav.ema_update(book, 0, v, labels)
    for branch, wanted in ((0, 1), (1, 0)):
        mask = labels == wanted
        if not mask.any():
            assert np.array_equal(book.vectors[0, branch], before[0, branch])
            continue
        m = v[mask].mean(axis=0)
        lo = np.minimum(before[0, branch], m) - 1e-5
        hi = np.maximum(before[0, branch], m) + 1e-5
        assert np.all(book.vectors[0, branch] >= lo)
        assert np.all(book.vectors[0, branch] <= hi)
    assert np.array_equal(book.vectors[1], before[1])


def test_select_thresholding_and_override():
    book = make_book(K=3)
    sel = qcav.select(book, [0.9, 0.2, 0.6])
    np.testing.assert_array_equal(sel[0], book.vectors[0, 0])
    np.testing.assert_array_equal(sel[1], book.vectors[1, 1])
    np.testing.assert_array_equal(sel[2], book.vectors[2, 0])

    sel2 = qcav.select(book, [0.9, 0.2, 0.6], overrides={1: 1})
    np.testing.assert_array_equal(sel2[1], book.vectors[1, 0])
    np.testing.assert_array_equal(sel2[0], sel[0])
    np.testing.assert_array_equal(sel2[2], sel[2])


def test_select_tie_goes_positive():
    book = make_book(K=1)
    sel = qcav.select(book, [0.5])
    np.testing.assert_array_equal(sel[0], book.vectors[0, 0])


def test_select_rejects_out_of_range_score():
    book = make_book(K=1)
    with pytest.raises(ContractViolation):
        qcav.select(book, [1.5])


def test_select_rejects_bad_override():
    book = make_book(K=2)
    with pytest.raises(ContractViolation):
        qcav.select(book, [0.5, 0.5], overrides={5: 1})
    with pytest.raises(ContractViolation):
        qcav.select(book, [0.5, 0.5], overrides={0: 2})


def test_select_pure_function():
    book = make_book(K=4)
    a = qcav.select(book, [0.1, 0.9, 0.5, 0.3], overrides={3: 1})
    b = qcav.select(book, [0.1, 0.9, 0.5, 0.3], overrides={3: 1})
    assert np.array_equal(a, b)


def test_select_batch_matches_select():
    book = make_book(K=4)
    rng = seed_stream(5, "scores")
    scores = rng.uniform(size=(6, 4))
    batch = qcav.select_batch(book, scores)
    for i in range(6):
        np.testing.assert_array_equal(batch[i], qcav.select(book, scores[i]))
