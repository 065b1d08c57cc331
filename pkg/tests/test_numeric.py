import numpy as np
import pytest

from emoforge.errors import DegenerateInputError, InvalidInputError, ShapeError
from emoforge.numeric import (
    cosine_similarity,
    l2_normalize_rows,
    rng_stream,
    softmax_rows,
)


def test_softmax_symmetry():
    out = softmax_rows([[0.0, 0.0, 0.0]])
    np.testing.assert_allclose(out, [[1 / 3, 1 / 3, 1 / 3]], atol=1e-15)


def test_softmax_single_element():
    for x in (-7.0, 0.0, 123.0):
        assert softmax_rows([[x]])[0, 0] == 1.0


def test_softmax_hand_case():
    out = softmax_rows([[np.log(1.0), np.log(3.0)]])
    np.testing.assert_allclose(out, [[0.25, 0.75]], atol=1e-14)


def test_softmax_rows_sum_to_one_for_wide_range():
    rng = np.random.default_rng(7)
    for _ in range(50):
        m = rng.uniform(-50, 50, size=(5, 9))
        out = softmax_rows(m)
        np.testing.assert_allclose(out.sum(axis=1), np.ones(5), atol=1e-12)
        assert (out > 0).all() and (out <= 1).all()


def test_softmax_rejects_nonfinite():
    with pytest.raises(InvalidInputError):
        softmax_rows([[np.nan, 1.0]])
    with pytest.raises(InvalidInputError):
        softmax_rows([[np.inf, 1.0]])


def test_l2_normalize_345():
    np.testing.assert_allclose(l2_normalize_rows([[3.0, 4.0]]), [[0.6, 0.8]], atol=1e-15)


def test_l2_normalize_identity_and_sign():
    row = np.array([[0.0, 1.0, 0.0]])
    np.testing.assert_allclose(l2_normalize_rows(row), row, atol=1e-15)
    np.testing.assert_allclose(l2_normalize_rows([[-2.0, 0.0, 0.0]]), [[-1.0, 0.0, 0.0]], atol=1e-15)


def test_l2_normalize_idempotent():
    rng = np.random.default_rng(3)
    m = rng.normal(size=(6, 4))
    once = l2_normalize_rows(m)
    twice = l2_normalize_rows(once)
    np.testing.assert_allclose(once, twice, atol=1e-12)


def test_l2_normalize_zero_row_raises():
    with pytest.raises(DegenerateInputError):
        l2_normalize_rows([[0.0, 0.0]])


def test_cosine_basics():
    v = np.array([1.0, 2.0, -3.0])
    assert cosine_similarity(v, v) == pytest.approx(1.0)
    assert cosine_similarity(v, -v) == pytest.approx(-1.0)
    assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0)


def test_cosine_symmetry_and_scale_invariance():
    rng = np.random.default_rng(11)
    for _ in range(25):
        a = rng.normal(size=8)
        b = rng.normal(size=8)
        assert cosine_similarity(a, b) == pytest.approx(cosine_similarity(b, a), abs=1e-12)
        k = rng.uniform(0.1, 10.0)
        assert cosine_similarity(k * a, b) == pytest.approx(cosine_similarity(a, b), abs=1e-12)


def test_cosine_errors():
    with pytest.raises(DegenerateInputError):
        cosine_similarity([0.0, 0.0], [1.0, 0.0])
    with pytest.raises(ShapeError):
        cosine_similarity([1.0, 0.0], [1.0, 0.0, 0.0])


def test_rng_stream_determinism_and_independence():
    a1 = rng_stream(42, "alpha").normal(size=10)
    a2 = rng_stream(42, "alpha").normal(size=10)
    b = rng_stream(42, "beta").normal(size=10)
    np.testing.assert_array_equal(a1, a2)
    assert not np.allclose(a1, b)
    assert not np.allclose(a1, rng_stream(43, "alpha").normal(size=10))
