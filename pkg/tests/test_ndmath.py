import numpy as np
import pytest

from fedgraph.errors import DimensionMismatch, EmptySegment, InvalidRate
from fedgraph.ndmath import (
    SparseMatrix,
    activation,
    activation_backward,
    dense_matmul,
    dense_matmul_backward,
    dropout_backward,
    dropout_forward,
    row_softmax_segmented,
    row_softmax_segmented_backward,
    spmm,
    spmm_backward,
)


def _random_sparse(rng, rows, cols, density=0.2):
    dense = np.where(rng.random((rows, cols)) < density,
                     rng.standard_normal((rows, cols)), 0.0)
    indptr = np.zeros(rows + 1, dtype=np.int64)
    cols_l, vals = [], []
    for i in range(rows):
        nz = np.flatnonzero(dense[i])
        cols_l.extend(nz.tolist())
        vals.extend(dense[i, nz].tolist())
        indptr[i + 1] = indptr[i] + nz.size
    return SparseMatrix((rows, cols), indptr,
                        np.asarray(cols_l, dtype=np.int64),
                        np.asarray(vals)), dense


def _fd_rel_err(f, x, analytic, eps=1e-5):
    worst = 0.0
    flat = x.reshape(-1)
    aflat = analytic.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = f()
        flat[i] = orig - eps
        down = f()
        flat[i] = orig
        num = (up - down) / (2 * eps)
        worst = max(worst, abs(num - aflat[i]) / max(1.0, abs(num) + abs(aflat[i])))
    return worst


def test_matmul_identity():
    B = np.arange(6.0).reshape(2, 3)
    assert np.array_equal(dense_matmul(np.eye(2), B), B)


def test_matmul_forced_arithmetic():
    out = dense_matmul(np.array([[1.0, 2.0], [3.0, 4.0]]),
                       np.array([[1.0], [1.0]]))
    assert np.array_equal(out, [[3.0], [7.0]])


def test_matmul_shape_error():
    with pytest.raises(DimensionMismatch):
        dense_matmul(np.zeros((2, 3)), np.zeros((2, 3)))


def test_matmul_backward_finite_difference(rng):
    A = rng.standard_normal((7, 5))
    B = rng.standard_normal((5, 3))
    G = rng.standard_normal((7, 3))
    dA, dB = dense_matmul_backward(A, B, G)

    def loss():
        return float((dense_matmul(A, B) * G).sum())

    assert _fd_rel_err(loss, A, dA) < 1e-6
    assert _fd_rel_err(loss, B, dB) < 1e-6


def test_spmm_matches_densified_oracle(rng):
    for _ in range(20):
        S, dense = _random_sparse(rng, 20, 20)
        B = rng.standard_normal((20, 4))
        assert np.allclose(spmm(S, B), dense @ B, atol=1e-12)


def test_spmm_identity_and_zero(rng):
    B = rng.standard_normal((4, 3))
    eye = SparseMatrix((4, 4), np.arange(5, dtype=np.int64),
                       np.arange(4, dtype=np.int64), np.ones(4))
    assert np.array_equal(spmm(eye, B), B)
    zero = SparseMatrix((4, 4), np.zeros(5, dtype=np.int64),
                        np.zeros(0, dtype=np.int64), np.zeros(0))
    assert np.array_equal(spmm(zero, B), np.zeros((4, 3)))


def test_spmm_backward_finite_difference(rng):
    for _ in range(20):
        S, _ = _random_sparse(rng, 6, 5)
        B = rng.standard_normal((5, 3))
        G = rng.standard_normal((6, 3))
        dB = spmm_backward(S, G)

        def loss():
            return float((spmm(S, B) * G).sum())

        assert _fd_rel_err(loss, B, dB) < 1e-4


def test_softmax_symmetry_and_single():
    seg = np.array([0, 0, 1])
    out = row_softmax_segmented(np.array([2.0, 2.0, 5.0]), seg)
    assert np.allclose(out, [0.5, 0.5, 1.0])


def test_softmax_overflow_guard():
    out = row_softmax_segmented(np.array([1000.0, 0.0]), np.array([0, 0]))
    assert np.allclose(out, [1.0, 0.0])
    assert np.all(np.isfinite(out))


def test_softmax_rows_sum_to_one(rng):
    for _ in range(20):
        sizes = rng.integers(1, 6, size=5)
        seg = np.repeat(np.arange(5), sizes)
        vals = rng.standard_normal(seg.size) * 10
        out = row_softmax_segmented(vals, seg)
        assert np.all(out >= 0)
        sums = np.zeros(5)
        np.add.at(sums, seg, out)
        assert np.allclose(sums, 1.0, atol=1e-12)


def test_softmax_empty_segment():
    with pytest.raises(EmptySegment):
        row_softmax_segmented(np.zeros(0), np.zeros(0, dtype=np.int64))


def test_softmax_backward_finite_difference(rng):
    for _ in range(20):
        sizes = rng.integers(1, 5, size=3)
        seg = np.repeat(np.arange(3), sizes)
        x = rng.standard_normal(seg.size)
        G = rng.standard_normal(seg.size)
        probs = row_softmax_segmented(x, seg)
        dx = row_softmax_segmented_backward(probs, seg, G)

        def loss():
            return float((row_softmax_segmented(x, seg) * G).sum())

        assert _fd_rel_err(loss, x, dx) < 1e-4


def test_activation_values():
    assert activation(np.array([-1.0, 2.0]), "relu").tolist() == [0.0, 2.0]
    assert activation(np.array([-1.0]), "leaky_relu", 0.2)[0] == pytest.approx(-0.2)
    x = np.array([3.0, -4.0])
    assert np.array_equal(activation(x, "identity"), x)
    assert np.array_equal(activation_backward(x, "identity"), np.ones(2))


def test_activation_backward_finite_difference(rng):
    for kind in ("relu", "leaky_relu"):
        for _ in range(20):
            # keep away from the kink, where the subgradient is arbitrary
            x = rng.standard_normal(10)
            x = np.where(np.abs(x) < 1e-3, 0.5, x)
            G = rng.standard_normal(10)
            dx = G * activation_backward(x, kind, 0.2)

            def loss():
                return float((activation(x, kind, 0.2) * G).sum())

            assert _fd_rel_err(loss, x, dx) < 1e-4


def test_dropout_rate_zero_and_determinism(rng):
    x = rng.standard_normal((4, 4))
    out, mask = dropout_forward(x, 0.0, rng)
    assert np.array_equal(out, x)
    assert np.all(mask == 1.0)
    a, m1 = dropout_forward(x, 0.5, np.random.default_rng(3))
    b, m2 = dropout_forward(x, 0.5, np.random.default_rng(3))
    assert np.array_equal(a, b)
    assert np.array_equal(m1, m2)


def test_dropout_expectation():
    x = np.ones(100_000)
    out, _ = dropout_forward(x, 0.5, np.random.default_rng(0))
    assert abs(out.mean() - 1.0) < 0.01


def test_dropout_invalid_rate(rng):
    with pytest.raises(InvalidRate):
        dropout_forward(np.zeros(3), 1.0, rng)


def test_dropout_backward(rng):
    G = rng.standard_normal((3, 3))
    mask = (rng.random((3, 3)) > 0.5) * 2.0
    assert np.array_equal(dropout_backward(G, mask), G * mask)
