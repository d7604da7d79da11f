"""Dense and sparse numeric kernels with hand-derived backward rules.

All arithmetic is float64. There is no autodiff tape: every layer owns
its backward, and each rule here is finite-difference checked in the
test suite. Forward aggregations over neighbor sets sum contributions
in sorted-value order, which makes graph-level outputs bit-identical
under any node relabeling; backward passes use scipy's CSR kernels
(gradients need only be correct and deterministic per graph).
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, EmptySegment, InvalidRate


@dataclass(frozen=True)
class SparseMatrix:
    """CSR matrix; same structural invariants as the graph CSR."""

    shape: tuple[int, int]
    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.values, self.indices, self.indptr), shape=self.shape
        )

    def transpose(self) -> "SparseMatrix":
        t = self.to_scipy().transpose().tocsr()
        t.sort_indices()
        return SparseMatrix(
            shape=(self.shape[1], self.shape[0]),
            indptr=t.indptr.astype(np.int64),
            indices=t.indices.astype(np.int64),
            values=t.data.astype(np.float64),
        )

    def densify(self) -> np.ndarray:
        return self.to_scipy().toarray()


def dense_matmul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if A.shape[1] != B.shape[0]:
        raise DimensionMismatch(f"matmul {A.shape} x {B.shape}")
    return A @ B


def dense_matmul_backward(A, B, G):
    """dL/dA = G B^T, dL/dB = A^T G."""
    return G @ B.T, A.T @ G


def spmm(S: SparseMatrix, B: np.ndarray) -> np.ndarray:
    if S.shape[1] != B.shape[0]:
        raise DimensionMismatch(f"spmm {S.shape} x {B.shape}")
    # order-canonical row sums: per output entry, contributions are added
    # smallest-value first, so the result is invariant to column relabeling
    contrib = S.values[:, None] * B[S.indices]
    out = np.zeros((S.shape[0], B.shape[1]))
    for i in range(S.shape[0]):
        lo, hi = S.indptr[i], S.indptr[i + 1]
        if hi > lo:
            out[i] = np.sort(contrib[lo:hi], axis=0).sum(axis=0)
    return out


def spmm_backward(S: SparseMatrix, G: np.ndarray) -> np.ndarray:
    """dL/dB = S^T G."""
    return S.to_scipy().T @ G


def row_softmax_segmented(values: np.ndarray, segment_ids: np.ndarray) -> np.ndarray:
    """Softmax within each contiguous segment, max-shifted for stability."""
    values = np.asarray(values, dtype=np.float64)
    out = np.empty_like(values)
    for lo, hi in _segment_bounds(segment_ids):
        seg = values[lo:hi]
        e = np.exp(seg - seg.max())
        out[lo:hi] = e / np.sort(e).sum()  # order-canonical denominator
    return out


def row_softmax_segmented_backward(probs, segment_ids, G):
    """Per segment: dx = p * (g - <p, g>)."""
    dx = np.empty_like(probs)
    for lo, hi in _segment_bounds(segment_ids):
        p = probs[lo:hi]
        g = G[lo:hi]
        dx[lo:hi] = p * (g - np.dot(p, g))
    return dx


def _segment_bounds(segment_ids):
    segment_ids = np.asarray(segment_ids)
    if segment_ids.size == 0:
        raise EmptySegment("no segments")
    change = np.flatnonzero(np.diff(segment_ids)) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [segment_ids.size]))
    return zip(starts.tolist(), ends.tolist())


def activation(x: np.ndarray, kind: str = "relu", slope: float = 0.2) -> np.ndarray:
    if kind == "identity":
        return x
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "leaky_relu":
        return np.where(x >= 0, x, slope * x)
    raise ValueError(f"unknown activation {kind!r}")


def activation_backward(x, kind: str = "relu", slope: float = 0.2) -> np.ndarray:
    """Derivative evaluated at the pre-activation x."""
    if kind == "identity":
        return np.ones_like(x)
    if kind == "relu":
        return (x > 0).astype(np.float64)
    if kind == "leaky_relu":
        return np.where(x >= 0, 1.0, slope)
    raise ValueError(f"unknown activation {kind!r}")


def dropout_forward(x: np.ndarray, rate: float, rng: np.random.Generator):
    """Inverted dropout; kept entries scaled by 1/(1-rate)."""
    if not (0.0 <= rate < 1.0):
        raise InvalidRate(f"dropout rate {rate} outside [0, 1)")
    if rate == 0.0:
        return x, np.ones_like(x)
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(G, mask):
    return G * mask
