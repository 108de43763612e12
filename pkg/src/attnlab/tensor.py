"""Dense 2-D float64 linear algebra and seeded randomness.

Matrices are plain C-contiguous ``numpy.float64`` arrays of rank 2; this
module is the only place allowed to decide numeric policy (precision,
random-stream algorithm, rank tolerance). Batch and head dimensions are
explicit loops in callers, never extra array ranks here.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError, ShapeError

DTYPE = np.float64


def as_matrix(values) -> np.ndarray:
    """Coerce to a rank-2 C-contiguous float64 array."""
    m = np.ascontiguousarray(values, dtype=DTYPE)
    if m.ndim != 2:
        raise ShapeError(f"expected a rank-2 array, got rank {m.ndim}")
    return m


class Rng:
    """Counter-based (Philox) random stream; one seed, one owner.

    The same seed produces the same stream on every platform. Parallel
    callers must ``split`` and hand each worker its own child, never share
    one instance.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._seedseq = np.random.SeedSequence(self.seed)
        self._gen = np.random.Generator(np.random.Philox(self._seedseq))

    def gaussian(self, rows: int, cols: int) -> np.ndarray:
        _check_dims(rows, cols)
        return self._gen.standard_normal((rows, cols), dtype=DTYPE)

    def uniform(self, rows: int, cols: int, lo: float, hi: float) -> np.ndarray:
        _check_dims(rows, cols)
        if not lo < hi:
            raise ValueError(f"uniform bounds require lo < hi, got [{lo}, {hi})")
        return self._gen.uniform(lo, hi, size=(rows, cols)).astype(DTYPE, copy=False)

    def integers(self, lo: int, hi: int, size=None):
        return self._gen.integers(lo, hi, size=size)

    def choice(self, n: int, k: int) -> np.ndarray:
        """k distinct indices drawn uniformly from range(n)."""
        return self._gen.choice(n, size=k, replace=False)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def split(self, n: int) -> list["Rng"]:
        """n independent child streams; deterministic in call order."""
        children = self._seedseq.spawn(n)
        out = []
        for child in children:
            rng = Rng.__new__(Rng)
            rng.seed = self.seed
            rng._seedseq = child
            rng._gen = np.random.Generator(np.random.Philox(child))
            out.append(rng)
        return out


def rand_gaussian(rng: Rng, rows: int, cols: int) -> np.ndarray:
    """Standard-normal matrix, deterministic given the rng's seed."""
    return rng.gaussian(rows, cols)


def rand_uniform(rng: Rng, rows: int, cols: int, lo: float, hi: float) -> np.ndarray:
    """Uniform [lo, hi) matrix, deterministic given the rng's seed."""
    return rng.uniform(rows, cols, lo, hi)


def matmul(a, b) -> np.ndarray:
    """Standard matrix product with 64-bit accumulation."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} x {b.shape}")
    return a @ b


def stable_softmax_rows(m) -> np.ndarray:
    """Row-wise softmax with per-row max subtraction.

    Finite input rows always produce finite rows summing to 1 within 1e-12;
    a spread of 1e3 between row entries cannot overflow.
    """
    m = as_matrix(m)
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def rank_estimate(m, tol: float = 1e-9) -> int:
    """Number of singular values above tol times the largest one."""
    m = as_matrix(m)
    if m.size == 0:
        raise ShapeError("rank_estimate requires a nonempty matrix")
    try:
        s = np.linalg.svd(m, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD did not converge: {exc}") from exc
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def _check_dims(rows: int, cols: int) -> None:
    if rows < 1 or cols < 1:
        raise ValueError(f"matrix dims must be >= 1, got {rows}x{cols}")
