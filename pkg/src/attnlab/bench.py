"""Wall-clock and modeled-cost benchmarking of the attention variants.

Timed regions pin the BLAS pool to one thread so fitted slopes reflect
algorithmic complexity, and short kernels are amortized over an inner loop
sized to a minimum measurement window. Medians over fresh-input repetitions
are reported; log-log least squares turns them into scaling exponents.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .attention import (
    inline_attention_fast,
    linear_attention_fast,
    madds_inline_fast,
    madds_linear_fast,
    madds_softmax_explicit,
    window_index_groups,
)
from .kernels import KernelSpec, apply_kernel, identity as k_identity
from .tensor import Rng

BENCH_VARIANTS = ("softmax_explicit", "linear_fast", "inline_fast")

# keep the blocked score buffer around this many float64 entries
_BLOCK_BUDGET = 4_000_000


def softmax_attention_explicit(q: np.ndarray, k: np.ndarray,
                               v: np.ndarray) -> np.ndarray:
    """Explicit-score softmax attention, computed in row blocks.

    Does the full O(N^2 d) work of the quadratic algorithm; blocking only
    bounds the transient score buffer so large N fits in memory.
    """
    n = q.shape[0]
    rows = max(1, min(n, _BLOCK_BUDGET // max(n, 1)))
    out = np.empty((n, v.shape[1]))
    for lo in range(0, n, rows):
        logits = q[lo:lo + rows] @ k.T
        logits -= logits.max(axis=1, keepdims=True)
        np.exp(logits, out=logits)
        logits /= logits.sum(axis=1, keepdims=True)
        out[lo:lo + rows] = logits @ v
    return out


def _windowed(fn, groups):
    def run(q, k, v):
        out = np.empty((q.shape[0], v.shape[1]))
        for idx in groups:
            out[idx] = fn(q[idx], k[idx], v[idx])
        return out

    return run


def _kernel_for(tag: str, n: int, d: int, grid=None, window=None,
                kernel: Optional[KernelSpec] = None):
    kernel = kernel or k_identity()
    if tag == "softmax_explicit":
        fn, madds = softmax_attention_explicit, madds_softmax_explicit
    elif tag == "linear_fast":
        fn = lambda q, k, v: linear_attention_fast(q, k, v, kernel)
        madds = madds_linear_fast
    elif tag == "inline_fast":
        fn = lambda q, k, v: inline_attention_fast(q, k, v, kernel)
        madds = madds_inline_fast
    else:
        raise ValueError(f"unknown bench variant '{tag}'")
    if window is not None and grid is not None:
        groups = window_index_groups(grid, window)
        modeled = sum(madds(len(g), d) for g in groups)
        return _windowed(fn, groups), modeled
    return fn, madds(n, d)


@dataclass
class BenchRecord:
    variant: str
    n: int
    d: int
    h: int
    window: Optional[int]
    median_seconds: float
    modeled_madds: int
    repetitions: int
    skipped: bool = False


@dataclass
class FitResult:
    variant: str
    slope: float
    intercept: float
    r_squared: float


def _single_thread():
    try:
        from threadpoolctl import threadpool_limits

        return threadpool_limits(limits=1)
    except ImportError:  # pragma: no cover - dependency is declared
        import contextlib

        return contextlib.nullcontext()


def time_kernel(fn, make_inputs, repetitions: int = 5,
                min_window: float = 0.02) -> float:
    """Median seconds per call; fresh inputs per repetition, warmup included.

    Calls are batched in an inner loop sized so that one measurement spans
    at least ``min_window`` seconds, which keeps sub-millisecond kernels
    from dissolving into timer noise.
    """
    if repetitions < 5:
        raise ValueError("need at least 5 repetitions")
    args = make_inputs()
    fn(*args)  # warmup
    start = time.perf_counter()
    fn(*args)
    once = max(time.perf_counter() - start, 1e-9)
    inner = max(1, int(math.ceil(min_window / once)))
    times = []
    with _single_thread():
        for _ in range(repetitions):
            args = make_inputs()
            start = time.perf_counter()
            for _ in range(inner):
                fn(*args)
            times.append((time.perf_counter() - start) / inner)
    return float(np.median(times))


def sweep_sequence_length(variants, n_values, d: int, rng: Rng,
                          repetitions: int = 5) -> list[BenchRecord]:
    """Measure each variant across strictly increasing sequence lengths."""
    n_values = list(n_values)
    if any(b <= a for a, b in zip(n_values, n_values[1:])):
        raise ValueError("sequence lengths must be strictly increasing")
    records = []
    for tag in variants:
        for n in n_values:
            fn, modeled = _kernel_for(tag, n, d)

            def make_inputs(n=n):
                return (rng.gaussian(n, d), rng.gaussian(n, d), rng.gaussian(n, d))

            try:
                median = time_kernel(fn, make_inputs, repetitions)
            except MemoryError:
                records.append(BenchRecord(tag, n, d, 1, None, 0.0, modeled,
                                           repetitions, skipped=True))
                continue
            records.append(BenchRecord(tag, n, d, 1, None, median, modeled,
                                       repetitions))
    return records


def sweep_window_size(windows, grid: tuple[int, int], d: int, rng: Rng,
                      repetitions: int = 5,
                      variants=("softmax_explicit", "inline_fast")) -> list[BenchRecord]:
    """Measure windowed attention at fixed N for growing window sides."""
    n = grid[0] * grid[1]
    records = []
    for tag in variants:
        for w in windows:
            fn, modeled = _kernel_for(tag, n, d, grid=grid, window=w)

            def make_inputs():
                return (rng.gaussian(n, d), rng.gaussian(n, d), rng.gaussian(n, d))

            median = time_kernel(fn, make_inputs, repetitions)
            records.append(BenchRecord(tag, n, d, 1, w, median, modeled,
                                       repetitions))
    return records


def fit_slope(records: list[BenchRecord]) -> FitResult:
    """Least squares of ln(time) against ln(N) for one variant's records."""
    usable = [r for r in records if not r.skipped]
    if len(usable) < 4:
        raise ValueError(f"need at least 4 records to fit, got {len(usable)}")
    tags = {r.variant for r in usable}
    if len(tags) != 1:
        raise ValueError(f"records mix variants: {sorted(tags)}")
    x = np.log([r.n for r in usable])
    y = np.log([r.median_seconds for r in usable])
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(((y - fitted) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return FitResult(usable[0].variant, float(slope), float(intercept), r2)
