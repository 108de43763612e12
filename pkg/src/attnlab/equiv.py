"""Randomized explicit-vs-fast equivalence suite.

The reordered linear-time paths must match the explicit-score paths to
1e-9 max-abs over random shapes and kernels; this is the package's central
oracle and the ``equiv`` command's backing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import (
    attend_explicit,
    inline_attention_fast,
    inline_scores,
    linear_attention_fast,
    linear_scores,
)
from .errors import DegenerateDenominatorError
from .kernels import (
    KERNEL_KINDS,
    KernelSpec,
    exponential,
    identity,
    leaky_relu,
    make_affine_relu,
    relu,
)
from .tensor import Rng

DEFAULT_TOLERANCE = 1e-9


@dataclass
class EquivCase:
    index: int
    variant: str
    kernel: str
    n: int
    d: int
    max_abs_diff: float


def _draw_kernel(kind: str, rng: Rng, d: int) -> KernelSpec:
    if kind == "identity":
        return identity()
    if kind == "relu":
        return relu()
    if kind == "leaky_relu":
        return leaky_relu()
    if kind == "exponential":
        return exponential()
    return make_affine_relu(rng, d)


def _well_conditioned(q, k, kernel) -> bool:
    """Keep divisive scores bounded: tiny normalizers amplify roundoff.

    Requires every row normalizer to be at least 2% of the row's largest
    kernel product, i.e. score magnitudes stay below ~50. Signed kernels
    (identity, leaky) can fail this; nonnegative kernels always pass.
    """
    from .kernels import apply_kernel

    t = np.asarray(apply_kernel(kernel, q)) @ np.asarray(apply_kernel(kernel, k)).T
    den = np.abs(t.sum(axis=1))
    peak = np.abs(t).max(axis=1)
    return bool(np.all(den >= 0.02 * np.maximum(peak, 1e-300)))


def equivalence_suite(seed: int, cases: int = 200, n_max: int = 512,
                      d_max: int = 32, perturb: float = 0.0) -> list[EquivCase]:
    """Compare fast and explicit outputs over random (N, d, kernel) configs.

    ``perturb`` > 0 injects that offset into one fast-path entry of every
    case, a negative control proving the comparison can fail.
    """
    rng = Rng(seed)
    out = []
    idx = 0
    while idx < cases:
        n = int(rng.integers(1, n_max + 1))
        d = int(rng.integers(1, d_max + 1))
        kind = KERNEL_KINDS[int(rng.integers(0, len(KERNEL_KINDS)))]
        variant = ("linear", "inline")[int(rng.integers(0, 2))]
        kernel = _draw_kernel(kind, rng, d)
        # moderate input scale keeps exponential kernels well conditioned
        scale = float(d) ** -0.25 * (0.5 if kind == "exponential" else 1.0)
        q = rng.gaussian(n, d) * scale
        k = rng.gaussian(n, d) * scale
        v = rng.gaussian(n, d)
        try:
            if variant == "linear":
                if not _well_conditioned(q, k, kernel):
                    continue  # a tiny normalizer measures conditioning, not order
                fast = linear_attention_fast(q, k, v, kernel)
                explicit = attend_explicit(linear_scores(q, k, kernel), v)
            else:
                fast = inline_attention_fast(q, k, v, kernel)
                explicit = attend_explicit(inline_scores(q, k, kernel), v)
        except DegenerateDenominatorError:
            continue  # astronomically rare draw; redraw rather than fail
        if perturb:
            fast = fast.copy()
            fast.flat[0] += perturb
        diff = float(np.abs(fast - explicit).max())
        out.append(EquivCase(idx, variant, kind, n, d, diff))
        idx += 1
    return out


def worst_case(cases: list[EquivCase]) -> float:
    return max(c.max_abs_diff for c in cases)
