"""Attention variants: softmax, kernelized-divisive, and subtractive-normalized.

Every formula is written once against the autodiff dispatch helpers, so each
function accepts plain float64 arrays (rank 2, or rank 3 with a leading batch
axis) as well as tape variables for gradient work. Explicit-score paths
materialize the full weight matrix; the ``*_fast`` paths reorder the matrix
products and never build an N x N intermediate.

Weight-matrix orientation: entry (i, j) is query i's weight on key j.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .errors import DegenerateDenominatorError, ShapeError, StateError
from .kernels import KernelSpec, apply_kernel
from .tensor import Rng

DENOMINATOR_FLOOR = 1e-12

VARIANT_KINDS = ("softmax", "linear", "inline", "inline_residual")


@dataclass
class ProjectionParams:
    """Per-head query/key/value projections, all shaped (model_dim, head_dim)."""

    w_q: list
    w_k: list
    w_v: list
    head_count: int
    model_dim: int
    head_dim: int

    def __post_init__(self):
        if self.model_dim != self.head_count * self.head_dim:
            raise ShapeError(
                f"model_dim {self.model_dim} != heads {self.head_count} x "
                f"head_dim {self.head_dim}"
            )
        for group in (self.w_q, self.w_k, self.w_v):
            if len(group) != self.head_count:
                raise ShapeError("need one projection per head")

    @classmethod
    def random(cls, rng: Rng, model_dim: int, head_count: int) -> "ProjectionParams":
        if model_dim % head_count:
            raise ShapeError(f"head count {head_count} must divide dim {model_dim}")
        head_dim = model_dim // head_count
        scale = 1.0 / np.sqrt(model_dim)
        make = lambda: [rng.gaussian(model_dim, head_dim) * scale for _ in range(head_count)]
        return cls(make(), make(), make(), head_count, model_dim, head_dim)


@dataclass
class ResidualPredictor:
    """Two-layer ReLU MLP mapping the token mean to nine neighbor weights."""

    w1: object
    b1: object
    w2: object
    b2: object

    def weights(self, x):
        """Predict the 9-vector of neighbor weights from tokens x (..., N, C)."""
        xbar = ad.amean(x, axis=-2, keepdims=True)
        hidden = ad.relu(xbar @ self.w1 + self.b1)
        return hidden @ self.w2 + self.b2  # (..., 1, 9)

    @classmethod
    def random(cls, rng: Rng, in_dim: int, hidden: int | None = None,
               zero_output: bool = False) -> "ResidualPredictor":
        hidden = in_dim if hidden is None else hidden
        s1 = 1.0 / np.sqrt(in_dim)
        s2 = 1.0 / np.sqrt(hidden)
        w2 = np.zeros((hidden, 9)) if zero_output else rng.gaussian(hidden, 9) * s2
        return cls(
            w1=rng.gaussian(in_dim, hidden) * s1,
            b1=np.zeros(hidden),
            w2=w2,
            b2=np.zeros(9),
        )


@dataclass
class AttentionVariant:
    """Which attention to run, with its kernel / window / residual settings."""

    kind: str
    kernel: Optional[KernelSpec] = None
    predictor: Optional[ResidualPredictor] = None
    window: Optional[int] = None
    temperature: float = 1.0
    confusion: object = None  # optional query-confusion map applied per head

    def __post_init__(self):
        if self.kind not in VARIANT_KINDS:
            raise ValueError(f"unknown attention kind '{self.kind}'")
        if self.kind in ("linear", "inline", "inline_residual") and self.kernel is None:
            raise ValueError(f"variant '{self.kind}' requires a kernel")
        if self.kind == "inline_residual" and self.predictor is None:
            raise ValueError("inline_residual requires a predictor")
        if self.window is not None and self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")


def softmax(window=None, temperature: float = 1.0, confusion=None) -> AttentionVariant:
    return AttentionVariant("softmax", window=window, temperature=temperature,
                            confusion=confusion)


def linear(kernel: KernelSpec, window=None) -> AttentionVariant:
    return AttentionVariant("linear", kernel=kernel, window=window)


def inline(kernel: KernelSpec, window=None) -> AttentionVariant:
    return AttentionVariant("inline", kernel=kernel, window=window)


def inline_residual(kernel: KernelSpec, predictor: ResidualPredictor,
                    window=None) -> AttentionVariant:
    return AttentionVariant("inline_residual", kernel=kernel, predictor=predictor,
                            window=window)


# -- score functions ---------------------------------------------------------


def _check_qk(q, k) -> None:
    if ad.shape_of(q)[-1] != ad.shape_of(k)[-1]:
        raise ShapeError(
            f"query width {ad.shape_of(q)} incompatible with keys {ad.shape_of(k)}"
        )


def _check_denominator(den) -> None:
    mag = np.abs(ad.value(den))
    if mag.min() < DENOMINATOR_FLOOR:
        where = np.unravel_index(int(np.argmin(mag)), mag.shape)
        raise DegenerateDenominatorError(where[-2], float(mag.min()))


def softmax_scores(q, k, temperature: float = 1.0):
    """Row-stochastic exp(q . k / temperature) weights, max-shifted for stability."""
    _check_qk(q, k)
    logits = (q @ ad.swapaxes(k, -1, -2)) / temperature
    return ad.softmax_lastaxis(logits)


def linear_scores(q, k, kernel: KernelSpec):
    """Kernelized scores with divisive normalization.

    Raises :class:`DegenerateDenominatorError` when any row normalizer has
    magnitude below 1e-12; silently rescuing it would hide exactly the
    sign-flip pathology non-nonnegative kernels exhibit.
    """
    _check_qk(q, k)
    t = apply_kernel(kernel, q) @ ad.swapaxes(apply_kernel(kernel, k), -1, -2)
    den = ad.asum(t, axis=-1, keepdims=True)
    _check_denominator(den)
    return t / den


def inline_scores(q, k, kernel: KernelSpec):
    """Kernelized scores normalized by subtraction: t - mean(t) + 1/N.

    Rows sum to 1 by algebraic identity, with no division anywhere, so there
    is no degenerate case. Entries may be negative.
    """
    _check_qk(q, k)
    t = apply_kernel(kernel, q) @ ad.swapaxes(apply_kernel(kernel, k), -1, -2)
    n = ad.shape_of(t)[-1]
    return t - ad.amean(t, axis=-1, keepdims=True) + 1.0 / n


def attend_explicit(scores, v):
    """Output = scores @ values; the reference path for every fast variant."""
    if ad.shape_of(scores)[-1] != ad.shape_of(v)[-2]:
        raise ShapeError(
            f"scores {ad.shape_of(scores)} cannot aggregate values {ad.shape_of(v)}"
        )
    return scores @ v


def linear_attention_fast(q, k, v, kernel: KernelSpec):
    """Divisively normalized attention in O(N d^2) via reordered products."""
    _check_qk(q, k)
    if ad.shape_of(k)[-2] != ad.shape_of(v)[-2]:
        raise ShapeError("keys and values disagree on token count")
    pq = apply_kernel(kernel, q)
    pk = apply_kernel(kernel, k)
    m = ad.swapaxes(pk, -1, -2) @ v                    # (d, d)
    s = ad.asum(pk, axis=-2, keepdims=True)            # (1, d)
    den = ad.asum(pq * s, axis=-1, keepdims=True)      # (N, 1)
    _check_denominator(den)
    return (pq @ m) / den


def inline_attention_fast(q, k, v, kernel: KernelSpec):
    """Subtractively normalized attention in O(N d^2).

    Output row i is phi(q_i)^T [sum_j phi(k_j) v_j^T] minus
    (phi(q_i)^T sum_j phi(k_j) - 1) times the value mean; the key sum and
    value mean are computed once and reused for every query.
    """
    _check_qk(q, k)
    if ad.shape_of(k)[-2] != ad.shape_of(v)[-2]:
        raise ShapeError("keys and values disagree on token count")
    pq = apply_kernel(kernel, q)
    pk = apply_kernel(kernel, k)
    m = ad.swapaxes(pk, -1, -2) @ v                    # (d, d)
    s = ad.asum(pk, axis=-2, keepdims=True)            # (1, d)
    vbar = ad.amean(v, axis=-2, keepdims=True)         # (1, d)
    ps = ad.asum(pq * s, axis=-1, keepdims=True)       # (N, 1)
    return pq @ m - (ps - 1.0) * vbar


# -- 3x3 neighborhoods and the local residual --------------------------------


def neighbor_indices(grid: tuple[int, int]) -> np.ndarray:
    """(N, 9) token indices of each row-major grid cell's 3x3 neighborhood.

    Neighbor order is row-major over (dr, dc) offsets, so slot 4 is the cell
    itself. Out-of-grid neighbors are -1.
    """
    h, w = grid
    rows, cols = np.divmod(np.arange(h * w), w)
    offsets = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1)]
    out = np.full((h * w, 9), -1, dtype=np.int64)
    for j, (dr, dc) in enumerate(offsets):
        rr, cc = rows + dr, cols + dc
        ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
        out[ok, j] = rr[ok] * w + cc[ok]
    return out


_NEIGHBOR_OFFSETS = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1)]


def _shift_mix(values: np.ndarray, weights: np.ndarray, grid: tuple[int, int],
               flip: bool) -> np.ndarray:
    """Sum_j w_j * values shifted by neighbor offset j (zero beyond the grid).

    values: (..., N, d); weights: (..., 1, 9). ``flip`` negates the offsets,
    which is exactly the transpose needed by the backward pass.
    """
    h, w = grid
    lead = values.shape[:-2]
    d = values.shape[-1]
    vg = values.reshape(lead + (h, w, d))
    padded = np.zeros(lead + (h + 2, w + 2, d))
    padded[..., 1:h + 1, 1:w + 1, :] = vg
    out = np.zeros_like(vg)
    for j, (dr, dc) in enumerate(_NEIGHBOR_OFFSETS):
        if flip:
            dr, dc = -dr, -dc
        wj = weights[..., 0, j]
        out += wj[..., None, None, None] * padded[..., 1 + dr:h + 1 + dr,
                                                  1 + dc:w + 1 + dc, :]
    return out.reshape(values.shape)


def _shift_weight_grads(values: np.ndarray, grad: np.ndarray,
                        grid: tuple[int, int]) -> np.ndarray:
    """d(loss)/d(weights): per offset, the overlap of grad with shifted values."""
    h, w = grid
    lead = values.shape[:-2]
    d = values.shape[-1]
    vg = values.reshape(lead + (h, w, d))
    gg = grad.reshape(lead + (h, w, d))
    padded = np.zeros(lead + (h + 2, w + 2, d))
    padded[..., 1:h + 1, 1:w + 1, :] = vg
    out = np.zeros(lead + (1, 9))
    for j, (dr, dc) in enumerate(_NEIGHBOR_OFFSETS):
        shifted = padded[..., 1 + dr:h + 1 + dr, 1 + dc:w + 1 + dc, :]
        out[..., 0, j] = (gg * shifted).sum(axis=(-3, -2, -1))
    return out


def _apply_neighbor_weights(v, grid, r):
    """Weighted 3x3 neighbor sum; out-of-grid neighbors contribute zero."""
    if not (isinstance(v, ad.Var) or isinstance(r, ad.Var)):
        return _shift_mix(v, r, grid, flip=False)
    v = v if isinstance(v, ad.Var) else ad.Var(v)
    r = r if isinstance(r, ad.Var) else ad.Var(r)
    out = _shift_mix(v.value, r.value, grid, flip=False)

    def vjp(g):
        return (
            _shift_mix(g, r.value, grid, flip=True),
            ad._unbroadcast(_shift_weight_grads(v.value, g, grid), r.value.shape),
        )

    return ad.Var(out, (v, r), vjp)


def local_residual(v, grid: tuple[int, int], predictor: ResidualPredictor, x):
    """Predicted local-attention addition shared by all positions.

    One 9-vector r comes from the predictor applied to the mean of the
    module-input tokens x; output row i is sum_j r_j * v at neighbor j of i.
    """
    h, w = grid
    if ad.shape_of(v)[-2] != h * w:
        raise ShapeError(f"grid {grid} does not cover {ad.shape_of(v)[-2]} tokens")
    if ad.shape_of(x)[-1] != ad.shape_of(predictor.w1)[0]:
        raise ShapeError("predictor input width does not match token width")
    if ad.shape_of(predictor.w2)[-1] != 9:
        raise ShapeError("predictor must emit exactly 9 neighbor weights")
    r = predictor.weights(x)
    return _apply_neighbor_weights(v, grid, r)


# -- window partitioning ------------------------------------------------------


@dataclass
class Window:
    """One w x w tile: zero-padded data plus the indices of its real tokens."""

    data: np.ndarray          # (w*w, C), zero rows where padded
    origin: tuple[int, int]   # (row, col) of the tile's top-left grid cell
    token_indices: np.ndarray  # (w*w,) int, -1 at padded slots


def window_index_groups(grid: tuple[int, int], w: int) -> list[np.ndarray]:
    """Real-token index lists for each tile, row-major tiles and cells."""
    if w < 1:
        raise ValueError(f"window must be >= 1, got {w}")
    h, wid = grid
    groups = []
    for r0 in range(0, h, w):
        for c0 in range(0, wid, w):
            rr = np.arange(r0, min(r0 + w, h))
            cc = np.arange(c0, min(c0 + w, wid))
            groups.append((rr[:, None] * wid + cc[None, :]).ravel())
    return groups


def window_partition(x, grid: tuple[int, int], w: int) -> list[Window]:
    """Tile the (padded) grid into non-overlapping w x w windows."""
    x = np.asarray(x, dtype=np.float64)
    h, wid = grid
    if x.shape[0] != h * wid:
        raise ShapeError(f"grid {grid} does not cover {x.shape[0]} tokens")
    windows = []
    for r0 in range(0, h, w):
        for c0 in range(0, wid, w):
            idx = np.full(w * w, -1, dtype=np.int64)
            data = np.zeros((w * w, x.shape[1]))
            slot = 0
            for dr in range(w):
                for dc in range(w):
                    r, c = r0 + dr, c0 + dc
                    if r < h and c < wid:
                        idx[slot] = r * wid + c
                        data[slot] = x[r * wid + c]
                    slot += 1
            windows.append(Window(data, (r0, c0), idx))
    return windows


def window_merge(windows: list[Window], grid: tuple[int, int], cols: int) -> np.ndarray:
    """Inverse of :func:`window_partition`; padded slots are dropped."""
    h, w = grid
    out = np.zeros((h * w, cols))
    for win in windows:
        keep = win.token_indices >= 0
        out[win.token_indices[keep]] = win.data[keep]
    return out


# -- multi-head wrapper -------------------------------------------------------


def _head_attend(variant: AttentionVariant, q, k, v):
    if variant.kind == "softmax":
        return attend_explicit(softmax_scores(q, k, variant.temperature), v)
    if variant.kind == "linear":
        return linear_attention_fast(q, k, v, variant.kernel)
    return inline_attention_fast(q, k, v, variant.kernel)


def _head_attend_masked(variant, q, k, v, grid, mask_spec, mask_rng):
    """Explicit-score route with post-hoc masking; evaluation only."""
    from .analysis import build_keep_mask, masked_scores, renormalize_masked

    if variant.kind == "softmax":
        scores = softmax_scores(q, k, variant.temperature)
    elif variant.kind == "linear":
        scores = linear_scores(q, k, variant.kernel)
    else:
        scores = inline_scores(q, k, variant.kernel)
    scores = np.asarray(scores)
    if scores.ndim == 2:
        return attend_explicit(masked_scores(scores, grid, mask_spec, mask_rng), v)
    if mask_spec.kind == "random":
        # fresh random drops per sample, deterministic given the rng
        masked = np.stack(
            [masked_scores(scores[b], grid, mask_spec, mask_rng)
             for b in range(scores.shape[0])]
        )
    elif mask_spec.kind == "none":
        masked = scores
    else:
        keep = build_keep_mask(scores.shape[-1], grid, mask_spec)
        masked = np.stack([renormalize_masked(scores[b], keep)
                           for b in range(scores.shape[0])])
    return np.matmul(masked, v)


def multi_head_forward(x, params: ProjectionParams, variant: AttentionVariant,
                       grid: tuple[int, int] | None = None, *,
                       mask_spec=None, mask_rng=None):
    """Project per head, attend (optionally within windows), concatenate heads.

    x has shape (N, C) or batched (B, N, C). A grid is required whenever the
    variant uses a window or a local residual, or when a mask is applied.
    """
    if ad.shape_of(x)[-1] != params.model_dim:
        raise ShapeError(
            f"input width {ad.shape_of(x)[-1]} != model_dim {params.model_dim}"
        )
    n = ad.shape_of(x)[-2]
    needs_grid = (variant.window is not None or variant.kind == "inline_residual"
                  or mask_spec is not None)
    if needs_grid:
        if grid is None:
            raise ShapeError("this variant requires a (H, W) token grid")
        if grid[0] * grid[1] != n:
            raise ShapeError(f"grid {grid} does not cover {n} tokens")
    if mask_spec is not None and isinstance(x, ad.Var):
        raise StateError("masked evaluation is a value-only path")

    residual_r = None
    if variant.kind == "inline_residual":
        residual_r = variant.predictor.weights(x)

    groups = None
    inverse = None
    if variant.window is not None and grid is not None:
        groups = window_index_groups(grid, variant.window)
        if len(groups) > 1:
            perm = np.concatenate(groups)
            inverse = np.argsort(perm)
        else:
            groups = None

    head_outputs = []
    head_values = []
    for h in range(params.head_count):
        q = x @ params.w_q[h]
        k = x @ params.w_k[h]
        v = x @ params.w_v[h]
        if variant.confusion is not None:
            from .analysis import apply_confusion  # local import avoids a cycle

            q = apply_confusion(variant.confusion, q)
        if mask_spec is not None:
            out = _head_attend_masked(variant, q, k, v, grid, mask_spec, mask_rng)
        elif groups is None:
            out = _head_attend(variant, q, k, v)
        else:
            parts = [
                _head_attend(
                    variant,
                    ad.take_rows(q, idx),
                    ad.take_rows(k, idx),
                    ad.take_rows(v, idx),
                )
                for idx in groups
            ]
            out = ad.take_rows(ad.concat(parts, axis=-2), inverse)
        head_outputs.append(out)
        if residual_r is not None:
            head_values.append(v)
    merged = (head_outputs[0] if len(head_outputs) == 1
              else ad.concat(head_outputs, axis=-1))
    if residual_r is not None:
        # one neighbor mix over the concatenated head values equals the
        # per-head application because r is shared across heads
        values = (head_values[0] if len(head_values) == 1
                  else ad.concat(head_values, axis=-1))
        merged = merged + _apply_neighbor_weights(values, grid, residual_r)
    return merged


# -- cached forward / analytic backward --------------------------------------


class ForwardCache:
    """Single-use record of a taped forward pass."""

    def __init__(self, out_var: ad.Var, leaves: dict):
        self._out = out_var
        self._leaves = leaves
        self._consumed = False

    def take(self):
        if self._consumed:
            raise StateError("forward cache already consumed")
        self._consumed = True
        return self._out, self._leaves


def attention_forward_cached(variant: AttentionVariant, q, k, v,
                             x_for_residual=None,
                             grid: tuple[int, int] | None = None):
    """Run one head's attention on tape; returns (output, cache).

    Leaves are q, k, v, plus the residual predictor parameters (and its
    token input) for the residual variant.
    """
    leaves = {"q": ad.Var(q), "k": ad.Var(k), "v": ad.Var(v)}
    out = _head_attend(variant, leaves["q"], leaves["k"], leaves["v"])
    if variant.kind == "inline_residual":
        if x_for_residual is None or grid is None:
            raise ShapeError("residual variant requires module input and grid")
        pred = variant.predictor
        leaves.update(
            x=ad.Var(x_for_residual),
            res_w1=ad.Var(pred.w1), res_b1=ad.Var(pred.b1),
            res_w2=ad.Var(pred.w2), res_b2=ad.Var(pred.b2),
        )
        taped = ResidualPredictor(leaves["res_w1"], leaves["res_b1"],
                                  leaves["res_w2"], leaves["res_b2"])
        out = out + local_residual(leaves["v"], grid, taped, leaves["x"])
    return out.value, ForwardCache(out, leaves)


def multi_head_forward_cached(x, params: ProjectionParams,
                              variant: AttentionVariant,
                              grid: tuple[int, int] | None = None):
    """Taped :func:`multi_head_forward`; leaves cover x, projections, predictor."""
    leaves = {"x": ad.Var(x)}
    taped_params = ProjectionParams(
        w_q=[ad.Var(w) for w in params.w_q],
        w_k=[ad.Var(w) for w in params.w_k],
        w_v=[ad.Var(w) for w in params.w_v],
        head_count=params.head_count,
        model_dim=params.model_dim,
        head_dim=params.head_dim,
    )
    for h in range(params.head_count):
        leaves[f"w_q{h}"] = taped_params.w_q[h]
        leaves[f"w_k{h}"] = taped_params.w_k[h]
        leaves[f"w_v{h}"] = taped_params.w_v[h]
    taped_variant = variant
    if variant.kind == "inline_residual":
        pred = variant.predictor
        leaves.update(
            res_w1=ad.Var(pred.w1), res_b1=ad.Var(pred.b1),
            res_w2=ad.Var(pred.w2), res_b2=ad.Var(pred.b2),
        )
        taped_variant = AttentionVariant(
            kind=variant.kind,
            kernel=variant.kernel,
            predictor=ResidualPredictor(leaves["res_w1"], leaves["res_b1"],
                                        leaves["res_w2"], leaves["res_b2"]),
            window=variant.window,
            temperature=variant.temperature,
            confusion=variant.confusion,
        )
    out = multi_head_forward(leaves["x"], taped_params, taped_variant, grid)
    return out.value, ForwardCache(out, leaves)


def backward(cache: ForwardCache, grad_out) -> dict[str, np.ndarray]:
    """Analytic gradients for every cached leaf given the upstream gradient."""
    if cache is None:
        raise StateError("no cached forward state")
    out, leaves = cache.take()
    ad.backward(out, np.asarray(grad_out, dtype=np.float64))
    return {
        name: (np.zeros_like(leaf.value) if leaf.grad is None else leaf.grad)
        for name, leaf in leaves.items()
    }


# -- modeled operation counts -------------------------------------------------


def madds_inline_fast(n: int, d: int) -> int:
    """Multiply-adds for one head of the reordered subtractive path."""
    return 2 * n * d * d + n * d


def madds_linear_fast(n: int, d: int) -> int:
    """Multiply-adds for one head of the reordered divisive path."""
    return 2 * n * d * d + n * d


def madds_residual(n: int, d: int) -> int:
    """Multiply-adds added by the local residual term, per head."""
    return n * d + d * d + 9 * n * d


def madds_softmax_explicit(n: int, d: int) -> int:
    """Multiply-adds for one head of explicit softmax attention.

    Convention: 2*N^2*d for the two dense products plus 3*N^2 for the
    shift/exp/divide sweep over the score matrix.
    """
    return 2 * n * n * d + 3 * n * n


def madds_variant(variant: AttentionVariant, n: int, d: int, h: int,
                  grid: tuple[int, int] | None = None) -> int:
    """Modeled multiply-adds for a full multi-head call."""
    if variant.window is not None and grid is not None:
        counts = [len(g) for g in window_index_groups(grid, variant.window)]
    else:
        counts = [n]
    if variant.kind == "softmax":
        per_head = sum(madds_softmax_explicit(c, d) for c in counts)
    elif variant.kind == "linear":
        per_head = sum(madds_linear_fast(c, d) for c in counts)
    else:
        per_head = sum(madds_inline_fast(c, d) for c in counts)
        if variant.kind == "inline_residual":
            per_head += madds_residual(n, d)
    return h * per_head
