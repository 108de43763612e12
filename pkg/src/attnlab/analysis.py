"""Diagnostics for attention functions.

Covers collision (confusion) counting between separated queries, constructive
collinear witnesses certifying scale collisions, query-confusion maps, the
local-mass statistic over 3x3 grid neighborhoods, and score masking with
renormalization.

Token layouts: a pure grid has N = H*W row-major tokens. A layout with one
extra class token is handled via ``cls_index``; the class token keeps no grid
position, is excluded from local-mass averaging and from masking, and the
uniform baseline stays 9/N with N counting every token.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from .attention import neighbor_indices
from .errors import DegenerateRowError, ShapeError, WitnessNotFoundError
from .kernels import KernelSpec, apply_kernel
from .tensor import Rng, rank_estimate

NORM_GUARD = 1e-12


# -- confusion maps -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ConfusionMap:
    """Non-injective query preprocessor: relu (f1) or affine-relu (f2), unit-normalized."""

    kind: str
    a: np.ndarray | None = field(default=None, repr=False)
    b: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("f1", "f2"):
            raise ValueError(f"unknown confusion kind '{self.kind}'")
        if self.kind == "f2" and (self.a is None or self.b is None):
            raise ValueError("f2 requires matrix a and offset b")


def confusion_f1() -> ConfusionMap:
    return ConfusionMap("f1")


def confusion_f2(a, b) -> ConfusionMap:
    return ConfusionMap("f2", a=np.asarray(a, dtype=np.float64),
                        b=np.asarray(b, dtype=np.float64))


def apply_confusion(cmap: ConfusionMap, q):
    """Row-wise relu (optionally affine first) scaled to unit norm.

    Zero relu outputs fall back to a 1e-12 denominator guard and stay zero.
    Accepts arrays or tape variables.
    """
    if cmap.kind == "f2":
        if ad.shape_of(q)[-1] != cmap.a.shape[1]:
            raise ShapeError(
                f"confusion matrix {cmap.a.shape} cannot map width "
                f"{ad.shape_of(q)[-1]}"
            )
        z = q @ cmap.a.T + cmap.b
    else:
        z = q
    r = ad.relu(z)
    # guard inside the sqrt: sqrt'(0) is infinite and would poison the tape
    norm_sq = ad.maximum(ad.asum(r * r, axis=-1, keepdims=True), NORM_GUARD**2)
    return r / ad.sqrt(norm_sq)


# -- collision counting -------------------------------------------------------


@dataclass
class CollisionReport:
    """Confusion counts for one batch of queries against one key set."""

    threshold: float
    separation: float
    per_sample_counts: list          # (query index, collision count) pairs
    histogram_bins: list             # (lo, hi) inclusive count ranges
    histogram_counts: list
    total_collisions: int
    pairs_tested: int
    pairs_separated: int
    key_rank: int
    key_rank_augmented: int
    rank_preconditions_met: bool


def power2_histogram(counts: np.ndarray) -> tuple[list, list]:
    """Bins {0}, {1..2}, {3..4}, {5..8}, ... doubling until the max count."""
    bins = [(0, 0), (1, 2)]
    while bins[-1][1] < max(2, int(counts.max(initial=0))):
        hi = bins[-1][1] * 2
        bins.append((bins[-1][1] + 1, hi))
    tallies = [int(((counts >= lo) & (counts <= hi)).sum()) for lo, hi in bins]
    return bins, tallies


def _pairwise_sq_dists(x: np.ndarray) -> np.ndarray:
    g = x @ x.T
    sq = np.diag(g)
    d2 = sq[:, None] + sq[None, :] - 2.0 * g
    return np.maximum(d2, 0.0)


def count_collisions(score_fn: Callable, queries, keys,
                     threshold: float = 1e-3,
                     separation: float = 0.1) -> CollisionReport:
    """Count separated query pairs receiving nearly identical score vectors.

    A pair (i, j) collides when ||q_i - q_j|| >= separation and the L2 norm
    of the score-vector difference is below ``threshold``. ``score_fn`` maps
    (queries, keys) to the (M, N) score matrix; its failures propagate.
    The rank preconditions on the keys are recorded in the report.
    """
    queries = np.asarray(queries, dtype=np.float64)
    keys = np.asarray(keys, dtype=np.float64)
    m, d = queries.shape
    key_rank = rank_estimate(keys)
    augmented = np.concatenate([keys, np.ones((keys.shape[0], 1))], axis=1)
    key_rank_aug = rank_estimate(augmented)

    scores = np.asarray(score_fn(queries, keys), dtype=np.float64)
    qd2 = _pairwise_sq_dists(queries)
    sd2 = _pairwise_sq_dists(scores)

    upper = np.triu(np.ones((m, m), dtype=bool), k=1)
    separated = upper & (qd2 >= separation * separation)
    colliding = separated & (sd2 < threshold * threshold)

    symmetric = colliding | colliding.T
    per_query = symmetric.sum(axis=1).astype(np.int64)
    bins, tallies = power2_histogram(per_query)
    return CollisionReport(
        threshold=threshold,
        separation=separation,
        per_sample_counts=[(int(i), int(c)) for i, c in enumerate(per_query)],
        histogram_bins=bins,
        histogram_counts=tallies,
        total_collisions=int(colliding.sum()),
        pairs_tested=int(upper.sum()),
        pairs_separated=int(separated.sum()),
        key_rank=key_rank,
        key_rank_augmented=key_rank_aug,
        rank_preconditions_met=(key_rank == d and key_rank_aug == d + 1),
    )


# -- collinear witnesses ------------------------------------------------------


@dataclass
class CollinearWitness:
    """Pair (p, q) with phi(q) = alpha * phi(p) up to ``residual``."""

    p: np.ndarray
    q: np.ndarray
    alpha: float
    residual: float
    evaluations: int


def _fit_alpha(fp: np.ndarray, fq: np.ndarray) -> tuple[float, float]:
    alpha = float(fp @ fq) / float(fp @ fp)
    return alpha, float(np.linalg.norm(fq - alpha * fp))


def find_collinear_witness(kernel: KernelSpec, rng: Rng, d: int,
                           tol: float = 1e-10,
                           budget: int = 10**6,
                           separation: float = 0.1) -> CollinearWitness:
    """Construct two distinct queries whose feature images are collinear.

    Positively homogeneous kernels admit the direct construction q = 2p.
    For the others the search samples a directional pool, shortlists the
    most nearly collinear image pair, and polishes it with a damped
    Gauss-Newton refinement of the unit-image mismatch. Exhausting the
    evaluation budget raises :class:`WitnessNotFoundError`: the result is
    inconclusive, never a refutation.
    """
    evals = 0

    def phi(points: np.ndarray) -> np.ndarray:
        nonlocal evals
        pts = np.atleast_2d(points)
        evals += pts.shape[0]
        return np.asarray(apply_kernel(kernel, pts))

    if kernel.kind in ("identity", "relu", "leaky_relu"):
        while evals < budget:
            p = rng.gaussian(1, d)[0]
            p = p / max(np.linalg.norm(p), NORM_GUARD) * max(2.0 * separation, 1.0)
            fp = phi(p)[0]
            if np.linalg.norm(fp) <= NORM_GUARD:
                continue
            q = 2.0 * p
            alpha, residual = _fit_alpha(fp, phi(q)[0])
            if residual <= tol:
                return CollinearWitness(p, q, alpha, residual, evals)
        raise WitnessNotFoundError(kernel.kind, evals)

    while evals < budget:
        pool_size = min(4096, max(64, (budget - evals) // 8))
        radii = np.array([0.5, 1.0, 2.0])[rng.integers(0, 3, size=pool_size)]
        directions = rng.gaussian(pool_size, d)
        directions /= np.maximum(
            np.linalg.norm(directions, axis=1, keepdims=True), NORM_GUARD
        )
        points = directions * radii[:, None]
        images = phi(points)
        norms = np.linalg.norm(images, axis=1)
        ok = norms > NORM_GUARD
        points, images, norms = points[ok], images[ok], norms[ok]
        if points.shape[0] < 2:
            continue
        unit = images / norms[:, None]

        cos = unit @ unit.T
        np.fill_diagonal(cos, 0.0)
        qd2 = _pairwise_sq_dists(points)
        cos[qd2 < (2.0 * separation) ** 2] = 0.0
        i, j = np.unravel_index(int(np.argmax(np.abs(cos))), cos.shape)
        if abs(cos[i, j]) == 0.0:
            continue
        p, q0 = points[i], points[j]
        sign = 1.0 if cos[i, j] > 0 else -1.0

        q = _refine_to_collinear(phi, p, q0, sign, tol)
        fp, fq = phi(p)[0], phi(q)[0]
        alpha, residual = _fit_alpha(fp, fq)
        if residual <= tol and np.linalg.norm(p - q) >= separation and alpha != 0.0:
            return CollinearWitness(p, q, alpha, residual, evals)
    raise WitnessNotFoundError(kernel.kind, evals)


def _refine_to_collinear(phi, p: np.ndarray, q0: np.ndarray, sign: float,
                         tol: float, max_iter: int = 80) -> np.ndarray:
    """Damped Gauss-Newton on the unit-image mismatch f(q) - sign * f(p)."""
    d = p.shape[0]
    fp = phi(p)[0]
    target = sign * fp / np.linalg.norm(fp)

    def mismatch(q):
        f = phi(q)[0]
        n = np.linalg.norm(f)
        if n <= NORM_GUARD:
            return None
        return f / n - target

    q = q0.copy()
    r = mismatch(q)
    if r is None:
        return q0
    lam = 1e-8
    h = 1e-7
    for _ in range(max_iter):
        if np.linalg.norm(r) < 0.01 * tol:
            break
        jac = np.empty((d, d))
        for c in range(d):
            step = np.zeros(d)
            step[c] = h
            rp, rm = mismatch(q + step), mismatch(q - step)
            if rp is None or rm is None:
                return q
            jac[:, c] = (rp - rm) / (2.0 * h)
        lhs = jac.T @ jac + lam * np.eye(d)
        try:
            delta = np.linalg.solve(lhs, -jac.T @ r)
        except np.linalg.LinAlgError:
            break
        q_new = q + delta
        r_new = mismatch(q_new)
        if r_new is None:
            break
        if np.linalg.norm(r_new) < np.linalg.norm(r):
            q, r = q_new, r_new
            lam = max(lam * 0.3, 1e-12)
        else:
            lam *= 10.0
            if lam > 1e6:
                break
    return q


# -- token layouts ------------------------------------------------------------


def grid_token_ids(n_total: int, grid: tuple[int, int],
                   cls_index: Optional[int] = None) -> np.ndarray:
    """Matrix row indices of the grid tokens, in grid row-major order."""
    h, w = grid
    expected = h * w + (1 if cls_index is not None else 0)
    if n_total != expected:
        raise ShapeError(f"layout of {n_total} tokens does not fit grid {grid}")
    ids = np.arange(n_total)
    if cls_index is not None:
        ids = np.delete(ids, cls_index)
    return ids


def _interior_positions(grid: tuple[int, int]) -> np.ndarray:
    h, w = grid
    pos = np.arange(h * w)
    r, c = np.divmod(pos, w)
    return pos[(r >= 1) & (r <= h - 2) & (c >= 1) & (c <= w - 2)]


# -- local mass ---------------------------------------------------------------


def local_mass_per_query(scores, grid: tuple[int, int],
                         cls_index: Optional[int] = None) -> np.ndarray:
    """Per grid query: sum of its weights on its 3x3 neighborhood (self included)."""
    scores = np.asarray(scores, dtype=np.float64)
    ids = grid_token_ids(scores.shape[0], grid, cls_index)
    nbr = neighbor_indices(grid)
    sums = np.zeros(len(ids))
    for slot in range(9):
        valid = nbr[:, slot] >= 0
        sums[valid] += scores[ids[valid], ids[nbr[valid, slot]]]
    return sums


def local_mass(scores, grid: tuple[int, int],
               cls_index: Optional[int] = None) -> float:
    """Mean neighborhood weight over interior grid queries.

    Interior queries have a full 3x3 in-grid neighborhood, so the uniform
    baseline is exactly 9/N. Any class token is excluded from the average.
    """
    sums = local_mass_per_query(scores, grid, cls_index)
    return float(sums[_interior_positions(grid)].mean())


def uniform_local_mass_baseline(n_total: int) -> float:
    """Expected neighborhood mass under uniformly spread attention: 9/N."""
    return 9.0 / n_total


# -- masking ------------------------------------------------------------------


@dataclass(frozen=True)
class MaskSpec:
    """What to zero out of each query's score row before renormalizing."""

    kind: str                 # none | local | random
    k: int | None = None      # local window side, odd, in {3, 5, 7}
    n: int | None = None      # tokens to drop at random outside the 3x3 patch

    def __post_init__(self):
        if self.kind not in ("none", "local", "random"):
            raise ValueError(f"unknown mask kind '{self.kind}'")
        if self.kind == "local" and self.k not in (3, 5, 7):
            raise ValueError(f"local mask side must be one of 3/5/7, got {self.k}")
        if self.kind == "random" and (self.n is None or self.n < 0):
            raise ValueError("random mask needs n >= 0")


def mask_none() -> MaskSpec:
    return MaskSpec("none")


def mask_local(k: int) -> MaskSpec:
    return MaskSpec("local", k=k)


def mask_random(n: int) -> MaskSpec:
    return MaskSpec("random", n=n)


def build_keep_mask(n_total: int, grid: tuple[int, int], spec: MaskSpec,
                    rng: Optional[Rng] = None,
                    cls_index: Optional[int] = None) -> np.ndarray:
    """Boolean (N, N) matrix: True where a query keeps a key."""
    keep = np.ones((n_total, n_total), dtype=bool)
    if spec.kind == "none":
        return keep
    h, w = grid
    ids = grid_token_ids(n_total, grid, cls_index)
    nbr3 = neighbor_indices(grid)
    if spec.kind == "local":
        half = spec.k // 2
        pos = np.arange(h * w)
        rows, cols = np.divmod(pos, w)
        for dr in range(-half, half + 1):
            for dc in range(-half, half + 1):
                rr, cc = rows + dr, cols + dc
                ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
                keep[ids[pos[ok]], ids[rr[ok] * w + cc[ok]]] = False
        return keep
    # random: per query, drop n tokens outside its 3x3 neighborhood
    if rng is None:
        raise ValueError("random masking requires an rng")
    for qpos in range(h * w):
        patch = set(nbr3[qpos][nbr3[qpos] >= 0].tolist())
        candidates = np.array([t for t in range(h * w) if t not in patch])
        if spec.n > len(candidates):
            raise ValueError(
                f"cannot drop {spec.n} of {len(candidates)} non-local tokens"
            )
        if spec.n:
            chosen = candidates[rng.choice(len(candidates), spec.n)]
            keep[ids[qpos], ids[chosen]] = False
    return keep


def renormalize_masked(scores: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Zero dropped entries and rescale every row to sum to 1."""
    scores = np.asarray(scores, dtype=np.float64)
    masked = np.where(keep, scores, 0.0)
    sums = masked.sum(axis=1, keepdims=True)
    bad = np.abs(sums[:, 0]) < 1e-12
    if bad.any():
        raise DegenerateRowError(int(np.argmax(bad)))
    return masked / sums


def masked_scores(scores, grid: tuple[int, int], spec: MaskSpec,
                  rng: Optional[Rng] = None,
                  cls_index: Optional[int] = None) -> np.ndarray:
    """Apply a mask spec to a score matrix and renormalize rows to sum 1."""
    scores = np.asarray(scores, dtype=np.float64)
    if spec.kind == "none":
        return scores.copy()
    keep = build_keep_mask(scores.shape[0], grid, spec, rng, cls_index)
    return renormalize_masked(scores, keep)
