"""Toy-scale supervised harness.

The task is built so that both local and long-range modeling carry label
information: each image hides a 3x3 texture motif (plus vs diagonal cross)
and a global mirror-symmetry bit, and the class is the pair of bits. A
rule-based decoder recovers labels exactly, so Bayes accuracy is 1.0.

Training uses plain SGD with momentum so that comparisons isolate the
attention variant, not the recipe. Divergence (non-finite loss or a
degenerate normalizer) is recorded data, not an exception.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .analysis import ConfusionMap, MaskSpec, confusion_f1, confusion_f2
from .attention import (
    AttentionVariant,
    ProjectionParams,
    ResidualPredictor,
    multi_head_forward,
)
from .errors import NumericError, DegenerateDenominatorError
from .kernels import KernelSpec, make_affine_relu
from .kernels import (
    exponential as k_exponential,
    identity as k_identity,
    leaky_relu as k_leaky_relu,
    relu as k_relu,
)
from .tensor import Rng

MOTIF_AMPLITUDE = 2.0
BACKGROUND_HALF_RANGE = 0.5
ASYMMETRY_MARGIN = 0.25
MOTIF_CELLS = 5
_PLUS_MASK = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


# -- gradient checking --------------------------------------------------------


def gradcheck(f, params: list, epsilon: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` maps a list of tape variables to a scalar variable. The relative
    error denominator is max(|analytic|, |numeric|, 1e-8) per coordinate.
    """
    base = [np.asarray(p, dtype=np.float64) for p in params]
    leaves = [ad.Var(p) for p in base]
    out = f(leaves)
    if not np.isfinite(out.value):
        raise NumericError("gradcheck objective is not finite")
    ad.backward(out)
    analytic = [
        np.zeros_like(l.value) if l.grad is None else l.grad.copy() for l in leaves
    ]

    def evaluate(arrays) -> float:
        val = float(f([ad.Var(a) for a in arrays]).value)
        if not math.isfinite(val):
            raise NumericError("gradcheck objective is not finite near the base point")
        return val

    worst = 0.0
    for pi in range(len(base)):
        it = np.nditer(base[pi], flags=["multi_index"])
        for _ in it:
            ix = it.multi_index
            bumped = [b.copy() for b in base]
            bumped[pi][ix] += epsilon
            f_plus = evaluate(bumped)
            bumped[pi][ix] -= 2.0 * epsilon
            f_minus = evaluate(bumped)
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            a = float(analytic[pi][ix])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
    return worst


# -- toy dataset --------------------------------------------------------------


@dataclass
class ToyDataset:
    """Generated grids with labels decodable by a fixed rule."""

    samples: np.ndarray   # (n, H, W)
    labels: np.ndarray    # (n,) in range(4)
    grid: tuple[int, int]
    seed: int

    def __len__(self) -> int:
        return self.samples.shape[0]


def _scatter_positions(rng: Rng, h: int, cols: np.ndarray,
                       count: int) -> list[tuple[int, int]]:
    """Greedy pick of cells pairwise separated by Chebyshev distance >= 2."""
    cells = [(r, c) for r in range(h) for c in cols]
    while True:
        order = rng.permutation(len(cells))
        picked: list[tuple[int, int]] = []
        for j in order:
            r, c = cells[j]
            if all(max(abs(r - r2), abs(c - c2)) >= 2 for r2, c2 in picked):
                picked.append((r, c))
                if len(picked) == count:
                    return picked


def make_toy_dataset(rng: Rng, n_samples: int, grid: tuple[int, int] = (8, 8),
                     seed: int = 0) -> ToyDataset:
    """Sample images whose class is (local clustering, mirror symmetry) jointly.

    Every image contains MOTIF_CELLS cells of exactly MOTIF_AMPLITUDE on a
    background drawn inside (-0.5, 0.5). Bit one: the high cells either form
    one plus-shaped cluster or are scattered pairwise non-adjacent, so the
    global value histogram is identical and only pairwise-local structure
    separates the classes. Bit two: the image either equals its left-right
    mirror exactly or differs from it by at least ASYMMETRY_MARGIN somewhere.
    """
    h, w = grid
    if h < 8 or w < 8:
        raise ValueError(f"grid sides must be >= 8, got {grid}")
    samples = np.empty((n_samples, h, w))
    labels = np.empty(n_samples, dtype=np.int64)
    for i in range(n_samples):
        clustered = int(rng.integers(0, 2))
        symmetric = int(rng.integers(0, 2))
        while True:
            img = rng.uniform(h, w, -BACKGROUND_HALF_RANGE, BACKGROUND_HALF_RANGE)
            if clustered:
                r0 = int(rng.integers(0, h - 2))
                # keep the cluster inside the left half for symmetric images
                c_hi = (w // 2 - 2) if symmetric else (w - 2)
                c0 = int(rng.integers(0, c_hi))
                img[r0:r0 + 3, c0:c0 + 3][_PLUS_MASK] = MOTIF_AMPLITUDE
            else:
                # scattered cells stay off the mirror seam (their mirrored
                # copies land >= 2 columns away) so no cluster can appear
                cols = np.arange(0, w // 2 - 1) if symmetric else np.arange(w)
                for r, c in _scatter_positions(rng, h, cols, MOTIF_CELLS):
                    img[r, c] = MOTIF_AMPLITUDE
            if symmetric:
                img = np.concatenate([img[:, : w // 2],
                                      img[:, : w - w // 2][:, ::-1]], axis=1)
                break
            if np.abs(img - img[:, ::-1]).max() >= ASYMMETRY_MARGIN:
                break
        samples[i] = img
        labels[i] = 2 * clustered + symmetric
    return ToyDataset(samples, labels, grid, seed)


def decode_labels(samples: np.ndarray) -> np.ndarray:
    """Non-learned decoder implementing the generative rule exactly.

    Clustered iff some high cell has at least two high 8-neighbors; symmetric
    iff the image matches its mirror within ASYMMETRY_MARGIN.
    """
    n, h, w = samples.shape
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        img = samples[i]
        high = img == MOTIF_AMPLITUDE
        padded = np.zeros((h + 2, w + 2), dtype=np.int64)
        padded[1:-1, 1:-1] = high
        neighbor_count = sum(
            padded[1 + dr: h + 1 + dr, 1 + dc: w + 1 + dc]
            for dr in (-1, 0, 1) for dc in (-1, 0, 1)
            if (dr, dc) != (0, 0)
        )
        clustered = int(bool((high & (neighbor_count >= 2)).any()))
        symmetric = int(np.abs(img - img[:, ::-1]).max() < ASYMMETRY_MARGIN)
        out[i] = 2 * clustered + symmetric
    return out


# -- toy model ----------------------------------------------------------------


_KERNELS = {
    "identity": k_identity,
    "relu": k_relu,
    "leaky_relu": k_leaky_relu,
    "exponential": k_exponential,
}


@dataclass(frozen=True)
class ModelVariant:
    """Lightweight description of which attention flavor to train."""

    kind: str                       # softmax | linear | inline | inline_residual
    kernel: str = "identity"
    window: Optional[int] = None
    confusion: Optional[str] = None  # None | f1 | f2

    @property
    def label(self) -> str:
        parts = [self.kind]
        if self.kind != "softmax":
            parts.append(self.kernel)
        if self.window is not None:
            parts.append(f"w{self.window}")
        if self.confusion:
            parts.append(self.confusion)
        return "-".join(parts)


def sinusoid_features(grid: tuple[int, int], n_freq: int = 3) -> np.ndarray:
    """Fixed 2-D sinusoidal position features, (N, 4 * n_freq).

    Products of sinusoids turn relative offsets into linear structure, so
    local attention kernels are reachable by a single learned projection.
    """
    h, w = grid
    r, c = np.divmod(np.arange(h * w), w)
    feats = []
    for k in range(1, n_freq + 1):
        feats.extend([
            np.sin(2 * np.pi * k * r / h), np.cos(2 * np.pi * k * r / h),
            np.sin(2 * np.pi * k * c / w), np.cos(2 * np.pi * k * c / w),
        ])
    return np.stack(feats, axis=1)


def layer_norm(x, gain, bias, eps: float = 1e-5):
    return ad.layer_norm_lastaxis(x, gain, bias, eps)


def cross_entropy(logits, onehot):
    shifted = logits - ad.rowmax_detached(logits, axis=-1)
    log_z = ad.log(ad.asum(ad.exp(shifted), axis=-1, keepdims=True))
    return -ad.amean(ad.asum((shifted - log_z) * onehot, axis=-1))


class ToyModel:
    """Patch embed + attention blocks + feedforward + mean-pool classifier."""

    def __init__(self, variant: ModelVariant, grid: tuple[int, int],
                 model_dim: int = 32, head_count: int = 2, depth: int = 2,
                 n_classes: int = 4, ffn_mult: int = 2,
                 kernel_rng: Optional[Rng] = None):
        self.spec = variant
        self.grid = grid
        self.n_tokens = grid[0] * grid[1]
        self.model_dim = model_dim
        self.head_count = head_count
        self.head_dim = model_dim // head_count
        self.depth = depth
        self.n_classes = n_classes
        self.ffn_dim = ffn_mult * model_dim
        if variant.window is not None and (grid[0] % variant.window
                                           or grid[1] % variant.window):
            raise ValueError("toy-model windows must divide the grid sides")
        self.pos_feats = sinusoid_features(grid)
        self.kernel = self._build_kernel(variant, kernel_rng)
        self.confusion = self._build_confusion(variant, kernel_rng)

    def _build_kernel(self, variant: ModelVariant,
                      kernel_rng: Optional[Rng]) -> Optional[KernelSpec]:
        if variant.kind == "softmax":
            return None
        if variant.kernel == "affine_relu":
            if kernel_rng is None:
                raise ValueError("affine_relu kernel needs a seeded rng")
            return make_affine_relu(kernel_rng, self.head_dim)
        return _KERNELS[variant.kernel]()

    def _build_confusion(self, variant: ModelVariant,
                         kernel_rng: Optional[Rng]) -> Optional[ConfusionMap]:
        if variant.confusion is None:
            return None
        if variant.confusion == "f1":
            return confusion_f1()
        if kernel_rng is None:
            raise ValueError("f2 confusion needs a seeded rng")
        scale = 1.0 / np.sqrt(self.head_dim)
        return confusion_f2(kernel_rng.gaussian(self.head_dim, self.head_dim) * scale,
                            kernel_rng.gaussian(1, self.head_dim)[0] * scale)

    def init_params(self, rng: Rng) -> dict[str, np.ndarray]:
        c, d, k = self.model_dim, self.head_dim, self.n_classes
        n_pos = self.pos_feats.shape[1]
        p: dict[str, np.ndarray] = {
            "embed_w": rng.gaussian(1, c) * 0.5,
            "embed_b": np.zeros(c),
            "pos_w": rng.gaussian(n_pos, c) * (1.0 / np.sqrt(n_pos)),
            "lnf_g": np.ones(c),
            "lnf_b": np.zeros(c),
            "head_w": rng.gaussian(c, k) * (1.0 / np.sqrt(c)),
            "head_b": np.zeros(k),
        }
        s_proj = 1.0 / np.sqrt(c)
        for i in range(self.depth):
            pre = f"b{i}."
            for h in range(self.head_count):
                p[pre + f"wq{h}"] = rng.gaussian(c, d) * s_proj
                p[pre + f"wk{h}"] = rng.gaussian(c, d) * s_proj
                p[pre + f"wv{h}"] = rng.gaussian(c, d) * s_proj
            # damped block outputs keep the residual stream tame at init
            p[pre + "wo"] = rng.gaussian(c, c) * (0.2 * s_proj)
            p[pre + "bo"] = np.zeros(c)
            p[pre + "ln1_g"] = np.ones(c)
            p[pre + "ln1_b"] = np.zeros(c)
            p[pre + "ln2_g"] = np.ones(c)
            p[pre + "ln2_b"] = np.zeros(c)
            p[pre + "f1"] = rng.gaussian(c, self.ffn_dim) * s_proj
            p[pre + "f1b"] = np.zeros(self.ffn_dim)
            p[pre + "f2"] = rng.gaussian(self.ffn_dim, c) * (0.2 / np.sqrt(self.ffn_dim))
            p[pre + "f2b"] = np.zeros(c)
            if self.spec.kind == "inline_residual":
                p[pre + "res_w1"] = rng.gaussian(c, c) * s_proj
                p[pre + "res_b1"] = np.zeros(c)
                p[pre + "res_w2"] = np.zeros((c, 9))  # residual starts at zero
                p[pre + "res_b2"] = np.zeros(9)
        return p

    def _variant_for(self, params, prefix: str) -> AttentionVariant:
        predictor = None
        if self.spec.kind == "inline_residual":
            predictor = ResidualPredictor(
                params[prefix + "res_w1"], params[prefix + "res_b1"],
                params[prefix + "res_w2"], params[prefix + "res_b2"],
            )
        return AttentionVariant(
            kind=self.spec.kind,
            kernel=self.kernel,
            predictor=predictor,
            window=self.spec.window,
            confusion=self.confusion,
        )

    def forward(self, params, images, mask_spec: Optional[MaskSpec] = None,
                mask_rng: Optional[Rng] = None):
        """Logits for a batch of images; params may be arrays or tape variables."""
        b = images.shape[0]
        tokens = images.reshape(b, self.n_tokens, 1)
        h = (tokens @ params["embed_w"] + params["embed_b"]
             + self.pos_feats @ params["pos_w"])
        for i in range(self.depth):
            pre = f"b{i}."
            proj = ProjectionParams(
                w_q=[params[pre + f"wq{j}"] for j in range(self.head_count)],
                w_k=[params[pre + f"wk{j}"] for j in range(self.head_count)],
                w_v=[params[pre + f"wv{j}"] for j in range(self.head_count)],
                head_count=self.head_count,
                model_dim=self.model_dim,
                head_dim=self.head_dim,
            )
            a_in = layer_norm(h, params[pre + "ln1_g"], params[pre + "ln1_b"])
            attn = multi_head_forward(a_in, proj, self._variant_for(params, pre),
                                      self.grid, mask_spec=mask_spec,
                                      mask_rng=mask_rng)
            h = h + attn @ params[pre + "wo"] + params[pre + "bo"]
            f_in = layer_norm(h, params[pre + "ln2_g"], params[pre + "ln2_b"])
            ff = ad.relu(f_in @ params[pre + "f1"] + params[pre + "f1b"])
            h = h + ff @ params[pre + "f2"] + params[pre + "f2b"]
        pooled = ad.amean(layer_norm(h, params["lnf_g"], params["lnf_b"]), axis=-2)
        return pooled @ params["head_w"] + params["head_b"]

    def loss(self, params, images, labels):
        logits = self.forward(params, images)
        onehot = np.eye(self.n_classes)[labels]
        return cross_entropy(logits, onehot), logits

    def accuracy(self, params, dataset: ToyDataset,
                 mask_spec: Optional[MaskSpec] = None,
                 mask_rng: Optional[Rng] = None,
                 batch_size: int = 256) -> float:
        hits = 0
        for lo in range(0, len(dataset), batch_size):
            chunk = dataset.samples[lo:lo + batch_size]
            logits = self.forward(params, chunk, mask_spec=mask_spec,
                                  mask_rng=mask_rng)
            hits += int((np.argmax(np.asarray(logits), axis=-1)
                         == dataset.labels[lo:lo + batch_size]).sum())

        return hits / len(dataset)


# -- training loop ------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 8
    batch_size: int = 128
    learning_rate: float = 0.03
    momentum: float = 0.9
    seeds: tuple = (1, 2, 3, 4, 5)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


@dataclass
class RunRecord:
    seed: int
    final_accuracy: float
    diverged: bool
    diverged_step: Optional[int]
    curve: list = field(repr=False)  # (step, loss, batch accuracy)
    model: object = field(default=None, repr=False)
    params: dict = field(default=None, repr=False)  # parameters used for eval


@dataclass
class TrainResult:
    variant: ModelVariant
    runs: list

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([r.final_accuracy for r in self.runs])

    @property
    def mean_accuracy(self) -> float:
        return float(self.accuracies.mean())

    @property
    def std_accuracy(self) -> float:
        accs = self.accuracies
        return float(accs.std(ddof=1)) if len(accs) > 1 else 0.0

    @property
    def any_diverged(self) -> bool:
        return any(r.diverged for r in self.runs)


_GRADCHECKED: set[tuple] = set()


def _gradcheck_variant(model: ToyModel) -> None:
    """Cheap per-variant gradient gate run once per process."""
    key = (model.spec.kind, model.spec.kernel, model.spec.confusion)
    if key in _GRADCHECKED:
        return
    rng = Rng(2024)
    q, k, v = rng.gaussian(4, 3), rng.gaussian(4, 3), rng.gaussian(4, 3)
    if model.spec.kind in ("linear",):
        q, k = np.abs(q) + 0.1, np.abs(k) + 0.1
    weights = rng.gaussian(4, 3)
    kernel = model.kernel if model.kernel is None or model.kernel.kind != "affine_relu" \
        else make_affine_relu(Rng(99), 3)

    def objective(leaves):
        vv = AttentionVariant(
            kind="inline" if model.spec.kind == "inline_residual" else model.spec.kind,
            kernel=kernel,
        )
        from .attention import _head_attend

        qq = leaves[0]
        if model.confusion is not None:
            from .analysis import apply_confusion

            cmap = model.confusion if model.confusion.kind == "f1" else confusion_f2(
                Rng(98).gaussian(3, 3), np.zeros(3))
            qq = apply_confusion(cmap, qq)
        out = _head_attend(vv, qq, leaves[1], leaves[2])
        return ad.asum(out * weights)

    err = gradcheck(objective, [q, k, v])
    if err > 1e-5:
        raise NumericError(
            f"gradient check failed for {model.spec.label}: rel err {err:.2e}"
        )
    _GRADCHECKED.add(key)


GRAD_CLIP_NORM = 5.0


def _clip_grads(grads: dict) -> dict:
    """Global-norm clip, identical for every variant; tames step catastrophes."""
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total <= GRAD_CLIP_NORM or total == 0.0:
        return grads
    scale = GRAD_CLIP_NORM / total
    return {k: g * scale for k, g in grads.items()}


def _sgd_step(params, grads, velocity, lr: float, momentum: float) -> None:
    for name, g in grads.items():
        velocity[name] = momentum * velocity[name] - lr * g
        params[name] = params[name] + velocity[name]


WARMUP_FRACTION = 0.1


def _lr_at(step: int, total_steps: int, peak: float) -> float:
    """Fixed shape: linear warmup to the peak, cosine decay to 10% of it.

    The schedule is identical for every variant so comparisons stay about
    the attention mechanism, not the recipe.
    """
    warmup = max(1, int(total_steps * WARMUP_FRACTION))
    if step < warmup:
        return peak * (step + 1) / warmup
    frac = (step - warmup) / max(1, total_steps - warmup)
    return peak * (0.1 + 0.9 * 0.5 * (1.0 + math.cos(math.pi * frac)))


def train_single(variant: ModelVariant, train_ds: ToyDataset, test_ds: ToyDataset,
                 config: TrainConfig, seed: int, *,
                 model_dim: int = 32, head_count: int = 2,
                 depth: int = 2) -> RunRecord:
    """One seeded run; divergence is recorded with its step, never raised."""
    rng = Rng(seed)
    init_rng, batch_rng, kernel_rng = rng.split(3)
    model = ToyModel(variant, train_ds.grid, model_dim=model_dim,
                     head_count=head_count, depth=depth,
                     kernel_rng=kernel_rng)
    _gradcheck_variant(model)
    params = model.init_params(init_rng)
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    last_good = {k: v.copy() for k, v in params.items()}

    n = len(train_ds)
    steps_per_epoch = math.ceil(n / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    curve = []
    diverged = False
    diverged_step = None
    step = 0
    for _ in range(config.epochs):
        order = batch_rng.permutation(n)
        for lo in range(0, n, config.batch_size):
            batch = order[lo:lo + config.batch_size]
            images = train_ds.samples[batch]
            labels = train_ds.labels[batch]
            leaves = {k: ad.Var(v) for k, v in params.items()}
            try:
                with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                    loss, logits = model.loss(leaves, images, labels)
                    loss_val = float(loss.value)
                    if not math.isfinite(loss_val):
                        raise NumericError("non-finite loss")
                    ad.backward(loss)
            except (NumericError, DegenerateDenominatorError, FloatingPointError):
                diverged = True
                diverged_step = step
                break
            grads = {k: (np.zeros_like(v.value) if v.grad is None else v.grad)
                     for k, v in leaves.items()}
            if any(not np.all(np.isfinite(g)) for g in grads.values()):
                diverged = True
                diverged_step = step
                break
            batch_acc = float(
                (np.argmax(np.asarray(logits.value), axis=-1) == labels).mean()
            )
            curve.append((step, loss_val, batch_acc))
            last_good = {k: v.copy() for k, v in params.items()}
            lr = _lr_at(step, total_steps, config.learning_rate)
            _sgd_step(params, _clip_grads(grads), velocity, lr, config.momentum)
            step += 1
        if diverged:
            break

    eval_params = last_good if diverged else params
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        try:
            # failed runs report the last finite parameters' accuracy
            final_acc = model.accuracy(eval_params, test_ds)
        except (NumericError, DegenerateDenominatorError):
            final_acc = 1.0 / model.n_classes
    return RunRecord(seed, final_acc, diverged, diverged_step, curve,
                     model=model, params=eval_params)


def train_eval(variant: ModelVariant, train_ds: ToyDataset, test_ds: ToyDataset,
               config: TrainConfig, **model_kwargs) -> TrainResult:
    """Train one variant over every configured seed; deterministic per seed."""
    runs = [train_single(variant, train_ds, test_ds, config, seed, **model_kwargs)
            for seed in config.seeds]
    return TrainResult(variant, runs)


def ordering_gap(accs_high, accs_low) -> tuple[float, float]:
    """Mean difference and pooled std between two seed-matched accuracy sets."""
    a = np.asarray(accs_high, dtype=np.float64)
    b = np.asarray(accs_low, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        return float(a.mean() - b.mean()), 0.0
    pooled = math.sqrt((a.var(ddof=1) + b.var(ddof=1)) / 2.0)
    return float(a.mean() - b.mean()), pooled
