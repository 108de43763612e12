"""Feature maps applied to queries and keys before kernelized scoring.

Five kinds: identity, relu, leaky_relu(slope), affine_relu(A, b) computing
ReLU(x A^T + b) per row, and elementwise exponential. Output dimension
always equals input dimension d.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ShapeError
from .tensor import Rng

KERNEL_KINDS = ("identity", "relu", "leaky_relu", "affine_relu", "exponential")


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Tagged choice of feature map with its parameters."""

    kind: str
    slope: float = 0.01
    a: np.ndarray | None = field(default=None, repr=False)
    b: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind '{self.kind}'")
        if self.kind == "leaky_relu" and not 0.0 < self.slope < 1.0:
            raise ValueError(f"leaky_relu slope must lie in (0, 1), got {self.slope}")
        if self.kind == "affine_relu":
            if self.a is None or self.b is None:
                raise ValueError("affine_relu requires matrix a and offset b")
            a = np.asarray(self.a, dtype=np.float64)
            b = np.asarray(self.b, dtype=np.float64)
            if a.ndim != 2 or a.shape[0] != a.shape[1]:
                raise ShapeError(f"affine_relu matrix must be square, got {a.shape}")
            if b.ndim != 1 or b.shape[0] != a.shape[0]:
                raise ShapeError(
                    f"affine_relu offset length {b.shape} must match side {a.shape[0]}"
                )
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "b", b)


def identity() -> KernelSpec:
    return KernelSpec("identity")


def relu() -> KernelSpec:
    return KernelSpec("relu")


def leaky_relu(slope: float = 0.01) -> KernelSpec:
    return KernelSpec("leaky_relu", slope=slope)


def affine_relu(a, b) -> KernelSpec:
    return KernelSpec("affine_relu", a=a, b=b)


def exponential() -> KernelSpec:
    return KernelSpec("exponential")


def make_affine_relu(rng: Rng, d: int) -> KernelSpec:
    """Draw affine_relu parameters once: Gaussian entries, std 1/sqrt(d)."""
    scale = 1.0 / np.sqrt(d)
    a = rng.gaussian(d, d) * scale
    b = (rng.gaussian(1, d) * scale)[0]
    return affine_relu(a, b)


def apply_kernel(spec: KernelSpec, x):
    """Apply the feature map row-wise; accepts arrays or autodiff variables."""
    if spec.kind == "identity":
        return x
    if spec.kind == "relu":
        return ad.relu(x)
    if spec.kind == "leaky_relu":
        return ad.leaky_relu(x, spec.slope)
    if spec.kind == "exponential":
        return ad.exp(x)
    # affine_relu: ReLU(x A^T + b) per row
    d = ad.shape_of(x)[-1]
    if d != spec.a.shape[0]:
        raise ShapeError(
            f"affine_relu expects width {spec.a.shape[0]}, got {d}"
        )
    return ad.relu(x @ spec.a.T + spec.b)


def is_injective_on_ray(spec: KernelSpec) -> bool:
    """True when the map is positively homogeneous (phi(a*q) = a^k * phi(q)).

    Homogeneous maps collapse every positive ray onto one normalized score
    vector, the mechanism behind scale collisions; affine_relu and
    exponential break the homogeneity and return False.
    """
    return spec.kind in ("identity", "relu", "leaky_relu")
