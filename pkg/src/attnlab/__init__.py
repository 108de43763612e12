"""attnlab: attention-function diagnostics.

A small float64 laboratory for softmax, kernelized-divisive, and
subtractive-normalized attention: exact formulas with explicit and
reordered linear-time paths, collision and locality diagnostics, analytic
gradients with finite-difference gates, a toy training harness, and
complexity benchmarks. The ``attnlab`` CLI exposes each experiment.
"""

from .reports import TOOL_VERSION as __version__  # noqa: F401

from . import (  # noqa: F401
    analysis,
    attention,
    autodiff,
    bench,
    equiv,
    kernels,
    tensor,
    train,
)
