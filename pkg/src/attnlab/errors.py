"""Exception types shared across the library."""


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class NumericError(ArithmeticError):
    """A numerical routine failed (non-convergence, non-finite result)."""


class DegenerateDenominatorError(NumericError):
    """A divisive normalizer fell below the safe magnitude for some row.

    Carries ``row``, the first offending query index, so callers can report
    which input triggered the blow-up instead of silently rescuing it.
    """

    def __init__(self, row: int, magnitude: float):
        self.row = int(row)
        self.magnitude = float(magnitude)
        super().__init__(
            f"normalizer magnitude {magnitude:.3e} below 1e-12 at row {self.row}"
        )


class DegenerateRowError(NumericError):
    """Masking removed essentially all probability mass from a score row."""

    def __init__(self, row: int):
        self.row = int(row)
        super().__init__(f"unmasked mass below 1e-12 in row {self.row}")


class WitnessNotFoundError(Exception):
    """Collinear-witness search exhausted its evaluation budget.

    Inconclusive, never a refutation: the search is randomized and the
    underlying existence argument is non-constructive.
    """

    def __init__(self, kernel_kind: str, evaluations: int):
        self.kernel_kind = kernel_kind
        self.evaluations = int(evaluations)
        super().__init__(
            f"no collinear witness for kernel '{kernel_kind}' "
            f"within {evaluations} evaluations"
        )


class StateError(RuntimeError):
    """A cached forward state was missing or already consumed."""


class ConfigError(ValueError):
    """Invalid experiment configuration or command-line usage."""
