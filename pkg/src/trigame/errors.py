"""Exceptions shared across the solver pipeline.

Exit-code mapping used by the CLI: ConfigError -> 2, DivergenceError and
InvertibilityError -> 3, MatchingError -> 4, VerificationFailure -> 5.
"""


class TrigameError(Exception):
    """Base class for all package errors."""


class ConfigError(TrigameError):
    """Malformed configuration or problem definition."""


class StructureError(TrigameError):
    """Dimension mismatch between a coefficient matrix and the declared sizes."""

    def __init__(self, name, expected, got):
        self.name = name
        self.expected = tuple(expected)
        self.got = tuple(got)
        super().__init__(f"{name}: expected shape {self.expected}, got {self.got}")


class DivergenceError(TrigameError):
    """Non-finite value produced while stepping a flow.

    Usually means the attenuation level is not sufficiently large for the
    problem data; the node index locates the failure.
    """

    def __init__(self, node, what="flow"):
        self.node = node
        super().__init__(
            f"{what} diverged at node {node} (non-finite entries); "
            "the attenuation level gamma may not be sufficiently large"
        )


class InvertibilityError(TrigameError):
    """A monitored inversion exceeded the condition-number cap."""

    def __init__(self, node, factor, cond, cap):
        self.node = node
        self.cond = cond
        super().__init__(
            f"{factor} at node {node} has condition number {cond:.3e} "
            f"above the cap {cap:.1e}"
        )


class MatchingError(TrigameError):
    """A matching solve failed to reach the residual tolerance."""

    def __init__(self, node, block, residual, tol):
        self.node = node
        self.block = block
        self.residual = residual
        super().__init__(
            f"matching at node {node}, block {block}: residual {residual:.3e} "
            f"did not reach tolerance {tol:.1e}"
        )


class VerificationFailure(TrigameError):
    """Consolidated verification verdict is fail."""
