"""Exception hierarchy shared by all toolkit modules."""


class ToolkitError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(ToolkitError):
    """Scenario configuration is invalid.

    Carries the full list of violations so a user can fix everything in
    one pass instead of replaying the parser error by error.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DegenerateChannelError(ToolkitError):
    """A channel row (or the whole matrix) has no usable energy."""


class DegenerateInputError(ToolkitError):
    """A vector argument that must be nonzero has zero norm."""


class CoLinearChannelError(ToolkitError):
    """Users are (near) co-linear, so a channel-inversion step fails."""


class IllConditionedError(ToolkitError):
    """A linear system is too ill-conditioned to solve reliably."""

    def __init__(self, condition, message=None):
        self.condition = float(condition)
        super().__init__(message or f"condition estimate {self.condition:.3e} exceeds cap")


class UnsupportedShapeError(ToolkitError):
    """Matrix shape outside the supported regime (e.g. more users than antennas)."""


class AmbiguousDetectionError(ToolkitError):
    """A zero received sample cannot be mapped to any constellation sector."""


class ContractViolationError(ToolkitError):
    """An input violates a numerical contract (e.g. a non-Hermitian matrix)."""


class InfeasibleError(ToolkitError):
    """An optimization problem has an empty feasible set."""


class NoSolutionError(ToolkitError):
    """A bracketing search cannot start because the lower end is infeasible."""


class SolverFailureError(ToolkitError):
    """An iterative solver hit its iteration cap before reaching tolerance."""

    def __init__(self, message, diagnostics=None):
        self.diagnostics = dict(diagnostics or {})
        super().__init__(message)


class RotationInfeasibleError(ToolkitError):
    """A Givens-plane rotation solve received degenerate inputs."""
