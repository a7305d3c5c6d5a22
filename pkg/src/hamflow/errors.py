"""Exception types shared across the package."""


class HamflowError(Exception):
    """Base class for all errors raised by hamflow."""


class ValidationError(HamflowError):
    """Input violates a documented precondition or invariant."""


class NumericalError(HamflowError):
    """An iteration produced non-finite values or failed to converge."""


class HyperbolicityError(HamflowError):
    """A matrix that must be hyperbolic has spectrum too close to the imaginary axis."""


class ConvergenceError(HamflowError):
    """Horizon escalation was exhausted without meeting the acceptance angle."""


class InconsistentKernelError(HamflowError):
    """A reconstructed kernel trajectory violated its decay contract."""


class EndpointSingularError(HamflowError):
    """A path endpoint is degenerate where invertibility is required."""


class PartitionError(HamflowError):
    """Partition refinement exceeded the segment budget."""


class ClusteredCrossingError(HamflowError):
    """Two crossing candidates are too close to separate at the current grid."""


class DegenerateCrossingError(HamflowError):
    """A crossing form is singular, so signature summation refuses to proceed."""


class BasePointError(HamflowError):
    """No invertible base point was found along a loop."""


class CertificateUnavailable(HamflowError):
    """A certificate hypothesis failed; carries the name of the failing one."""

    def __init__(self, hypothesis: str, detail: str = ""):
        self.hypothesis = hypothesis
        self.detail = detail
        msg = f"certificate hypothesis failed: {hypothesis}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class ConfigError(HamflowError):
    """Configuration input is malformed or contains unknown keys."""
