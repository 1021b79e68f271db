"""Exception types shared across the package."""


class ItcgError(Exception):
    """Base class for all package errors."""


class ZeroRange(ItcgError):
    """Pursuer coincides with the target; polar quantities are undefined."""


class ConstraintActive(ItcgError):
    """Lead angle is on or outside the field-of-view cone."""


class NoConvergence(ItcgError):
    """Iterative solve failed to reach tolerance."""


class SingularJacobian(ItcgError):
    """Stationarity Jacobian numerically singular (analytically impossible)."""


class IntegrationFailure(ItcgError):
    """Adaptive step size collapsed.

    Carries the last good time in ``tau``.
    """

    def __init__(self, msg: str, tau: float):
        super().__init__(f"{msg} (last good tau={tau:.6g})")
        self.tau = tau


class EmptyTrajectory(ItcgError):
    """Trajectory holds no usable samples."""


class EmptySweep(ItcgError):
    """No trajectory in the sweep produced samples."""


class IoError(ItcgError):
    """Artifact could not be read or written."""


class Malformed(ItcgError):
    """Artifact contents violate the documented schema."""


class VersionMismatch(ItcgError):
    """Serialized artifact uses an unsupported format version."""


class InfeasibleQuery(ItcgError):
    """Guidance query violates reachability (t_go * speed < r or t_go <= 0)."""


class ConfigError(ItcgError):
    """Run configuration missing or inconsistent."""


class MissingArtifact(ItcgError):
    """Upstream artifact required by this stage does not exist."""


class Diverged(ItcgError):
    """Training diverged (non-finite loss)."""
