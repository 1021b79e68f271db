"""Impact-time guidance with a field-of-view constraint.

Minimum-effort optimal trajectories are generated backward from the impact
point, tabulated over a seed grid, distilled into a small feedforward network
mapping (range, lead angle, time-to-go) to the turn command, and deployed as
a closed-loop guidance law with time-scaling.
"""

from .errors import (
    ConfigError,
    ConstraintActive,
    Diverged,
    EmptySweep,
    EmptyTrajectory,
    InfeasibleQuery,
    IntegrationFailure,
    IoError,
    ItcgError,
    Malformed,
    MissingArtifact,
    NoConvergence,
    SingularJacobian,
    VersionMismatch,
    ZeroRange,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConstraintActive",
    "Diverged",
    "EmptySweep",
    "EmptyTrajectory",
    "InfeasibleQuery",
    "IntegrationFailure",
    "IoError",
    "ItcgError",
    "Malformed",
    "MissingArtifact",
    "NoConvergence",
    "SingularJacobian",
    "VersionMismatch",
    "ZeroRange",
    "__version__",
]
