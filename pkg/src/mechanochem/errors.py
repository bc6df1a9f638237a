"""Exception hierarchy shared across the package."""


class MechanochemError(Exception):
    """Base class for all package-specific failures."""


class GeometryError(MechanochemError):
    """Invalid or degenerate geometry (negative areas, unpaired interface edges...)."""


class ConfigurationError(MechanochemError):
    """Scenario or assembly configuration is inconsistent."""


class ModelError(MechanochemError):
    """Model data is inadmissible, e.g. a cross-diffusion tensor losing positive definiteness."""


class StateError(MechanochemError):
    """A field state is outside the kinetics' admissible set (e.g. non-positive inhibitor)."""


class FactorizationError(MechanochemError):
    """Sparse factorization failed (singular pivot or structurally singular system)."""


class StepSizeUnderflow(MechanochemError):
    """Adaptive stepper shrank the time step to its floor; the run cannot continue."""

    def __init__(self, t, dt, cause):
        super().__init__(f"time step underflow at t={t:.6g} (dt={dt:.3e}, cause={cause})")
        self.t = t
        self.dt = dt
        self.cause = cause
