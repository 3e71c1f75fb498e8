"""Exception types raised across the package."""


class PamLabError(Exception):
    """Base class for every error raised by this package."""


class InvalidSpec(PamLabError):
    """A covariance spec or measure violates its constraints."""


class SingularEvaluation(PamLabError):
    """Pointwise evaluation of a distribution-valued kernel was requested."""


class DivergentIntegral(PamLabError):
    """A spectral integral grows without bound."""


class NonPositiveTime(PamLabError):
    """Heat-kernel time must be strictly positive."""


class EmptyMeasure(PamLabError):
    """Measure has no mass."""


class TimeOutOfRange(PamLabError):
    """Intermediate time outside the open interval (0, t)."""


class NegativeSpectralWeight(PamLabError):
    """Spectral synthesis weights must be nonnegative."""


class GridTooCoarse(PamLabError):
    """Too much spectral mass lies beyond the lattice Nyquist frequency."""


class LagOutOfRange(PamLabError):
    """Covariance lag exceeds half the lattice period."""


class InsufficientSamples(PamLabError):
    """Not enough slices or replicas for the requested statistic."""


class UnstableRun(PamLabError):
    """A non-finite field value appeared during time stepping."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class SurrogateBiasExceeded(PamLabError):
    """Dirac-surrogate width bias above the configured tolerance."""


class TruncationUnreliable(PamLabError):
    """Series truncation bound too large to certify the partial sum."""


class UnboundedKernel(PamLabError):
    """Operation requires a bounded covariance (mollify first)."""


class UnsupportedKernel(PamLabError):
    """Operation not implemented for this covariance family."""


class AssignmentExplosion(PamLabError):
    """Atom-assignment enumeration exceeds the configured cap."""


class AllPathsExited(PamLabError):
    """Every sampled path left the domain before the horizon."""


class NoConvergence(PamLabError):
    """Optimizer hit its iteration cap above tolerance."""


class DomainTooSmall(PamLabError):
    """Optimized profile has not decayed at the domain boundary."""


class BadAlpha(PamLabError):
    """Scaling exponent outside its admissible range."""


class NotScaling(PamLabError):
    """Identity requires a scaling-homogeneous covariance."""


class TooFewPoints(PamLabError):
    """Regression needs more data points."""


class TooFewReplicates(PamLabError):
    """Estimator needs more independent replicates."""


class AllSitesNonpositive(PamLabError):
    """No positive field site available for the log statistic."""


class BoundViolated(PamLabError):
    """A theorem-level inequality failed beyond statistical tolerance."""


class ConfigInvalid(PamLabError):
    """Experiment configuration failed validation."""


class OutputUnwritable(PamLabError):
    """Output directory cannot be created or written."""


class ModuleError(PamLabError):
    """Wrapped failure from a numerical module during an experiment run."""
