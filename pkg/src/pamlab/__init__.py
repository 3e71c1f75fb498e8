"""Numerical laboratory for the multiplicative stochastic heat equation.

Subpackages by layer: ``kernels`` (covariances, heat kernels, measures),
``noise`` (lattice synthesis of the driving field), ``solver`` (mild-form
time stepping and the series second moment), ``bridges`` (pinned-path
moment estimators), ``variational`` (ground-state energies and their
identities), ``asymptotics`` (growth fits and bound audits), ``harness``
(experiment runner) and ``report`` (figures).
"""

__version__ = "0.1.0"

from .kernels import (  # noqa: F401
    CovarianceSpec,
    Measure,
    bridge_kernel,
    dalang_value,
    gamma_eval,
    heat_convolve_measure,
    heat_kernel,
    spec_from_config_text,
    spec_to_config_text,
)
from .noise import (  # noqa: F401
    NoiseSlice,
    SpaceTimeGrid,
    empirical_covariance,
    mollify_slice,
    synthesize_slice,
)
from .solver import (  # noqa: F401
    ChaosMoment,
    FieldState,
    RatioField,
    chaos_second_moment,
    evolve_mild,
    ratio_field,
)
from .bridges import (  # noqa: F401
    BridgeEnsemble,
    FKEstimate,
    exit_restricted_functional,
    fk_moment_estimate,
    girsanov_check,
    sample_bridges,
    theta_estimate,
)
from .variational import (  # noqa: F401
    OptimizerOptions,
    VarGrid,
    VariationalState,
    hartree_energy,
    kappa_from_hartree,
    lambda0,
    m_energy,
    me_relation_check,
)
from .asymptotics import (  # noqa: F401
    PeakSeries,
    bound_audit,
    fit_growth,
    holder_estimate,
    moment_growth_fit,
    peak_series,
)
from .streams import SeedStreams  # noqa: F401
