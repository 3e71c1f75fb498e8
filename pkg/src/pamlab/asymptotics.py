"""Peak and moment growth measurements against predicted exponents.

These are desk-scale diagnostics of limit statements: the growth exponent
is fixed from theory and only the constant is fitted, with wide confidence
intervals from replicate spread.  Peak statistics are summarized by medians
because suprema are heavy tailed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    AllSitesNonpositive,
    BoundViolated,
    InvalidSpec,
    TooFewPoints,
    TooFewReplicates,
)
from .kernels import Measure, log_heat_convolve_atoms
from .solver import FieldState, RatioField


@dataclass(frozen=True)
class PeakSeries:
    """Running suprema of the normalized log field over growing balls."""

    radii: tuple
    statistics: tuple
    excluded_sites: tuple
    replicate_id: int = 0

    @property
    def entries(self):
        return tuple(zip(self.radii, self.statistics))


@dataclass(frozen=True)
class GrowthFit:
    lambda_hat: float
    half_width: float
    intercept: float
    r_squared: float
    exponent: float


@dataclass(frozen=True)
class MomentGrowthFit:
    p_hat: float
    log_c_hat: float
    p_theory: float
    half_width: float
    level_target: float | None = None  # (t/2) * variational energy, when known
    level_ratio: float | None = None   # exp(log_c_hat) / level_target


@dataclass(frozen=True)
class HolderEstimate:
    eta_hat: float
    half_width: float
    saturated: bool
    n_pairs: int
    separations: tuple
    mean_abs_increments: tuple


@dataclass(frozen=True)
class BoundAuditReport:
    product_moment: float
    interaction_bound: float
    slack: float
    sigma: float
    passed: bool


def peak_series(field, u0: Measure, t: float, radii, replicate_id: int = 0) -> PeakSeries:
    """Sup over |x| <= R of log u(t, x) - log(heat flow of u0), per radius.

    For a ratio field the normalization is already divided out, so the
    statistic is just the running sup of its log.  Lattice sites with a
    nonpositive field value are excluded and counted.
    """
    grid = field.grid
    if grid.dim != 1:
        raise InvalidSpec("peak series are computed on 1D lattices")
    sites = grid.sites()
    radii = np.asarray(sorted(float(r) for r in radii))
    if radii[-1] > grid.period / 2.0 + 1e-9:
        raise InvalidSpec(f"largest radius {radii[-1]:g} beyond half period"
                          f" {grid.period / 2.0:g}")

    if isinstance(field, RatioField):
        centered = np.abs(sites - field.source)
        log_stat = field.log_abs
    elif isinstance(field, FieldState):
        centered = np.abs(sites)
        if u0.atoms and u0.density is None:
            log_den = log_heat_convolve_atoms(t, u0, sites)
        else:
            from .kernels import heat_convolve_measure

            with np.errstate(divide="ignore"):
                log_den = np.log(heat_convolve_measure(t, u0, sites))
        log_stat = field.log_abs - log_den
    else:
        raise InvalidSpec("field must be a FieldState or RatioField")

    positive = field.sign > 0
    stats, excluded = [], []
    for r in radii:
        inside = centered <= r
        usable = inside & positive
        excluded.append(int(np.sum(inside & ~positive)))
        if not np.any(usable):
            raise AllSitesNonpositive(f"no positive site within radius {r:g}")
        stats.append(float(log_stat[usable].max()))
    return PeakSeries(radii=tuple(float(r) for r in radii), statistics=tuple(stats),
                      excluded_sites=tuple(excluded), replicate_id=replicate_id)


def fit_growth(series: PeakSeries, exponent: float) -> GrowthFit:
    """Least squares of statistic = lambda * (log R)^exponent + c.

    The 95 percent half width comes from the residual variance of the fit;
    replicate-level spread is obtained by fitting each replicate and pooling.
    """
    if len(series.radii) < 4:
        raise TooFewPoints("growth fit needs at least 4 radii")
    x = np.power(np.log(np.asarray(series.radii)), exponent)
    y = np.asarray(series.statistics)
    design = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    fitted = design @ coef
    resid = y - fitted
    dof = len(x) - 2
    ss_res = float(np.sum(resid ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    if dof > 0 and ss_res > 0:
        sigma2 = ss_res / dof
        sx = float(np.sum((x - x.mean()) ** 2))
        half = 1.96 * math.sqrt(sigma2 / sx)
    else:
        half = 0.0
    return GrowthFit(lambda_hat=float(coef[0]), half_width=half,
                     intercept=float(coef[1]), r_squared=float(r2),
                     exponent=float(exponent))


def fit_growth_ensemble(series_list, exponent: float):
    """Median slope across replicates with a spread-based half width."""
    slopes = np.array([fit_growth(s, exponent).lambda_hat for s in series_list])
    half = 1.96 * float(slopes.std(ddof=1)) / math.sqrt(len(slopes)) if len(slopes) > 1 else 0.0
    return float(np.median(slopes)), half


def moment_growth_fit(values, alpha_bar: float, t: float | None = None,
                      energy: float | None = None) -> MomentGrowthFit:
    """Fit log-moment data to c * m^p by log-log regression.

    ``values`` is a list of (m, log_moment) or (m, log_moment, se) tuples;
    provided errors enter as weights.  The theoretical exponent
    (4 - alpha_bar) / (2 - alpha_bar) is returned alongside for comparison,
    and when ``t`` and ``energy`` are given the fitted level is compared to
    (t/2) * energy.  Both comparisons are diagnostics, not assertions.
    """
    rows = [tuple(v) for v in values]
    ms = np.array([r[0] for r in rows], dtype=float)
    logs = np.array([r[1] for r in rows], dtype=float)
    ses = np.array([r[2] if len(r) > 2 else 0.0 for r in rows], dtype=float)
    if len(np.unique(ms)) < 3:
        raise TooFewPoints("moment growth fit needs at least 3 distinct orders")
    if np.any(logs <= 0):
        raise InvalidSpec("log moments must be positive to take a second log")
    x = np.log(ms)
    y = np.log(logs)
    # propagate provided errors through the outer log
    w = np.where(ses > 0, logs / np.maximum(ses, 1e-300), 1.0)
    w = w / w.max()
    design = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(design * w[:, None], y * w, rcond=None)
    p_hat, log_c = float(coef[0]), float(coef[1])
    resid = y - design @ coef
    dof = len(x) - 2
    if dof > 0 and float(np.sum(resid ** 2)) > 0:
        sigma2 = float(np.sum(resid ** 2)) / dof
        sx = float(np.sum((x - x.mean()) ** 2))
        half = 1.96 * math.sqrt(sigma2 / sx)
    else:
        half = 0.0
    p_theory = (4.0 - alpha_bar) / (2.0 - alpha_bar)
    level_target = None
    level_ratio = None
    if t is not None and energy is not None:
        level_target = 0.5 * t * energy
        level_ratio = math.exp(log_c) / level_target if level_target > 0 else None
    return MomentGrowthFit(p_hat=p_hat, log_c_hat=log_c, p_theory=p_theory,
                           half_width=half, level_target=level_target,
                           level_ratio=level_ratio)


def holder_estimate(samples, sites, probe_pairs, min_replicates: int = 16) -> HolderEstimate:
    """Slope of log mean |K(y1) - K(y2)| against log |y1 - y2|.

    ``samples`` is a sequence of lattice value arrays (one per replicate) or
    RatioField objects; ``probe_pairs`` are site-index pairs whose physical
    separations must span at least 1.5 decades.  Slopes above one indicate
    estimator saturation for smooth fields and are flagged, with the
    reported value capped at 1.2.
    """
    arrays = []
    for s in samples:
        arrays.append(s.values if isinstance(s, RatioField) else np.asarray(s, dtype=float))
    if len(arrays) < min_replicates:
        raise TooFewReplicates(f"need at least {min_replicates} replicates, got {len(arrays)}")
    stack = np.stack(arrays)
    sites = np.asarray(sites, dtype=float)

    seps, means = [], []
    for i, j in probe_pairs:
        sep = abs(sites[j] - sites[i])
        if sep <= 0:
            raise InvalidSpec("probe pair with zero separation")
        seps.append(sep)
        means.append(float(np.mean(np.abs(stack[:, j] - stack[:, i]))))
    seps = np.asarray(seps)
    means = np.asarray(means)
    span = math.log10(seps.max() / seps.min())
    if span < 1.5:
        raise InvalidSpec(f"probe separations span {span:.2f} decades; need >= 1.5")
    x = np.log(seps)
    y = np.log(np.maximum(means, 1e-300))
    design = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    slope = float(coef[0])
    resid = y - design @ coef
    dof = len(x) - 2
    if dof > 0 and float(np.sum(resid ** 2)) > 0:
        sigma2 = float(np.sum(resid ** 2)) / dof
        sx = float(np.sum((x - x.mean()) ** 2))
        half = 1.96 * math.sqrt(sigma2 / sx)
    else:
        half = 0.0
    saturated = slope > 1.0
    return HolderEstimate(eta_hat=min(max(slope, 0.0), 1.2), half_width=half,
                          saturated=saturated, n_pairs=len(probe_pairs),
                          separations=tuple(seps.tolist()),
                          mean_abs_increments=tuple(means.tolist()))


def bound_audit(product_moment, interaction_bound) -> BoundAuditReport:
    """Check the normalized product moment against the pair-interaction bound.

    The inequality holds at theorem level, so a violation beyond three
    combined standard errors signals an implementation bug and raises.
    """
    sigma = math.sqrt(product_moment.se ** 2 + interaction_bound.se ** 2)
    slack = interaction_bound.value - product_moment.value
    passed = slack >= -3.0 * sigma
    report = BoundAuditReport(product_moment=product_moment.value,
                              interaction_bound=interaction_bound.value,
                              slack=slack, sigma=sigma, passed=passed)
    if not passed:
        raise BoundViolated(
            f"normalized product moment {product_moment.value:.6g} exceeds the"
            f" interaction bound {interaction_bound.value:.6g} by more than"
            f" 3 sigma ({sigma:.3g})")
    return report
