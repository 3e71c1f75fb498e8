"""Pinned Brownian paths and the path-integral estimators built on them.

The moment identities all have the shape  E exp{ sum over pairs of a time
integral of the spatial covariance along path differences }, with the paths
pinned at both ends.  Everything here reduces to sampling such ensembles and
averaging exponentials stably:

* product-moment estimator for atomic initial measures,
* the universal pair-interaction bound (sup over sub-horizons),
* the change of measure identity between a pinned path on a sub-interval
  and a free path weighted by a Gaussian factor,
* exponential functionals restricted to paths that never leave a ball.

Exponents are aggregated in log space (running-max shifted) so large
interaction sums do not overflow; estimators report both E e^X and its log,
with standard errors from batch means.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    AllPathsExited,
    AssignmentExplosion,
    InvalidSpec,
    UnboundedKernel,
)
from .kernels import CovarianceSpec, Measure
from .streams import SeedStreams


def _as_streams(streams) -> SeedStreams:
    if isinstance(streams, SeedStreams):
        return streams
    return SeedStreams(int(streams))


# ---------------------------------------------------------------------------
# path sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BridgeEnsemble:
    """Independent pinned paths on a shared time grid.

    paths has shape (count, n_times, dim); every path starts and ends at the
    origin exactly.
    """

    count: int
    horizon: float
    times: np.ndarray
    paths: np.ndarray
    stream_id: str = ""


def _brownian_paths(count: int, t: float, time_steps: int, dim: int, rng) -> tuple:
    """Free Brownian paths: returns (times, paths) with paths (count, K+1, dim)."""
    dt = t / time_steps
    increments = rng.standard_normal((count, time_steps, dim)) * math.sqrt(dt)
    paths = np.zeros((count, time_steps + 1, dim))
    np.cumsum(increments, axis=1, out=paths[:, 1:, :])
    times = np.linspace(0.0, t, time_steps + 1)
    return times, paths


def sample_bridges(count: int, t: float, time_steps: int, dim: int, rng,
                   stream_id: str = "") -> BridgeEnsemble:
    """Sample pinned paths by subtracting the linear drift to the endpoint."""
    if count < 1 or time_steps < 2:
        raise InvalidSpec("need count >= 1 and time_steps >= 2")
    times, paths = _brownian_paths(count, t, time_steps, dim, rng)
    frac = (times / t)[None, :, None]
    paths = paths - frac * paths[:, -1:, :]
    paths[:, 0, :] = 0.0
    paths[:, -1, :] = 0.0
    return BridgeEnsemble(count, t, times, paths, stream_id)


def _multi_bridges(count: int, m: int, t: float, time_steps: int, dim: int, rng):
    """m independent pinned paths per replica: (times, paths (count, m, K+1, dim))."""
    dt = t / time_steps
    inc = rng.standard_normal((count, m, time_steps, dim)) * math.sqrt(dt)
    paths = np.zeros((count, m, time_steps + 1, dim))
    np.cumsum(inc, axis=2, out=paths[:, :, 1:, :])
    times = np.linspace(0.0, t, time_steps + 1)
    frac = (times / t)[None, None, :, None]
    paths = paths - frac * paths[:, :, -1:, :]
    paths[:, :, 0, :] = 0.0
    paths[:, :, -1, :] = 0.0
    return times, paths


# ---------------------------------------------------------------------------
# estimates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FKEstimate:
    """Monte Carlo estimate of an exponential path functional."""

    value: float
    se: float
    log_value: float
    replicas: int
    exponent_mean: float
    exponent_max: float
    batch_log_means: tuple = ()
    batch_counts: tuple = ()
    stream_id: str = ""
    profile: tuple | None = None  # (s values, estimates, standard errors)
    argmax_s: float | None = None


def _estimate_from_batches(batch_log_means, batch_counts, exponent_mean, exponent_max,
                           stream_id="") -> FKEstimate:
    """Combine per-batch log-means into one estimate with batch-means errors."""
    logs = np.asarray(batch_log_means, dtype=float)
    counts = np.asarray(batch_counts, dtype=float)
    total = counts.sum()
    shift = logs.max()
    log_value = shift + math.log(float(np.sum(counts * np.exp(logs - shift))) / total)
    value = math.exp(log_value)
    if len(logs) > 1:
        means = np.exp(logs)
        se = float(means.std(ddof=1) / math.sqrt(len(logs)))
    else:
        se = 0.0
    return FKEstimate(value=value, se=se, log_value=log_value, replicas=int(total),
                      exponent_mean=float(exponent_mean), exponent_max=float(exponent_max),
                      batch_log_means=tuple(float(v) for v in logs),
                      batch_counts=tuple(int(c) for c in counts), stream_id=stream_id)


def merge_estimates(parts) -> FKEstimate:
    """Merge estimates produced from disjoint batch sets (order independent)."""
    parts = sorted(parts, key=lambda p: p.stream_id)
    logs, counts = [], []
    for p in parts:
        logs.extend(p.batch_log_means)
        counts.extend(p.batch_counts if p.batch_counts else
                      [p.replicas / max(len(p.batch_log_means), 1)] * len(p.batch_log_means))
    n_total = sum(p.replicas for p in parts)
    exp_mean = sum(p.exponent_mean * p.replicas for p in parts) / n_total
    exp_max = max(p.exponent_max for p in parts)
    return _estimate_from_batches(logs, counts, exp_mean, exp_max,
                                  stream_id=parts[0].stream_id if parts else "")


def _log_mean_exp(x: np.ndarray) -> float:
    shift = float(x.max())
    return shift + math.log(float(np.mean(np.exp(x - shift))))


# ---------------------------------------------------------------------------
# product-moment estimator
# ---------------------------------------------------------------------------

def _atom_assignments(u0: Measure, m: int, targets: np.ndarray, t: float,
                      max_assignments: int, sample_count: int, rng):
    """Assignment displacements and weights for the product moment.

    Returns (disp, log_w, log_total, sampled) where disp[a, j] is the atom
    displacement y_j = z - x_j for assignment a, and log_w are *normalized*
    log weights (they sum to one).  The unnormalized total is factorized as
    the product over j of the heat flow at each target.
    """
    atoms = u0.atoms
    n_atoms = len(atoms)
    dim = targets.shape[1]
    locs = np.array([np.atleast_1d(np.asarray(loc, dtype=float)) for loc, _ in atoms])
    masses = np.array([mass for _, mass in atoms])

    # per-slot categorical weights: mass * p_t(z - x_j)
    slot_w = np.empty((m, n_atoms))
    for j in range(m):
        rho = np.linalg.norm(locs - targets[j][None, :], axis=1)
        slot_w[j] = masses * (2.0 * math.pi * t) ** (-dim / 2.0) \
            * np.exp(-rho ** 2 / (2.0 * t))
    slot_total = slot_w.sum(axis=1)
    log_total = float(np.sum(np.log(slot_total)))
    slot_p = slot_w / slot_total[:, None]

    n_assign = n_atoms ** m
    if n_assign <= max_assignments:
        idx = np.stack(np.meshgrid(*([np.arange(n_atoms)] * m), indexing="ij"),
                       axis=-1).reshape(-1, m)
        log_w = np.sum(np.log(slot_p[np.arange(m)[None, :], idx]), axis=1)
        disp = locs[idx] - targets[None, :, :]
        return disp, log_w, log_total, False
    if sample_count <= 0:
        raise AssignmentExplosion(
            f"{n_assign} atom assignments exceed the cap {max_assignments}"
            " and assignment sampling is disabled"
        )
    # stratified sampling from the product distribution: equal-weight draws
    idx = np.empty((sample_count, m), dtype=int)
    for j in range(m):
        # systematic (stratified) inverse-CDF sampling per slot
        u = (np.arange(sample_count) + rng.random(sample_count)) / sample_count
        idx[:, j] = np.searchsorted(np.cumsum(slot_p[j]), rng.permutation(u))
    log_w = np.full(sample_count, -math.log(sample_count))
    disp = locs[idx] - targets[None, :, :]
    return disp, log_w, log_total, True


def _pair_interaction(spec, paths, times, t, dx_pair, dy_pair, kernel_scale):
    """Trapezoid of gamma along one pair difference: returns (count,) array."""
    from .kernels import gamma_radial

    frac = (times / t)[None, :, None]
    args = paths + dx_pair[None, None, :] + frac * dy_pair[None, None, :]
    vals = gamma_radial(spec, np.linalg.norm(args, axis=-1), scale=kernel_scale)
    weights = np.full(times.shape, t / (len(times) - 1))
    weights[0] *= 0.5
    weights[-1] *= 0.5
    return vals @ weights


def fk_moment_estimate(spec: CovarianceSpec, t: float, targets, u0: Measure,
                       replicas: int = 2000, time_steps: int = 64,
                       streams=0, seed_path=("fk",), batch_size: int = 0,
                       normalized: bool = False, kernel_scale: float = 1.0,
                       max_assignments: int = 10_000, assignment_samples: int = 4096,
                       batch_indices=None) -> FKEstimate:
    """Estimate E[prod_j u(t, x_j)] for an atomic initial measure.

    The estimator averages, over pinned-path ensembles, the exponential of
    the pairwise covariance integral, summed over atom assignments with
    heat-kernel weights.  With ``normalized`` the product is divided by
    prod_j (heat flow of u0 at x_j), which is the quantity bounded by the
    pair-interaction supremum.
    """
    if u0.density is not None:
        raise InvalidSpec("product-moment estimator needs an atomic measure")
    if spec.hypothesis == "H2" and spec.epsilon == 0.0:
        raise UnboundedKernel("unbounded covariance: use epsilon > 0")
    streams = _as_streams(streams)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if targets.shape[1] != spec.dim:
        targets = targets.reshape(-1, spec.dim)
    m = targets.shape[0]

    disp, log_w, log_total, _sampled = _atom_assignments(
        u0, m, targets, t, max_assignments, assignment_samples,
        streams.stream(*seed_path, "assign"))
    n_assign = disp.shape[0]
    offset = 0.0 if normalized else log_total

    if m == 1:
        value = math.exp(offset)
        return FKEstimate(value=value, se=0.0, log_value=offset, replicas=replicas,
                          exponent_mean=0.0, exponent_max=0.0,
                          batch_log_means=(offset,),
                          stream_id=streams.stream_id(*seed_path))

    if batch_size <= 0:
        batch_size = max(64, min(1024, replicas // 8 if replicas >= 512 else replicas))
    n_batches = max(1, math.ceil(replicas / batch_size))
    all_batches = range(n_batches) if batch_indices is None else batch_indices

    pairs = [(j, k) for j in range(m) for k in range(j + 1, m)]
    batch_logs, batch_counts = [], []
    exp_sum, exp_max, exp_n = 0.0, -np.inf, 0
    for b in all_batches:
        nb = min(batch_size, replicas - b * batch_size)
        if nb <= 0:
            continue
        rng = streams.stream(*seed_path, "batch", b)
        times, paths = _multi_bridges(nb, m, t, time_steps, spec.dim, rng)
        # group identical pair displacements across assignments
        cache: dict = {}
        exponents = np.zeros((nb, n_assign))
        for a in range(n_assign):
            total = np.zeros(nb)
            for (j, k) in pairs:
                dxp = targets[j] - targets[k]
                dyp = disp[a, j] - disp[a, k]
                key = (j, k, tuple(np.round(dyp, 12)))
                got = cache.get(key)
                if got is None:
                    diff = paths[:, j] - paths[:, k]
                    got = _pair_interaction(spec, diff, times, t, dxp, dyp, kernel_scale)
                    cache[key] = got
                total += got
            exponents[:, a] = total
        exp_sum += float(exponents.sum())
        exp_max = max(exp_max, float(exponents.max()))
        exp_n += exponents.size
        log_v = _signed_free_logsumexp(exponents + log_w[None, :])
        # fold the assignment-weight normalization into every batch so that
        # partial runs merge exactly
        batch_logs.append(_log_mean_exp(log_v) + offset)
        batch_counts.append(nb)

    return _estimate_from_batches(batch_logs, batch_counts, exp_sum / max(exp_n, 1), exp_max,
                                  stream_id=streams.stream_id(*seed_path))


def _signed_free_logsumexp(log_terms: np.ndarray) -> np.ndarray:
    """Row-wise logsumexp for positive terms given as logs, shape (n, k) -> (n,)."""
    shift = log_terms.max(axis=1, keepdims=True)
    return (shift[:, 0] + np.log(np.exp(log_terms - shift).sum(axis=1)))


# ---------------------------------------------------------------------------
# pair-interaction supremum over sub-horizons
# ---------------------------------------------------------------------------

def theta_estimate(spec: CovarianceSpec, t: float, m: int, replicas: int = 2000,
                   time_steps: int = 64, s_grid_size: int = 16, streams=0,
                   seed_path=("theta",), batch_size: int = 0,
                   kernel_scale: float = 1.0, batch_indices=None) -> FKEstimate:
    """Supremum over s in (0, t] of E exp{ pair covariance integral on [0, s] }.

    Evaluated on a geometric s-grid; the profile and the argmax are attached
    to the returned estimate.
    """
    if m < 2:
        raise InvalidSpec("pair interaction needs m >= 2")
    if spec.hypothesis == "H2" and spec.epsilon == 0.0:
        raise UnboundedKernel("unbounded covariance: use epsilon > 0")
    streams = _as_streams(streams)
    ratios = np.power(1.0 / 32.0, np.linspace(1.0, 0.0, s_grid_size))
    s_values = t * ratios
    pairs = [(j, k) for j in range(m) for k in range(j + 1, m)]
    zero = np.zeros(spec.dim)

    estimates = []
    for i, s in enumerate(s_values):
        if batch_size <= 0:
            bs = max(64, min(1024, replicas // 8 if replicas >= 512 else replicas))
        else:
            bs = batch_size
        n_batches = max(1, math.ceil(replicas / bs))
        use = range(n_batches) if batch_indices is None else batch_indices
        batch_logs, batch_counts = [], []
        exp_sum, exp_max, exp_n = 0.0, -np.inf, 0
        for b in use:
            nb = min(bs, replicas - b * bs)
            if nb <= 0:
                continue
            rng = streams.stream(*seed_path, "s", i, "batch", b)
            times, paths = _multi_bridges(nb, m, s, time_steps, spec.dim, rng)
            total = np.zeros(nb)
            for (j, k) in pairs:
                diff = paths[:, j] - paths[:, k]
                total += _pair_interaction(spec, diff, times, s, zero, zero, kernel_scale)
            exp_sum += float(total.sum())
            exp_max = max(exp_max, float(total.max()))
            exp_n += total.size
            batch_logs.append(_log_mean_exp(total))
            batch_counts.append(nb)
        estimates.append(_estimate_from_batches(
            batch_logs, batch_counts, exp_sum / max(exp_n, 1), exp_max,
            stream_id=streams.stream_id(*seed_path, "s", i)))

    values = np.array([e.log_value for e in estimates])
    best = int(np.argmax(values))
    profile = (tuple(float(s) for s in s_values),
               tuple(float(e.value) for e in estimates),
               tuple(float(e.se) for e in estimates))
    return replace(estimates[best], profile=profile, argmax_s=float(s_values[best]),
                   stream_id=streams.stream_id(*seed_path))


# ---------------------------------------------------------------------------
# change-of-measure identity on a sub-interval
# ---------------------------------------------------------------------------

PATH_FUNCTIONALS = {}


def _register_functional(name):
    def deco(fn):
        PATH_FUNCTIONALS[name] = fn
        return fn
    return deco


@_register_functional("unit")
def _f_unit(paths, times):
    return np.ones(paths.shape[0])


@_register_functional("sup_indicator")
def _f_sup_indicator(paths, times):
    radius = np.linalg.norm(paths, axis=2).max(axis=1)
    return (radius < 1.0).astype(float)


@_register_functional("quadratic_decay")
def _f_quadratic_decay(paths, times):
    sq = np.square(np.linalg.norm(paths, axis=2))
    return np.exp(-np.trapezoid(sq, times, axis=1))


@dataclass(frozen=True)
class GirsanovCheck:
    lhs: float
    rhs: float
    lhs_se: float
    rhs_se: float

    @property
    def combined_se(self) -> float:
        return math.sqrt(self.lhs_se ** 2 + self.rhs_se ** 2)


def girsanov_unit_rhs(lam: float, dim: int) -> float:
    """Closed form of the weighted free-path side for the unit functional.

    (1-lam)^(-dim/2) * E exp(-|B(lam t)|^2 / (2 (1-lam) t)) evaluated
    exactly; equals one for every lam in (0,1) and dim.
    """
    if not 0.0 < lam < 1.0:
        raise InvalidSpec("lam must lie in (0, 1)")
    return (1.0 - lam) ** (-dim / 2.0) * (1.0 + lam / (1.0 - lam)) ** (-dim / 2.0)


def girsanov_check(lam: float, t: float, dim: int, functional_id: str,
                   replicas: int = 20_000, time_steps: int = 128, streams=0,
                   seed_path=("girsanov",), batches: int = 20) -> GirsanovCheck:
    """Compare both sides of the pinned-vs-free change of measure identity.

    lhs: E F(pinned path on [0, lam t]).
    rhs: (1-lam)^(-dim/2) E[ exp(-|B(lam t)|^2 / (2 (1-lam) t)) F(free path) ].
    """
    if not 0.0 < lam < 1.0:
        raise InvalidSpec("lam must lie in (0, 1)")
    F = PATH_FUNCTIONALS.get(functional_id)
    if F is None:
        raise InvalidSpec(f"unknown functional {functional_id!r};"
                          f" catalog: {sorted(PATH_FUNCTIONALS)}")
    streams = _as_streams(streams)
    sub_t = lam * t
    per_batch = max(1, replicas // batches)

    lhs_means, rhs_means = [], []
    for b in range(batches):
        rng_l = streams.stream(*seed_path, functional_id, "pinned", b)
        times, paths = _brownian_paths(per_batch, sub_t, time_steps, dim, rng_l)
        tail = rng_l.standard_normal((per_batch, dim)) * math.sqrt((1.0 - lam) * t)
        endpoint = paths[:, -1, :] + tail
        pinned = paths - (times / t)[None, :, None] * endpoint[:, None, :]
        lhs_means.append(float(F(pinned, times).mean()))

        rng_r = streams.stream(*seed_path, functional_id, "free", b)
        times_r, free = _brownian_paths(per_batch, sub_t, time_steps, dim, rng_r)
        w = np.exp(-np.square(np.linalg.norm(free[:, -1, :], axis=1))
                   / (2.0 * (1.0 - lam) * t))
        rhs_means.append(float((w * F(free, times_r)).mean()))

    lhs = float(np.mean(lhs_means))
    rhs = float(np.mean(rhs_means)) * (1.0 - lam) ** (-dim / 2.0)
    lhs_se = float(np.std(lhs_means, ddof=1) / math.sqrt(batches))
    rhs_se = float(np.std(rhs_means, ddof=1) / math.sqrt(batches)) * (1.0 - lam) ** (-dim / 2.0)
    return GirsanovCheck(lhs, rhs, lhs_se, rhs_se)


# ---------------------------------------------------------------------------
# exponential functionals restricted to surviving paths
# ---------------------------------------------------------------------------

EXIT_FUNCTIONS = {
    "zero": lambda s_frac, x: np.zeros(x.shape[:-1]),
    "gaussian_well": lambda s_frac, x: np.exp(-np.square(np.linalg.norm(x, axis=-1))),
}


def constant_exit_function(level: float):
    return lambda s_frac, x: np.full(x.shape[:-1], level)


@dataclass(frozen=True)
class ExitFunctionalResult:
    value: float
    surviving_fraction: float
    se: float
    replicas: int


def exit_restricted_functional(h, radius: float, t: float, replicas: int = 20_000,
                               time_steps: int = 256, dim: int = 1, streams=0,
                               seed_path=("exit",), batches: int = 20) -> ExitFunctionalResult:
    """(1/t) log E[ exp{ int h(s/t, pinned path) ds } ; free path stays in the ball ].

    Exit is detected on the discrete grid: the first grid time at which the
    free path leaves the ball of the given radius kills the sample.
    """
    if isinstance(h, str):
        fn = EXIT_FUNCTIONS.get(h)
        if fn is None:
            raise InvalidSpec(f"unknown exit functional {h!r}; catalog: {sorted(EXIT_FUNCTIONS)}")
    else:
        fn = h
    streams = _as_streams(streams)
    per_batch = max(1, replicas // batches)
    batch_means, total_survive, total = [], 0, 0
    for b in range(batches):
        rng = streams.stream(*seed_path, "batch", b)
        times, paths = _brownian_paths(per_batch, t, time_steps, dim, rng)
        survive = (np.linalg.norm(paths, axis=2) < radius).all(axis=1)
        pinned = paths - (times / t)[None, :, None] * paths[:, -1:, :]
        vals = fn(times[None, :] / t, pinned)
        integral = np.trapezoid(vals, times, axis=1)
        shift = float(integral.max()) if integral.size else 0.0
        contrib = np.where(survive, np.exp(integral - shift), 0.0)
        batch_means.append((shift, float(contrib.mean())))
        total_survive += int(survive.sum())
        total += per_batch
    if total_survive == 0:
        raise AllPathsExited("no sampled path stayed inside the ball;"
                             " increase replicas or the radius")
    shifts = np.array([s for s, _ in batch_means])
    raw = np.array([m for _, m in batch_means])
    ref = shifts.max()
    means = raw * np.exp(shifts - ref)  # batch means of exp(integral)*survive, shifted
    mean = float(means.mean())
    se_mean = float(means.std(ddof=1) / math.sqrt(len(means)))
    log_e = ref + math.log(mean)
    value = log_e / t
    se = se_mean / (mean * t)
    return ExitFunctionalResult(value=value, surviving_fraction=total_survive / total,
                                se=se, replicas=total)
