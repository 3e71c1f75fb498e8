"""Spatial covariance kernels, spectral weights, heat kernels and measures.

The covariance catalog:

* ``riesz``            gamma(x) = |x|^(-eta), scaling-homogeneous, hypothesis H2.
* ``space_time_white`` gamma = unit point mass at 0 (dim 1 only), hypothesis H2.
* ``gaussian_bump``    gamma(x) = exp(-|x|^2), bounded, hypothesis H1.
* ``custom_spectral``  a named nonnegative radial spectral density from a
                       small registry (H1 entries by default).

Every kernel is described by a radial spectral density mu(|xi|) with the
convention gamma(x) = (2 pi)^(-dim) * integral of exp(i xi.x) mu(xi) dxi.
Mollification with parameter eps multiplies the spectral density by
exp(-2 eps |xi|^2); for the Riesz family this gives the exact scaling
gamma_eps(x) = eps^(-alpha/2) gamma_1(x / sqrt(eps)).

All functions here are pure.  The only process-wide state is a cache of
calibration constants and radial kernel tables, filled once per spec under
a lock.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate, interpolate, special

from .errors import (
    DivergentIntegral,
    EmptyMeasure,
    InvalidSpec,
    NonPositiveTime,
    SingularEvaluation,
    TimeOutOfRange,
)

RIESZ = "riesz"
GAUSSIAN_BUMP = "gaussian_bump"
SPACE_TIME_WHITE = "space_time_white"
CUSTOM_SPECTRAL = "custom_spectral"
H1 = "H1"
H2 = "H2"

_KINDS = (RIESZ, GAUSSIAN_BUMP, SPACE_TIME_WHITE, CUSTOM_SPECTRAL)

_lock = threading.RLock()  # reentrant: table construction consults the constant cache
_RIESZ_CONSTANTS: dict = {}
_RADIAL_TABLES: dict = {}


# ---------------------------------------------------------------------------
# custom spectral registry
# ---------------------------------------------------------------------------

_SPECTRAL_REGISTRY: dict = {}


def register_spectral_weight(name, radial_weight, hypothesis=H1, alpha=0.0):
    """Register a named radial spectral density r -> mu(r) (vectorized)."""
    _SPECTRAL_REGISTRY[name] = {
        "weight": radial_weight,
        "hypothesis": hypothesis,
        "alpha": float(alpha),
    }


def spectral_weight_names():
    return tuple(sorted(_SPECTRAL_REGISTRY))


# bounded example: mu(r) = r^2 exp(-r^2); its covariance changes sign.
register_spectral_weight("xi2_gaussian", lambda r: np.square(r) * np.exp(-np.square(r)))


# ---------------------------------------------------------------------------
# covariance spec
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CovarianceSpec:
    """Catalog entry for a spatial covariance.

    ``alpha`` is the scaling exponent (0 under H1), ``epsilon`` the
    mollification parameter (spectral factor exp(-2 eps |xi|^2)).
    """

    kind: str
    dim: int = 1
    hypothesis: str = H1
    alpha: float = 0.0
    epsilon: float = 0.0
    eta: float | None = None
    weight: str | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidSpec(f"unknown kernel kind {self.kind!r}")
        if self.dim < 1 or int(self.dim) != self.dim:
            raise InvalidSpec("dim must be a positive integer")
        if self.hypothesis not in (H1, H2):
            raise InvalidSpec("hypothesis must be H1 or H2")
        if self.epsilon < 0:
            raise InvalidSpec("epsilon must be >= 0")
        if self.kind == RIESZ:
            if self.eta is None or not (0 < self.eta < min(2, self.dim)):
                raise InvalidSpec(
                    f"riesz requires 0 < eta < min(2, dim); got eta={self.eta}, dim={self.dim}"
                )
            if self.hypothesis != H2 or self.alpha != self.eta:
                raise InvalidSpec("riesz requires hypothesis H2 with alpha = eta")
        elif self.kind == SPACE_TIME_WHITE:
            if self.dim != 1:
                raise InvalidSpec("space_time_white requires dim = 1")
            if self.hypothesis != H2 or self.alpha != 1.0:
                raise InvalidSpec("space_time_white requires hypothesis H2 with alpha = 1")
        elif self.kind == GAUSSIAN_BUMP:
            if self.hypothesis != H1 or self.alpha != 0.0:
                raise InvalidSpec("gaussian_bump requires hypothesis H1 with alpha = 0")
        else:
            if self.weight not in _SPECTRAL_REGISTRY:
                raise InvalidSpec(f"unknown spectral weight {self.weight!r}")
            entry = _SPECTRAL_REGISTRY[self.weight]
            if self.hypothesis != entry["hypothesis"] or self.alpha != entry["alpha"]:
                raise InvalidSpec("custom_spectral hypothesis/alpha must match the registry entry")
        if self.hypothesis == H2 and not (0 < self.alpha < 2) and self.kind != SPACE_TIME_WHITE:
            raise InvalidSpec("H2 requires alpha in (0, 2)")

    # -- constructors -------------------------------------------------------
    @staticmethod
    def riesz(eta: float, dim: int = 1, epsilon: float = 0.0) -> "CovarianceSpec":
        return CovarianceSpec(RIESZ, dim=dim, hypothesis=H2, alpha=float(eta),
                              epsilon=epsilon, eta=float(eta))

    @staticmethod
    def gaussian_bump(dim: int = 1, epsilon: float = 0.0) -> "CovarianceSpec":
        return CovarianceSpec(GAUSSIAN_BUMP, dim=dim, hypothesis=H1, alpha=0.0, epsilon=epsilon)

    @staticmethod
    def space_time_white(epsilon: float = 0.0) -> "CovarianceSpec":
        return CovarianceSpec(SPACE_TIME_WHITE, dim=1, hypothesis=H2, alpha=1.0, epsilon=epsilon)

    @staticmethod
    def custom_spectral(weight: str, dim: int = 1, epsilon: float = 0.0) -> "CovarianceSpec":
        entry = _SPECTRAL_REGISTRY.get(weight)
        if entry is None:
            raise InvalidSpec(f"unknown spectral weight {weight!r}")
        return CovarianceSpec(CUSTOM_SPECTRAL, dim=dim, hypothesis=entry["hypothesis"],
                              alpha=entry["alpha"], epsilon=epsilon, weight=weight)

    # -- helpers ------------------------------------------------------------
    @property
    def singular(self) -> bool:
        """True when pointwise evaluation at the origin is undefined."""
        return self.epsilon == 0.0 and self.kind in (RIESZ, SPACE_TIME_WHITE)

    @property
    def bounded(self) -> bool:
        return not self.singular

    def with_epsilon(self, epsilon: float) -> "CovarianceSpec":
        return replace(self, epsilon=float(epsilon))

    def cache_key(self):
        return (self.kind, self.dim, self.eta, self.weight, self.epsilon)

    def tag(self) -> str:
        parts = [self.kind, f"dim{self.dim}"]
        if self.eta is not None:
            parts.append(f"eta{self.eta:g}")
        if self.weight is not None:
            parts.append(self.weight)
        parts.append(f"eps{self.epsilon:g}")
        return "-".join(parts)


# -- key-value text serialization -------------------------------------------

_TEXT_FIELDS = ("kind", "eta", "dim", "hypothesis", "alpha", "epsilon", "weight")


def spec_to_config_text(spec: CovarianceSpec) -> str:
    """Serialize a covariance spec to `key = value` lines."""
    lines = [f"kind = {spec.kind}"]
    if spec.eta is not None:
        lines.append(f"eta = {spec.eta!r}")
    lines.append(f"dim = {spec.dim}")
    lines.append(f"hypothesis = {spec.hypothesis}")
    lines.append(f"alpha = {spec.alpha!r}")
    lines.append(f"epsilon = {spec.epsilon!r}")
    if spec.weight is not None:
        lines.append(f"weight = {spec.weight}")
    return "\n".join(lines) + "\n"


def spec_from_config_text(text: str) -> CovarianceSpec:
    """Parse the `key = value` format written by :func:`spec_to_config_text`."""
    fields: dict = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidSpec(f"malformed line in covariance config: {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _TEXT_FIELDS:
            raise InvalidSpec(f"unknown covariance config key {key!r}")
        fields[key] = value
    if "kind" not in fields:
        raise InvalidSpec("covariance config is missing 'kind'")
    kwargs = {"kind": fields["kind"]}
    for key in ("dim",):
        if key in fields:
            kwargs[key] = int(fields[key])
    for key in ("alpha", "epsilon", "eta"):
        if key in fields:
            kwargs[key] = float(fields[key])
    for key in ("hypothesis", "weight"):
        if key in fields:
            kwargs[key] = fields[key]
    return CovarianceSpec(**kwargs)


def spec_from_dict(data: dict) -> CovarianceSpec:
    """Build a spec from a JSON-style dict, filling catalog defaults."""
    data = dict(data)
    kind = data.pop("kind", None)
    if kind == RIESZ and "hypothesis" not in data:
        return CovarianceSpec.riesz(data["eta"], dim=data.get("dim", 1),
                                    epsilon=data.get("epsilon", 0.0))
    if kind == GAUSSIAN_BUMP and "hypothesis" not in data:
        return CovarianceSpec.gaussian_bump(dim=data.get("dim", 1),
                                            epsilon=data.get("epsilon", 0.0))
    if kind == SPACE_TIME_WHITE and "hypothesis" not in data:
        return CovarianceSpec.space_time_white(epsilon=data.get("epsilon", 0.0))
    if kind == CUSTOM_SPECTRAL and "hypothesis" not in data:
        return CovarianceSpec.custom_spectral(data["weight"], dim=data.get("dim", 1),
                                              epsilon=data.get("epsilon", 0.0))
    return CovarianceSpec(kind=kind, **data)


def spec_to_dict(spec: CovarianceSpec) -> dict:
    out = {"kind": spec.kind, "dim": spec.dim, "hypothesis": spec.hypothesis,
           "alpha": spec.alpha, "epsilon": spec.epsilon}
    if spec.eta is not None:
        out["eta"] = spec.eta
    if spec.weight is not None:
        out["weight"] = spec.weight
    return out


# ---------------------------------------------------------------------------
# spectral densities
# ---------------------------------------------------------------------------

def riesz_constant(eta: float, dim: int) -> float:
    """Normalization c with mu(xi) = c |xi|^(eta-dim) giving gamma(x) = |x|^(-eta).

    Calibrated once per (eta, dim) by quadrature of the subordination
    integral at |x| = 1 and cached.
    """
    key = (round(float(eta), 12), int(dim))
    with _lock:
        cached = _RIESZ_CONSTANTS.get(key)
    if cached is not None:
        return cached
    beta = (dim - eta) / 2.0
    val, _ = integrate.quad(lambda w: w ** (-eta / 2.0 - 1.0) * math.exp(-1.0 / (4.0 * w)),
                            0, np.inf, limit=400)
    c = special.gamma(beta) * (4.0 * math.pi) ** (dim / 2.0) / val
    with _lock:
        _RIESZ_CONSTANTS[key] = c
    return c


def spectral_density(spec: CovarianceSpec, xi_norm) -> np.ndarray:
    """Radial spectral density mu(|xi|) without the mollification factor."""
    r = np.asarray(xi_norm, dtype=float)
    if spec.kind == RIESZ:
        c = riesz_constant(spec.eta, spec.dim)
        with np.errstate(divide="ignore"):
            return c * np.power(r, spec.eta - spec.dim)
    if spec.kind == SPACE_TIME_WHITE:
        return np.ones_like(r)
    if spec.kind == GAUSSIAN_BUMP:
        return math.pi ** (spec.dim / 2.0) * np.exp(-np.square(r) / 4.0)
    weight = _SPECTRAL_REGISTRY[spec.weight]["weight"]
    return np.asarray(weight(r), dtype=float)


def synthesis_weight(spec: CovarianceSpec, xi_norm) -> np.ndarray:
    """Mollified spectral density mu(|xi|) * exp(-2 eps |xi|^2)."""
    r = np.asarray(xi_norm, dtype=float)
    out = spectral_density(spec, r)
    if spec.epsilon > 0:
        out = out * np.exp(-2.0 * spec.epsilon * np.square(r))
    return out


def zero_mode_weight(spec: CovarianceSpec, dxi: float) -> float:
    """Cell average of the mollified spectral density over the origin cell.

    Used in place of the (possibly singular) pointwise value at xi = 0 on
    spectral lattices with spacing ``dxi``.
    """
    half = dxi / 2.0
    if spec.kind == RIESZ:
        c = riesz_constant(spec.eta, spec.dim)
        if spec.dim == 1:
            # (1/dxi) * int_{-h}^{h} c |xi|^(eta-1) dxi
            return c * 2.0 * half ** spec.eta / (spec.eta * dxi)
        # equal-area disc of the square cell
        r_eq = dxi / math.sqrt(math.pi)
        return c * 2.0 * math.pi * r_eq ** spec.eta / (spec.eta * dxi ** 2)
    return float(synthesis_weight(spec, np.array(0.0)))


# ---------------------------------------------------------------------------
# mollified Riesz closed form, custom-spectral tables
# ---------------------------------------------------------------------------

def _riesz_mollified(eta, dim, eps, radii):
    """gamma_eps for the Riesz family via the Kummer confluent function.

    Subordinating the Gaussian spectral factor gives
        gamma_eps(r) = c (4 pi)^(-dim/2) (Gamma(eta/2)/Gamma(dim/2))
                       (2 eps)^(-eta/2) 1F1(eta/2; dim/2; -r^2/(8 eps)),
    exact for every eps > 0; the scaling relation
    gamma_eps(x) = eps^(-eta/2) gamma_1(x/sqrt(eps)) holds identically.
    """
    c = riesz_constant(eta, dim)
    pref = c * (4.0 * math.pi) ** (-dim / 2.0) * special.gamma(eta / 2.0) \
        / special.gamma(dim / 2.0) * (2.0 * eps) ** (-eta / 2.0)
    arg = -np.square(np.asarray(radii, dtype=float)) / (8.0 * eps)
    return pref * special.hyp1f1(eta / 2.0, dim / 2.0, arg)


def _custom_profile(spec, radii):
    """Radial Fourier quadrature for registered spectral weights."""
    r = np.asarray(radii, dtype=float)
    # truncate where the mollified weight falls below 1e-14 of its peak
    grid = np.linspace(0.0, 1.0, 4097)[1:]
    cutoff = 1.0
    while True:
        w = synthesis_weight(spec, grid * cutoff)
        if w.max() <= 0:
            raise InvalidSpec("spectral weight vanishes identically")
        if w[-1] < 1e-14 * w.max() or cutoff > 1e6:
            break
        cutoff *= 2.0
    xi = grid * cutoff
    w = synthesis_weight(spec, xi)
    dxi = xi[1] - xi[0]
    if spec.dim == 1:
        kernel = np.cos(np.outer(r, xi))
        return (kernel * w).sum(axis=1) * dxi / math.pi
    kernel = special.j0(np.outer(r, xi))
    return (kernel * (w * xi)).sum(axis=1) * dxi / (2.0 * math.pi)


class _RadialTable:
    """Cubic-spline table of a registered-weight covariance profile."""

    def __init__(self, spec: CovarianceSpec):
        radii = np.linspace(0.0, 64.0, 4001)
        values = _custom_profile(spec, radii)
        self.r_max = float(radii[-1])
        self._spline = interpolate.CubicSpline(radii, values, bc_type=((1, 0.0), "not-a-knot"))
        self.at_zero = float(values[0])

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = self._spline(np.minimum(r, self.r_max))
        return np.where(r > self.r_max, 0.0, out)


def _radial_table(spec: CovarianceSpec) -> _RadialTable:
    key = spec.cache_key()
    with _lock:
        table = _RADIAL_TABLES.get(key)
        if table is None:
            table = _RadialTable(spec)
            _RADIAL_TABLES[key] = table
    return table


# ---------------------------------------------------------------------------
# gamma evaluation
# ---------------------------------------------------------------------------

def _radius(x, dim) -> np.ndarray:
    pts = np.asarray(x, dtype=float)
    if dim == 1:
        return np.abs(pts)
    if pts.shape == (dim,):
        return np.atleast_1d(np.linalg.norm(pts))[0] * np.ones(())
    if pts.ndim >= 1 and pts.shape[-1] == dim:
        return np.linalg.norm(pts, axis=-1)
    raise InvalidSpec(f"point shape {pts.shape} incompatible with dim={dim}")


def gamma_eval(spec: CovarianceSpec, x, scale: float = 1.0):
    """Evaluate the (mollified) covariance at displacement ``x``.

    ``scale`` multiplies the kernel, for scaled-kernel experiments.
    Raises SingularEvaluation for distribution-valued cases.
    """
    return gamma_radial(spec, _radius(x, spec.dim), scale=scale)


def gamma_radial(spec: CovarianceSpec, r, scale: float = 1.0):
    """Covariance as a function of the displacement radius |x|."""
    scalar = np.ndim(r) == 0
    r = np.atleast_1d(np.asarray(r, dtype=float))

    if spec.kind == SPACE_TIME_WHITE:
        if spec.epsilon == 0.0:
            raise SingularEvaluation("space-time white covariance is a point mass; mollify first")
        var = 4.0 * spec.epsilon  # heat kernel at time 4*eps
        out = (2.0 * math.pi * var) ** -0.5 * np.exp(-np.square(r) / (2.0 * var))
    elif spec.kind == GAUSSIAN_BUMP:
        width = 1.0 + 8.0 * spec.epsilon
        out = width ** (-spec.dim / 2.0) * np.exp(-np.square(r) / width)
    elif spec.kind == RIESZ:
        if spec.epsilon == 0.0:
            if np.any(r == 0.0):
                raise SingularEvaluation("riesz kernel with epsilon = 0 is singular at 0")
            out = np.power(r, -spec.eta)
        else:
            out = _riesz_mollified(spec.eta, spec.dim, spec.epsilon, r)
    else:
        out = _radial_table(spec)(r)

    out = out * scale
    return float(out[0]) if scalar else out


def gamma_zero(spec: CovarianceSpec) -> float:
    """Covariance at the origin; finite only for bounded kernels."""
    if spec.singular:
        raise SingularEvaluation("kernel is singular at the origin")
    return float(gamma_eval(spec, np.zeros(spec.dim) if spec.dim > 1 else 0.0))


def dalang_value(spec: CovarianceSpec, tol: float = 1e-8) -> float:
    """Integral of mu(xi) / (1 + |xi|^2) over frequency space.

    Finite exactly when a random-field solution exists.  Divergence of the
    dyadic tail sums raises DivergentIntegral.
    """
    if spec.hypothesis != H2 and spec.kind != CUSTOM_SPECTRAL:
        raise InvalidSpec("dalang_value applies to H2 covariances")
    dim = spec.dim
    surface = 2.0 * math.pi ** (dim / 2.0) / special.gamma(dim / 2.0)

    def integrand(r):
        return spectral_density(spec, r) * r ** (dim - 1) / (1.0 + r * r)

    total, _ = integrate.quad(integrand, 0.0, 16.0, limit=200)
    pieces = []
    lo = 16.0
    for _ in range(48):
        piece, _ = integrate.quad(integrand, lo, 2.0 * lo, limit=200)
        total += piece
        pieces.append(piece)
        lo *= 2.0
        if piece < tol * max(total, 1.0):
            return surface * total
        if len(pieces) >= 4:
            r1 = pieces[-1] / pieces[-2]
            r2 = pieces[-2] / pieces[-3]
            r3 = pieces[-3] / pieces[-4]
            if min(r1, r2, r3) > 1.0 + 1e-9:
                raise DivergentIntegral(
                    "spectral tail of mu(xi)/(1+|xi|^2) is not integrable")
            # dyadic pieces of a power-law tail form a geometric sequence;
            # once the ratio stabilizes below one, sum the remainder exactly
            if r1 < 1.0 and abs(r1 - r2) < 1e-10 * r1:
                return surface * (total + piece * r1 / (1.0 - r1))
    r1 = pieces[-1] / pieces[-2]
    if r1 >= 1.0:
        raise DivergentIntegral("spectral tail did not converge")
    return surface * (total + pieces[-1] * r1 / (1.0 - r1))


# ---------------------------------------------------------------------------
# heat kernels
# ---------------------------------------------------------------------------

def heat_kernel(t: float, x, dim: int):
    """Gaussian heat kernel (2 pi t)^(-dim/2) exp(-|x|^2 / (2t))."""
    if t <= 0:
        raise NonPositiveTime(f"heat kernel needs t > 0, got {t}")
    r = _radius(x, dim)
    return (2.0 * math.pi * t) ** (-dim / 2.0) * np.exp(-np.square(r) / (2.0 * t))


def log_heat_kernel(t: float, x, dim: int):
    if t <= 0:
        raise NonPositiveTime(f"heat kernel needs t > 0, got {t}")
    r = _radius(x, dim)
    return -np.square(r) / (2.0 * t) - 0.5 * dim * math.log(2.0 * math.pi * t)


def bridge_kernel(t: float, s: float, x0, x, y, dim: int = 1):
    """Pinned-path transition weight p_{s(t-s)/t}(y - x0 - (s/t)(x - x0))."""
    if not 0.0 < s < t:
        raise TimeOutOfRange(f"need 0 < s < t, got s={s}, t={t}")
    var_time = s * (t - s) / t
    x0 = np.asarray(x0, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return heat_kernel(var_time, y - x0 - (s / t) * (x - x0), dim)


# ---------------------------------------------------------------------------
# measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LatticeDensity:
    """Nonnegative density sampled on a uniform lattice (1D)."""

    origin: float
    spacing: float
    values: tuple

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def sites(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(len(self.values))


@dataclass(frozen=True)
class Measure:
    """Compactly supported nonnegative initial measure: atoms + optional density."""

    atoms: tuple = ()
    density: LatticeDensity | None = None
    support_radius: float = 0.0

    def __post_init__(self):
        if not self.atoms and self.density is None:
            raise EmptyMeasure("measure needs atoms or a density")
        for loc, mass in self.atoms:
            if mass < 0:
                raise InvalidSpec("atom masses must be nonnegative")
            if np.linalg.norm(np.atleast_1d(np.asarray(loc, dtype=float))) > self.support_radius + 1e-12:
                raise InvalidSpec("atom outside the declared support radius")
        if self.density is not None:
            vals = self.density.as_array()
            if np.any(vals < 0):
                raise InvalidSpec("density values must be nonnegative")
            sites = self.density.sites()
            live = np.abs(sites[vals > 0]) if np.any(vals > 0) else np.array([])
            if live.size and live.max() > self.support_radius + 1e-12:
                raise InvalidSpec("density support outside the declared support radius")
        if not (self.total_mass > 0) or not np.isfinite(self.total_mass):
            raise EmptyMeasure("measure must have finite positive total mass")

    @property
    def total_mass(self) -> float:
        mass = sum(m for _, m in self.atoms)
        if self.density is not None:
            mass += float(self.density.as_array().sum() * self.density.spacing)
        return mass

    @property
    def dim(self) -> int:
        if self.atoms:
            loc = np.atleast_1d(np.asarray(self.atoms[0][0], dtype=float))
            return loc.size
        return 1

    # -- constructors -------------------------------------------------------
    @staticmethod
    def dirac(location=0.0, mass: float = 1.0) -> "Measure":
        loc = np.atleast_1d(np.asarray(location, dtype=float))
        radius = float(np.linalg.norm(loc))
        key = tuple(loc.tolist()) if loc.size > 1 else float(loc[0])
        return Measure(atoms=((key, float(mass)),), support_radius=radius)

    @staticmethod
    def from_atoms(pairs) -> "Measure":
        atoms = []
        radius = 0.0
        for loc, mass in pairs:
            arr = np.atleast_1d(np.asarray(loc, dtype=float))
            radius = max(radius, float(np.linalg.norm(arr)))
            key = tuple(arr.tolist()) if arr.size > 1 else float(arr[0])
            atoms.append((key, float(mass)))
        return Measure(atoms=tuple(atoms), support_radius=radius)

    @staticmethod
    def uniform_density(lo: float, hi: float, mass: float = 1.0, n: int = 512) -> "Measure":
        spacing = (hi - lo) / n
        sites = lo + spacing * (np.arange(n) + 0.5)
        values = np.full(n, mass / (hi - lo))
        dens = LatticeDensity(origin=float(sites[0]), spacing=float(spacing),
                              values=tuple(values.tolist()))
        return Measure(atoms=(), density=dens, support_radius=max(abs(lo), abs(hi)))

    @staticmethod
    def gaussian_density(center: float, width: float, grid_sites: np.ndarray) -> "Measure":
        """Unit-mass lattice sample of a Gaussian of variance ``width``."""
        spacing = float(grid_sites[1] - grid_sites[0])
        vals = np.exp(-np.square(grid_sites - center) / (2.0 * width))
        vals /= vals.sum() * spacing
        dens = LatticeDensity(origin=float(grid_sites[0]), spacing=spacing,
                              values=tuple(vals.tolist()))
        radius = float(np.max(np.abs(grid_sites)))
        return Measure(atoms=(), density=dens, support_radius=radius)


def heat_convolve_measure(t: float, u0: Measure, x):
    """Heat flow of a measure: sum of atom Gaussians plus density quadrature."""
    if t <= 0:
        raise NonPositiveTime(f"need t > 0, got {t}")
    pts = np.asarray(x, dtype=float)
    scalar = pts.ndim == 0 or (u0.dim > 1 and pts.shape == (u0.dim,))
    out = np.atleast_1d(np.zeros_like(_radius(pts, u0.dim), dtype=float))
    for loc, mass in u0.atoms:
        loc_arr = np.asarray(loc, dtype=float)
        out = out + mass * np.atleast_1d(heat_kernel(t, pts - loc_arr, u0.dim))
    if u0.density is not None:
        sites = u0.density.sites()
        vals = u0.density.as_array()
        p = np.atleast_2d(heat_kernel(t, np.atleast_1d(pts)[..., None] - sites[None, :], 1))
        out = out + (p * vals).sum(axis=-1).reshape(out.shape) * u0.density.spacing
    return float(out[0]) if scalar else out.reshape(np.shape(_radius(pts, u0.dim)))


def log_heat_convolve_atoms(t: float, u0: Measure, x):
    """log of the atom part of the heat flow, stable at large |x|."""
    if t <= 0:
        raise NonPositiveTime(f"need t > 0, got {t}")
    if not u0.atoms:
        raise EmptyMeasure("log heat flow needs an atomic measure")
    pts = np.asarray(x, dtype=float)
    logs = []
    for loc, mass in u0.atoms:
        loc_arr = np.asarray(loc, dtype=float)
        logs.append(math.log(mass) + log_heat_kernel(t, pts - loc_arr, u0.dim))
    stacked = np.stack(logs, axis=0)
    peak = stacked.max(axis=0)
    return peak + np.log(np.exp(stacked - peak).sum(axis=0))
