"""Ground-state variational problems for the interaction energies.

Two maximizations over unit-L2 profiles g on a periodic lattice:

    quartic  form:  Q(g) = (gamma * g^2, g^2)   (lattice convolution)
    energy_a(g) = Q(g)        - |grad g|^2      (the pair-interaction energy)
    energy_b(g) = sqrt(Q(g))  - |grad g|^2 / 2  (the square-root variant)

with the point-mass covariance handled as the local quartic term
Q(g) = int g^4.  Optimization is projected gradient ascent on the unit
sphere with backtracking line search and random restarts; derivatives and
convolutions are spectral, so translating a profile leaves the energy
unchanged to rounding.

The two energies are linked, for scaling-homogeneous kernels, through the
best constant of the interpolation inequality; ``kappa_from_energy``,
``me_relation_check`` and ``peak_growth_constant`` expose those closed-form
relations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadAlpha,
    DomainTooSmall,
    InvalidSpec,
    NoConvergence,
    NotScaling,
)
from .kernels import RIESZ, CovarianceSpec, gamma_radial

DELTA = "delta"
ZERO = "zero"


@dataclass(frozen=True)
class VarGrid:
    """Periodic lattice on [-extent, extent)^dim with n points per axis."""

    dim: int
    n: int
    extent: float

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise InvalidSpec("variational grids support dim 1 or 2")
        if self.n < 8:
            raise InvalidSpec("need at least 8 points per axis")
        if self.extent <= 0:
            raise InvalidSpec("extent must be positive")

    @property
    def h(self) -> float:
        return 2.0 * self.extent / self.n

    def sites(self) -> np.ndarray:
        return -self.extent + self.h * np.arange(self.n)

    def shape(self) -> tuple:
        return (self.n,) * self.dim

    def cell_volume(self) -> float:
        return self.h ** self.dim

    def frequency_norm_sq(self) -> np.ndarray:
        xi = 2.0 * math.pi * np.fft.fftfreq(self.n, d=self.h)
        if self.dim == 1:
            return xi ** 2
        gx, gy = np.meshgrid(xi, xi, indexing="ij")
        return gx ** 2 + gy ** 2

    def min_image(self) -> np.ndarray:
        """Minimum-image displacement radii for circular convolution kernels."""
        d = self.sites() - self.sites()[0]
        period = 2.0 * self.extent
        d = np.where(d > period / 2.0, d - period, d)
        if self.dim == 1:
            return np.abs(d)
        gx, gy = np.meshgrid(d, d, indexing="ij")
        return np.hypot(gx, gy)


@dataclass(frozen=True)
class VariationalState:
    """Converged profile and diagnostics for one maximization."""

    grid: VarGrid
    values: np.ndarray
    norm: float
    energy: float
    residual: float
    iterations: int
    restarts: int
    restart_energies: tuple
    objective_trace: tuple = ()


def _riesz_cell_average(eta: float, dim: int, h: float) -> float:
    """Average of |x|^(-eta) over the lattice cell at the origin."""
    if dim == 1:
        return 2.0 ** eta * h ** (-eta) / (1.0 - eta) if eta != 1.0 else float("inf")
    r_eq = h / math.sqrt(math.pi)  # equal-area disc
    return 2.0 * math.pi * r_eq ** (2.0 - eta) / ((2.0 - eta) * h ** 2)


class _Objective:
    """Energy, gradient and bookkeeping for one kernel on one lattice."""

    def __init__(self, spec, grid: VarGrid, scale: float = 1.0, sqrt_form: bool = False):
        self.spec = spec
        self.grid = grid
        self.scale = scale
        self.sqrt_form = sqrt_form
        self.vol = grid.cell_volume()
        self.xi2 = grid.frequency_norm_sq()
        if spec in (DELTA, ZERO):
            self.kernel_fft = None
        else:
            radii = grid.min_image()
            if spec.kind == RIESZ and spec.epsilon == 0.0:
                vals = np.zeros_like(radii)
                mask = radii > 0
                vals[mask] = np.power(radii[mask], -spec.eta)
                vals[(0,) * grid.dim] = _riesz_cell_average(spec.eta, spec.dim, grid.h)
                vals = vals * scale
            else:
                vals = gamma_radial(spec, radii, scale=scale)
            self.kernel_fft = np.fft.fftn(vals)

    def normalize(self, g):
        return g / math.sqrt(self.vol * float(np.sum(g * g)))

    def quartic(self, g):
        g2 = g * g
        if self.spec == ZERO:
            return 0.0, np.zeros_like(g)
        if self.spec == DELTA:
            q = self.vol * float(np.sum(g2 * g2)) * self.scale
            grad = 4.0 * self.vol * g2 * g * self.scale
            return q, grad
        conv = np.fft.ifftn(np.fft.fftn(g2) * self.kernel_fft).real * self.vol
        q = self.vol * float(np.sum(conv * g2))
        grad = 4.0 * self.vol * conv * g
        return q, grad

    def dirichlet(self, g):
        ghat = np.fft.fftn(g)
        d = self.vol / g.size * float(np.sum(self.xi2 * np.abs(ghat) ** 2))
        grad = 2.0 * self.vol * np.fft.ifftn(self.xi2 * ghat).real
        return d, grad

    def energy_grad(self, g):
        q, gq = self.quartic(g)
        d, gd = self.dirichlet(g)
        if self.sqrt_form:
            if q <= 0.0:
                return -0.5 * d, -0.5 * gd, q, d
            return math.sqrt(q) - 0.5 * d, gq / (2.0 * math.sqrt(q)) - 0.5 * gd, q, d
        return q - d, gq - gd, q, d

    def project(self, g, grad):
        inner = self.vol * float(np.sum(grad * g))
        return grad - inner * g  # g has unit norm

    def precondition(self, v):
        # inverse Helmholtz smoothing tames the stiff Laplacian modes; the
        # operator is positive definite, so preconditioned directions remain
        # ascent directions and the fixed points are unchanged
        return np.fft.ifftn(np.fft.fftn(v) / (1.0 + self.xi2)).real

    def fourier_quartic(self, g):
        """Cross-evaluation of the quartic form from the spectral density."""
        if self.spec in (DELTA, ZERO):
            g2 = g * g
            if self.spec == ZERO:
                return 0.0
            ghat2 = np.fft.fftn(g2) * self.vol
            # Parseval on the lattice: identical to the real-space sum
            total = float(np.sum(np.abs(ghat2) ** 2)) / (self.grid.n ** self.grid.dim
                                                         * self.vol)
            return total * self.scale
        from .kernels import synthesis_weight, zero_mode_weight

        grid = self.grid
        xi = 2.0 * math.pi * np.fft.fftfreq(grid.n, d=grid.h)
        if grid.dim == 1:
            norm = np.abs(xi)
        else:
            gx, gy = np.meshgrid(xi, xi, indexing="ij")
            norm = np.hypot(gx, gy)
        weights = np.array(synthesis_weight(self.spec, norm), dtype=float)
        dxi = 2.0 * math.pi / (2.0 * grid.extent)
        weights[(0,) * grid.dim] = zero_mode_weight(self.spec, dxi)
        ghat2 = np.fft.fftn(g * g) * self.vol
        total = float(np.sum(weights * np.abs(ghat2) ** 2))
        return total * (dxi / (2.0 * math.pi)) ** grid.dim * self.scale


@dataclass(frozen=True)
class OptimizerOptions:
    tol: float = 1e-7
    max_iterations: int = 20_000
    restarts: int = 3
    step0: float = 0.5
    backtrack: float = 0.5
    armijo: float = 1e-4
    seed: int = 7
    boundary_tol: float = 1e-6


def _initial_profiles(obj: _Objective, opts: OptimizerOptions):
    grid = obj.grid
    sites = grid.sites()
    if grid.dim == 1:
        base = np.exp(-np.square(sites) / 2.0)
    else:
        gx, gy = np.meshgrid(sites, sites, indexing="ij")
        base = np.exp(-(gx ** 2 + gy ** 2) / 2.0)
    rng = np.random.default_rng(opts.seed)
    yield obj.normalize(base)
    for k in range(opts.restarts - 1):
        width = rng.uniform(0.4, 2.5)
        if grid.dim == 1:
            envelope = np.exp(-np.square(sites) / (2.0 * width ** 2))
        else:
            gx, gy = np.meshgrid(sites, sites, indexing="ij")
            envelope = np.exp(-(gx ** 2 + gy ** 2) / (2.0 * width ** 2))
        bump = envelope * (1.0 + 0.3 * rng.standard_normal(grid.shape()))
        yield obj.normalize(np.abs(bump) + 1e-9)


def _ascend(obj: _Objective, g, opts: OptimizerOptions):
    energy, grad, _, _ = obj.energy_grad(g)
    trace = [energy]
    resid = math.inf
    for it in range(opts.max_iterations):
        plain = obj.project(g, grad)
        resid = math.sqrt(obj.vol * float(np.sum(plain * plain)))
        if resid < opts.tol:
            return g, energy, resid, it, trace
        direction = obj.project(g, obj.precondition(plain))
        slope = obj.vol * float(np.sum(plain * direction))
        if slope <= 0.0:
            return g, energy, resid, it, trace
        step = opts.step0
        improved = False
        while step > 1e-14:
            cand = obj.normalize(g + step * direction)
            cand_energy, cand_grad, _, _ = obj.energy_grad(cand)
            if cand_energy >= energy + opts.armijo * step * slope:
                g, energy, grad = cand, cand_energy, cand_grad
                trace.append(energy)
                improved = True
                break
            step *= opts.backtrack
        if not improved:
            return g, energy, resid, it, trace
    raise NoConvergence(
        f"projected gradient residual {resid:.2e} above tol {opts.tol:g}"
        f" after {opts.max_iterations} iterations")


def _boundary_max(grid: VarGrid, g) -> float:
    if grid.dim == 1:
        return max(abs(float(g[0])), abs(float(g[-1])))
    edge = np.concatenate([np.abs(g[0, :]), np.abs(g[-1, :]), np.abs(g[:, 0]), np.abs(g[:, -1])])
    return float(edge.max())


def _maximize(spec, grid: VarGrid, opts: OptimizerOptions, scale: float, sqrt_form: bool):
    if spec == ZERO:
        # degenerate kernel: on the periodic lattice the supremum 0 is
        # attained exactly by the constant profile
        g = np.full(grid.shape(), 1.0 / math.sqrt(grid.cell_volume() * grid.n ** grid.dim))
        state = VariationalState(grid=grid, values=g, norm=1.0, energy=0.0,
                                 residual=0.0, iterations=0, restarts=0,
                                 restart_energies=(0.0,))
        return 0.0, state
    obj = _Objective(spec, grid, scale=scale, sqrt_form=sqrt_form)
    best = None
    energies = []
    for g0 in _initial_profiles(obj, opts):
        g, energy, resid, iters, trace = _ascend(obj, g0, opts)
        energies.append(energy)
        if best is None or energy > best[1] + 1e-15 or \
                (abs(energy - best[1]) <= 1e-15 and resid < best[2]):
            best = (g, energy, resid, iters, trace)
    g, energy, resid, iters, trace = best
    if spec != ZERO and _boundary_max(grid, g) > opts.boundary_tol:
        raise DomainTooSmall(
            f"profile is {_boundary_max(grid, g):.2e} at the boundary;"
            " enlarge the extent")
    norm = math.sqrt(obj.vol * float(np.sum(g * g)))
    state = VariationalState(grid=grid, values=g, norm=norm, energy=energy,
                             residual=resid, iterations=iters,
                             restarts=opts.restarts, restart_energies=tuple(energies),
                             objective_trace=tuple(trace[-50:]))
    return energy, state


def hartree_energy(spec, grid: VarGrid, opts: OptimizerOptions | None = None,
                   scale: float = 1.0):
    """Maximize Q(g) - |grad g|^2 over unit-norm lattice profiles.

    ``spec`` is a CovarianceSpec, or the string "delta" for the local
    quartic objective, or "zero" for the degenerate kernel.
    """
    opts = opts or OptimizerOptions()
    return _maximize(spec, grid, opts, scale, sqrt_form=False)


def m_energy(spec, grid: VarGrid, opts: OptimizerOptions | None = None,
             scale: float = 1.0):
    """Maximize sqrt(Q(g)) - |grad g|^2 / 2 over unit-norm lattice profiles."""
    opts = opts or OptimizerOptions()
    return _maximize(spec, grid, opts, scale, sqrt_form=True)


def fourier_energy_check(spec, grid: VarGrid, state: VariationalState,
                         scale: float = 1.0) -> float:
    """Relative gap between real-space and spectral evaluations of Q(g)."""
    obj = _Objective(spec, grid, scale=scale)
    q_real, _ = obj.quartic(state.values)
    q_fourier = obj.fourier_quartic(state.values)
    denom = max(abs(q_real), abs(q_fourier), 1e-300)
    return abs(q_real - q_fourier) / denom


def kappa_from_hartree(energy: float, alpha: float) -> float:
    """Best interpolation constant from the pair-interaction energy."""
    if not 0.0 < alpha < 2.0:
        raise BadAlpha(f"alpha must lie in (0, 2), got {alpha}")
    if energy < 0:
        raise InvalidSpec("energy must be nonnegative")
    return (2.0 / alpha) * ((alpha / (2.0 - alpha)) * energy) ** ((2.0 - alpha) / 2.0)


def m_from_hartree(energy: float, alpha: float) -> float:
    """Square-root variant energy predicted from the pair-interaction energy."""
    if not 0.0 < alpha < 2.0:
        raise BadAlpha(f"alpha must lie in (0, 2), got {alpha}")
    return (4.0 - alpha) / 4.0 * (2.0 * energy / (2.0 - alpha)) ** ((2.0 - alpha) / (4.0 - alpha))


def _spec_alpha(spec) -> float:
    if spec == DELTA:
        return 1.0
    if isinstance(spec, CovarianceSpec):
        if spec.hypothesis != "H2" or spec.epsilon != 0.0:
            raise NotScaling("identity requires a scaling-homogeneous covariance")
        return spec.alpha
    raise NotScaling("identity requires a scaling-homogeneous covariance")


def me_relation_check(spec, grid: VarGrid, opts: OptimizerOptions | None = None):
    """Relative residual between the optimized square-root energy and its
    closed-form image of the optimized pair-interaction energy."""
    alpha = _spec_alpha(spec)
    e_h, _ = hartree_energy(spec, grid, opts)
    lhs, _ = m_energy(spec, grid, opts)
    rhs = m_from_hartree(e_h, alpha)
    return abs(lhs - rhs) / abs(rhs), lhs, rhs


def lambda0(energy: float, alpha_bar: float, dim: int, t: float):
    """Predicted peak-growth constant and the growth exponent a = 2/(4 - alpha_bar).

    Returns (constant, a) with
    constant = ((4 - a_bar)/2) dim^(2/(4-a_bar)) (energy t / (2-a_bar))^((2-a_bar)/(4-a_bar)).
    """
    if not 0.0 <= alpha_bar < 2.0:
        raise BadAlpha(f"alpha_bar must lie in [0, 2), got {alpha_bar}")
    if energy < 0:
        raise InvalidSpec("energy must be nonnegative")
    if t <= 0:
        raise InvalidSpec("t must be positive")
    a = 2.0 / (4.0 - alpha_bar)
    const = ((4.0 - alpha_bar) / 2.0) * dim ** (2.0 / (4.0 - alpha_bar)) \
        * (energy * t / (2.0 - alpha_bar)) ** ((2.0 - alpha_bar) / (4.0 - alpha_bar))
    return const, a


def interpolation_gap(spec, grid: VarGrid, g, kappa: float, alpha: float) -> float:
    """Q(g) - kappa * |g|_2^(4-alpha) |grad g|_2^alpha for a lattice profile."""
    obj = _Objective(spec, grid)
    q, _ = obj.quartic(g)
    d, _ = obj.dirichlet(g)
    l2 = math.sqrt(obj.vol * float(np.sum(g * g)))
    return q - kappa * l2 ** (4.0 - alpha) * d ** (alpha / 2.0)


def schrodinger_ground_energy(potential, radius: float, n: int = 4000) -> float:
    """sup over unit-norm g supported in (-radius, radius) of
    int V g^2 - (1/2) int |g'|^2, via the tridiagonal Dirichlet eigenproblem."""
    from scipy.linalg import eigh_tridiagonal

    h = 2.0 * radius / (n + 1)
    x = -radius + h * np.arange(1, n + 1)
    v = np.asarray(potential(x), dtype=float)
    diag = 1.0 / h ** 2 - v
    off = np.full(n - 1, -0.5 / h ** 2)
    vals = eigh_tridiagonal(diag, off, select="i", select_range=(0, 0),
                            eigvals_only=True)
    return -float(vals[0])


def profile_to_csv(path, state: VariationalState) -> None:
    import csv

    sites = state.grid.sites()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if state.grid.dim == 1:
            writer.writerow(["x", "g"])
            for x, v in zip(sites, state.values):
                writer.writerow([f"{x:.17g}", f"{v:.17g}"])
        else:
            writer.writerow(["x", "y", "g"])
            for i, x in enumerate(sites):
                for j, y in enumerate(sites):
                    writer.writerow([f"{x:.17g}", f"{y:.17g}", f"{state.values[i, j]:.17g}"])
