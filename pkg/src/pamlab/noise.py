"""Lattice synthesis of the driving noise and statistical validation.

One time step of the driving field is a stationary real Gaussian array on a
periodic lattice with covariance gamma_tilde(x - y) * dt, where gamma_tilde
is the periodization of the (mollified) spatial covariance.  Slices are
produced by drawing white noise, transforming to frequency space, scaling by
the square root of the discrete spectral weights and transforming back, so
the realized covariance is the trigonometric-series approximation of the
target kernel.  Spectral mass beyond the lattice Nyquist frequency is
audited and runs are rejected when it exceeds one percent.

Space-time white noise with epsilon = 0 bypasses the spectral route and is
drawn i.i.d. N(0, dt/dx) per cell, the standard lattice surrogate of the
point-mass covariance.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import kernels
from .errors import (
    GridTooCoarse,
    InsufficientSamples,
    InvalidSpec,
    LagOutOfRange,
    NegativeSpectralWeight,
)
from .kernels import RIESZ, SPACE_TIME_WHITE, CovarianceSpec

_ALIAS_LIMIT = 0.01


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Periodic lattice in space plus a uniform time grid."""

    dim: int
    points_per_axis: int
    spacing: float
    time_step: float
    horizon: float

    def __post_init__(self):
        n = self.points_per_axis
        if n < 2 or (n & (n - 1)) != 0:
            raise InvalidSpec("points_per_axis must be a power of two")
        if self.spacing <= 0 or self.time_step <= 0 or self.horizon <= 0:
            raise InvalidSpec("spacing, time_step and horizon must be positive")
        steps = self.horizon / self.time_step
        if abs(steps - round(steps)) > 1e-9:
            raise InvalidSpec("horizon must be an integer number of time steps")
        if self.period < 8.0 * math.sqrt(self.horizon) - 1e-12:
            raise InvalidSpec(
                f"period {self.period:g} too small for horizon {self.horizon:g}"
                " (need period >= 8 sqrt(horizon))"
            )
        if self.dim not in (1, 2):
            raise InvalidSpec("field lattices support dim 1 or 2")

    @property
    def period(self) -> float:
        return self.points_per_axis * self.spacing

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.time_step))

    def sites(self) -> np.ndarray:
        n = self.points_per_axis
        return (np.arange(n) - n // 2) * self.spacing

    def frequencies(self) -> np.ndarray:
        return 2.0 * math.pi * np.fft.fftfreq(self.points_per_axis, d=self.spacing)

    def frequency_norm(self) -> np.ndarray:
        xi = self.frequencies()
        if self.dim == 1:
            return np.abs(xi)
        gx, gy = np.meshgrid(xi, xi, indexing="ij")
        return np.hypot(gx, gy)

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.dim


@dataclass(frozen=True)
class NoiseSlice:
    """One time increment of the driving field on the lattice."""

    values: np.ndarray
    grid: SpaceTimeGrid
    step: int
    stream_id: str
    covariance_tag: str


def aliased_fraction(spec: CovarianceSpec, grid: SpaceTimeGrid) -> float:
    """Fraction of mollified spectral mass beyond the Nyquist ball."""
    if spec.kind == SPACE_TIME_WHITE and spec.epsilon == 0.0:
        return 0.0  # i.i.d. surrogate, no spectral truncation involved
    nyquist = math.pi / grid.spacing
    dim = spec.dim

    def mass(lo, hi):
        val, _ = integrate.quad(
            lambda r: kernels.synthesis_weight(spec, r) * r ** (dim - 1),
            lo, hi, limit=200,
        )
        return val

    inside = mass(0.0, nyquist)
    outside = 0.0
    lo = nyquist
    for _ in range(64):
        piece = mass(lo, 2.0 * lo)
        outside += piece
        lo *= 2.0
        if piece < 1e-12 * max(inside + outside, 1e-300):
            break
    total = inside + outside
    return outside / total if total > 0 else 0.0


def _spectral_multipliers(spec: CovarianceSpec, grid: SpaceTimeGrid) -> np.ndarray:
    """Per-mode variances d_k = dt * weight(xi_k) / dx^dim for synthesis."""
    weights = np.array(kernels.synthesis_weight(spec, grid.frequency_norm()), dtype=float)
    zero_index = (0,) * grid.dim
    away = np.ones(weights.shape, dtype=bool)
    away[zero_index] = False
    if not np.all(np.isfinite(weights[away])):
        raise InvalidSpec("non-finite spectral weight away from the origin")
    if np.any(weights[away] < 0):
        raise NegativeSpectralWeight("spectral weights must be nonnegative")
    dxi = 2.0 * math.pi / grid.period
    weights[zero_index] = kernels.zero_mode_weight(spec, dxi)
    if weights[zero_index] < 0:
        raise NegativeSpectralWeight("cell-averaged zero-mode weight is negative")
    frac = aliased_fraction(spec, grid)
    if frac > _ALIAS_LIMIT:
        raise GridTooCoarse(
            f"aliased spectral mass {frac:.2%} exceeds {_ALIAS_LIMIT:.0%};"
            " refine the lattice or mollify"
        )
    return grid.time_step * weights / grid.spacing ** grid.dim


_MULTIPLIER_CACHE: dict = {}


def _multipliers_cached(spec: CovarianceSpec, grid: SpaceTimeGrid) -> np.ndarray:
    key = (spec.cache_key(), grid)
    out = _MULTIPLIER_CACHE.get(key)
    if out is None:
        out = _spectral_multipliers(spec, grid)
        _MULTIPLIER_CACHE[key] = out
    return out


def synthesize_slice(spec: CovarianceSpec, grid: SpaceTimeGrid, rng,
                     step: int = 0, stream_id: str = "") -> NoiseSlice:
    """Draw one noise slice with covariance gamma_tilde(x - y) * dt."""
    if spec.kind == RIESZ and spec.epsilon == 0.0:
        raise InvalidSpec("riesz noise requires epsilon > 0; synthesize the mollified field")
    if spec.kind == SPACE_TIME_WHITE and spec.dim != 1:
        raise InvalidSpec("space-time white noise is one-dimensional")
    if spec.dim != grid.dim:
        raise InvalidSpec("spec and grid dimensions differ")

    if spec.kind == SPACE_TIME_WHITE and spec.epsilon == 0.0:
        std = math.sqrt(grid.time_step / grid.spacing ** grid.dim)
        values = rng.standard_normal(grid.shape) * std
        return NoiseSlice(values, grid, step, stream_id, spec.tag())

    mult = _multipliers_cached(spec, grid)
    white = rng.standard_normal(grid.shape)
    coeff = np.fft.fftn(white) * np.sqrt(mult)
    values = np.fft.ifftn(coeff).real
    return NoiseSlice(values, grid, step, stream_id, spec.tag())


def synthesize_increments(spec: CovarianceSpec, grid: SpaceTimeGrid, rng,
                          count: int) -> np.ndarray:
    """Vectorized batch of ``count`` independent slices (values only)."""
    if spec.kind == SPACE_TIME_WHITE and spec.epsilon == 0.0:
        std = math.sqrt(grid.time_step / grid.spacing ** grid.dim)
        return rng.standard_normal((count, *grid.shape)) * std
    mult = _multipliers_cached(spec, grid)
    white = rng.standard_normal((count, *grid.shape))
    axes = tuple(range(1, grid.dim + 1))
    coeff = np.fft.fftn(white, axes=axes) * np.sqrt(mult)[None, ...]
    return np.fft.ifftn(coeff, axes=axes).real


def mollify_slice(slice_: NoiseSlice, eps: float) -> NoiseSlice:
    """Circular convolution with the heat kernel of variance ``eps``.

    Each application multiplies the covariance spectral weight by
    exp(-eps |xi|^2); two applications reproduce the eps-mollified field.
    """
    if eps <= 0:
        raise InvalidSpec("mollification width must be positive")
    grid = slice_.grid
    axes = tuple(range(slice_.values.ndim))
    xi2 = grid.frequency_norm() ** 2
    coeff = np.fft.fftn(slice_.values, axes=axes) * np.exp(-0.5 * eps * xi2)
    values = np.fft.ifftn(coeff, axes=axes).real
    return NoiseSlice(values, grid, slice_.step, slice_.stream_id,
                      slice_.covariance_tag + f"*p_{eps:g}")


def empirical_covariance(slices, lags, batches: int = 20, base_points=None):
    """Unbiased lag-covariance estimates with batch-means standard errors.

    ``slices`` is a sequence of NoiseSlice or a (n, N) array of slice values
    (1D lattices).  ``lags`` are physical distances; each must be a multiple
    of the lattice spacing within half the period.  When ``base_points`` is
    given, products are read at those site indices only instead of being
    averaged over the whole lattice.
    """
    if isinstance(slices, np.ndarray):
        values = slices
        if values.ndim != 2:
            raise InvalidSpec("expected a (n_slices, n_sites) array")
        spacing = 1.0
        period = values.shape[1] * spacing
    else:
        slices = list(slices)
        if not slices:
            raise InsufficientSamples("no slices")
        grid = slices[0].grid
        if grid.dim != 1:
            raise InvalidSpec("empirical_covariance handles 1D lattices")
        spacing = grid.spacing
        period = grid.period
        values = np.stack([s.values for s in slices])
    n = values.shape[0]
    if n < 100:
        raise InsufficientSamples(f"need at least 100 slices, got {n}")

    results = []
    n_batches = min(batches, n)
    edges = np.linspace(0, n, n_batches + 1).astype(int)
    for lag in lags:
        if abs(lag) > period / 2.0 + 1e-12:
            raise LagOutOfRange(f"lag {lag} beyond half period {period / 2.0}")
        shift = int(round(lag / spacing))
        if abs(shift * spacing - lag) > 1e-9 * max(1.0, abs(lag)):
            raise InvalidSpec(f"lag {lag} is not a lattice multiple of {spacing}")
        prod = values * np.roll(values, -shift, axis=1)
        if base_points is not None:
            per_slice = prod[:, list(base_points)].mean(axis=1)
        else:
            per_slice = prod.mean(axis=1)
        batch_means = np.array([per_slice[a:b].mean() for a, b in zip(edges[:-1], edges[1:])])
        est = float(per_slice.mean())
        se = float(batch_means.std(ddof=1) / math.sqrt(n_batches))
        results.append((float(lag), est, se))
    return results


# ---------------------------------------------------------------------------
# flat binary slice dump
# ---------------------------------------------------------------------------
# Layout (little endian):
#   magic   4 bytes  b"PAMN"
#   version u32      1
#   dim     u32
#   n       u32      points per axis
#   step    u64
#   dx      f64
#   dt      f64
#   horizon f64
#   id_len  u32      length of the UTF-8 stream id
#   id      id_len bytes
#   values  n^dim f64, C order

_MAGIC = b"PAMN"
_VERSION = 1


def write_slice(path, slice_: NoiseSlice) -> None:
    grid = slice_.grid
    sid = slice_.stream_id.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<III", _VERSION, grid.dim, grid.points_per_axis))
        fh.write(struct.pack("<Q", slice_.step))
        fh.write(struct.pack("<ddd", grid.spacing, grid.time_step, grid.horizon))
        fh.write(struct.pack("<I", len(sid)))
        fh.write(sid)
        fh.write(np.ascontiguousarray(slice_.values, dtype="<f8").tobytes())


def read_slice(path) -> NoiseSlice:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise InvalidSpec("not a slice dump")
        version, dim, n = struct.unpack("<III", fh.read(12))
        if version != _VERSION:
            raise InvalidSpec(f"unsupported dump version {version}")
        (step,) = struct.unpack("<Q", fh.read(8))
        dx, dt, horizon = struct.unpack("<ddd", fh.read(24))
        (id_len,) = struct.unpack("<I", fh.read(4))
        sid = fh.read(id_len).decode("utf-8")
        values = np.frombuffer(fh.read(8 * n ** dim), dtype="<f8").reshape((n,) * dim).copy()
    grid = SpaceTimeGrid(dim=dim, points_per_axis=n, spacing=dx, time_step=dt, horizon=horizon)
    return NoiseSlice(values, grid, step, sid, "loaded")
