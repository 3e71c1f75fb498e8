"""Noise synthesis statistics against the covariance layer."""
import math

import numpy as np
import pytest

from pamlab.errors import (
    GridTooCoarse,
    InsufficientSamples,
    InvalidSpec,
    LagOutOfRange,
    NegativeSpectralWeight,
)
from pamlab.kernels import CovarianceSpec, gamma_eval, register_spectral_weight
from pamlab.noise import (
    SpaceTimeGrid,
    aliased_fraction,
    empirical_covariance,
    mollify_slice,
    read_slice,
    synthesize_increments,
    synthesize_slice,
    write_slice,
)
from pamlab.streams import SeedStreams

GRID = SpaceTimeGrid(dim=1, points_per_axis=256, spacing=0.1, time_step=0.01, horizon=1.0)


def _slices(spec, grid, n, seed_path=("noise",), seed=20250808):
    streams = SeedStreams(seed)
    values = []
    batch = 1024
    for b in range(math.ceil(n / batch)):
        nb = min(batch, n - b * batch)
        rng = streams.stream(*seed_path, "batch", b)
        values.append(synthesize_increments(spec, grid, rng, nb))
    return np.concatenate(values, axis=0)


def test_grid_validation():
    with pytest.raises(InvalidSpec):
        SpaceTimeGrid(dim=1, points_per_axis=100, spacing=0.1, time_step=0.01, horizon=1.0)
    with pytest.raises(InvalidSpec):
        SpaceTimeGrid(dim=1, points_per_axis=256, spacing=0.1, time_step=0.03, horizon=1.0)
    with pytest.raises(InvalidSpec):
        # period 3.2 < 8 sqrt(1)
        SpaceTimeGrid(dim=1, points_per_axis=32, spacing=0.1, time_step=0.01, horizon=1.0)


def test_white_noise_site_variance():
    spec = CovarianceSpec.space_time_white()
    vals = _slices(spec, GRID, 20_000)
    var = vals.var()
    target = GRID.time_step / GRID.spacing
    se = target * math.sqrt(2.0 / vals.size)  # all cells i.i.d.
    assert abs(var - target) < 3 * se


def test_gaussian_bump_lag_covariance():
    spec = CovarianceSpec.gaussian_bump()
    vals = _slices(spec, GRID, 10_000)
    lags = [0.0, 0.5, 1.0, 2.0]
    stats = empirical_covariance(vals, [lag / GRID.spacing for lag in lags])
    for (idx_lag, est, se), lag in zip(stats, lags):
        target = math.exp(-lag * lag) * GRID.time_step
        assert abs(est - target) < 3 * se, (lag, est, target, se)


def test_riesz_mollified_lag_covariance():
    spec = CovarianceSpec.riesz(0.5, dim=1, epsilon=0.05)
    vals = _slices(spec, GRID, 10_000)
    stats = empirical_covariance(vals, [1.0 / GRID.spacing])
    _, est, se = stats[0]
    target = gamma_eval(spec, 1.0) * GRID.time_step
    assert abs(est - target) < 3 * se


def test_riesz_unmollified_synthesis_forbidden():
    with pytest.raises(InvalidSpec):
        synthesize_slice(CovarianceSpec.riesz(0.5, dim=1), GRID, SeedStreams(0).stream("x"))


def test_whiteness_in_time_and_determinism():
    spec = CovarianceSpec.gaussian_bump()
    streams = SeedStreams(11)
    a = synthesize_slice(spec, GRID, streams.stream("noise", 0), step=0)
    a2 = synthesize_slice(spec, GRID, SeedStreams(11).stream("noise", 0), step=0)
    np.testing.assert_array_equal(a.values, a2.values)  # bit identical

    # independent steps decorrelate: average product over 10^4 pairs
    vals = _slices(spec, GRID, 20_000)
    prod = (vals[0::2] * vals[1::2]).mean(axis=1)
    se = prod.std(ddof=1) / math.sqrt(len(prod))
    assert abs(prod.mean()) < 3 * se


def test_stationarity_across_base_points():
    spec = CovarianceSpec.gaussian_bump()
    vals = _slices(spec, GRID, 6_000)
    lag_idx = int(round(0.5 / GRID.spacing))
    ests = []
    for base in (10, 90, 200):
        (_, est, se), = empirical_covariance(vals, [lag_idx], base_points=[base])
        ests.append((est, se))
    target = math.exp(-0.25) * GRID.time_step
    for est, se in ests:
        assert abs(est - target) < 3 * se


def test_mollify_identity_limit():
    spec = CovarianceSpec.space_time_white()
    s = synthesize_slice(spec, GRID, SeedStreams(3).stream("m"))
    out = mollify_slice(s, 1e-12)
    assert np.max(np.abs(out.values - s.values)) < 1e-9


def test_mollify_composition_matches_squared_multiplier():
    spec = CovarianceSpec.gaussian_bump()
    s = synthesize_slice(spec, GRID, SeedStreams(4).stream("m"))
    eps = 0.3
    twice = mollify_slice(mollify_slice(s, eps), eps)
    xi2 = GRID.frequency_norm() ** 2
    direct = np.fft.ifft(np.fft.fft(s.values) * np.exp(-eps * xi2)).real
    assert np.max(np.abs(twice.values - direct)) < 1e-10


def test_mollified_white_covariance_is_heat_kernel():
    # one application of width-eps smoothing turns the point mass into p_{2 eps}
    from pamlab.kernels import heat_kernel

    spec = CovarianceSpec.space_time_white()
    eps = 0.1
    streams = SeedStreams(9)
    vals = []
    for b in range(10):
        raw = synthesize_increments(spec, GRID, streams.stream("mw", b), 1000)
        xi2 = GRID.frequency_norm() ** 2
        vals.append(np.fft.ifft(np.fft.fft(raw, axis=1) * np.exp(-0.5 * eps * xi2)[None, :],
                                axis=1).real)
    vals = np.concatenate(vals)
    lags = [0.0, 0.3, 0.5, 1.0]
    stats = empirical_covariance(vals, [lag / GRID.spacing for lag in lags])
    for (_, est, se), lag in zip(stats, lags):
        target = heat_kernel(2 * eps, lag, 1) * GRID.time_step
        assert abs(est - target) < 3 * se, (lag, est, target, se)


def test_empirical_covariance_contracts():
    rng = np.random.default_rng(0)
    iid = rng.standard_normal((4000, 64))
    (_, est, se), = empirical_covariance(iid, [0])
    assert abs(est - 1.0) < 3 * se
    with pytest.raises(LagOutOfRange):
        empirical_covariance(iid, [40])
    with pytest.raises(InsufficientSamples):
        empirical_covariance(iid[:50], [0])


def test_negative_spectral_weight_rejected():
    register_spectral_weight("_test_negative", lambda r: np.cos(np.asarray(r)) - 0.5)
    spec = CovarianceSpec.custom_spectral("_test_negative")
    with pytest.raises(NegativeSpectralWeight):
        synthesize_slice(spec, GRID, SeedStreams(0).stream("x"))


def test_grid_too_coarse_detected():
    coarse = SpaceTimeGrid(dim=1, points_per_axis=32, spacing=0.5, time_step=0.01, horizon=1.0)
    spec = CovarianceSpec.riesz(0.5, dim=1, epsilon=1e-4)
    assert aliased_fraction(spec, coarse) > 0.01
    with pytest.raises(GridTooCoarse):
        synthesize_slice(spec, coarse, SeedStreams(0).stream("x"))


def test_two_dimensional_synthesis_variance():
    grid2 = SpaceTimeGrid(dim=2, points_per_axis=64, spacing=0.25, time_step=0.01, horizon=0.25)
    spec = CovarianceSpec.gaussian_bump(dim=2)
    streams = SeedStreams(17)
    vals = synthesize_increments(spec, grid2, streams.stream("2d"), 400)
    target = gamma_eval(spec, np.zeros(2)) * grid2.time_step
    est = vals.var()
    assert abs(est - target) < 0.05 * target


def test_empirical_covariance_accepts_slice_objects():
    spec = CovarianceSpec.gaussian_bump()
    streams = SeedStreams(5)
    slices = [synthesize_slice(spec, GRID, streams.stream("s", i), step=i)
              for i in range(150)]
    stats = empirical_covariance(slices, [0.0, 0.5])  # physical lags
    for (lag, est, se), target_lag in zip(stats, (0.0, 0.5)):
        target = math.exp(-target_lag ** 2) * GRID.time_step
        assert abs(est - target) < 4 * se


def test_slice_dump_round_trip(tmp_path):
    spec = CovarianceSpec.gaussian_bump()
    s = synthesize_slice(spec, GRID, SeedStreams(5).stream("d"), step=3, stream_id="seed5/d")
    path = tmp_path / "slice.pamn"
    write_slice(path, s)
    loaded = read_slice(path)
    np.testing.assert_array_equal(loaded.values, s.values)
    assert loaded.step == 3
    assert loaded.stream_id == "seed5/d"
    assert loaded.grid == GRID
