"""Mild-equation time stepping: deterministic limits, statistical laws,
linearity, and the series second moment."""
import math

import numpy as np
import pytest
from scipy import integrate

from pamlab.errors import (
    InvalidSpec,
    SurrogateBiasExceeded,
    TruncationUnreliable,
    UnstableRun,
    UnsupportedKernel,
)
from pamlab.kernels import CovarianceSpec, Measure, heat_kernel
from pamlab.noise import SpaceTimeGrid
from pamlab.solver import (
    chaos_second_moment,
    deposit_measure,
    evolve_ensemble_values,
    evolve_mild,
    field_to_csv,
    ratio_field,
)
from pamlab.streams import SeedStreams

BUMP = CovarianceSpec.gaussian_bump()
GRID = SpaceTimeGrid(dim=1, points_per_axis=512, spacing=0.03125, time_step=0.005, horizon=0.5)
WIDE = SpaceTimeGrid(dim=1, points_per_axis=512, spacing=0.03125, time_step=0.01, horizon=1.0)


def test_zero_noise_recovers_heat_kernel():
    state = evolve_mild(Measure.dirac(0.0), BUMP, WIDE, SeedStreams(1), 1.0, zero_noise=True)
    target = heat_kernel(1.0, WIDE.sites(), 1)
    assert np.max(np.abs(state.values - target)) < 1e-8
    assert state.negativity_fraction == 0.0


def test_zero_noise_log_backend_matches():
    state = evolve_mild(Measure.dirac(0.0), BUMP, WIDE, SeedStreams(1), 1.0,
                        zero_noise=True, method="log")
    target = heat_kernel(1.0, WIDE.sites(), 1)
    assert np.max(np.abs(state.values - target)) < 1e-8


def test_ensemble_mean_matches_heat_flow():
    # mean-one property of the left-point coupling, three probe sites
    streams = SeedStreams(7)
    probes = [256, 288, 320]
    vals = evolve_ensemble_values(Measure.dirac(0.0), BUMP, GRID, streams, 0.5,
                                  2000, probes, batch_size=250)
    sites = GRID.sites()
    for col, idx in enumerate(probes):
        target = heat_kernel(0.5, sites[idx], 1)
        m = vals[:, col].mean()
        se = vals[:, col].std(ddof=1) / math.sqrt(vals.shape[0])
        assert abs(m - target) < 3 * se, (idx, m, target, se)


def test_linearity_in_initial_mass():
    streams = SeedStreams(3)
    big = evolve_mild(Measure.dirac(0.0, 2.0), BUMP, GRID, streams, 0.5, seed_path=("lin",))
    one = evolve_mild(Measure.dirac(0.0, 1.0), BUMP, GRID, streams, 0.5, seed_path=("lin",))
    rel = np.max(np.abs(big.values - 2.0 * one.values)) / np.max(np.abs(big.values))
    assert rel < 1e-12


def test_superposition_of_atoms():
    streams = SeedStreams(3)
    a = evolve_mild(Measure.dirac(-1.0), BUMP, GRID, streams, 0.5, seed_path=("sup",))
    b = evolve_mild(Measure.dirac(1.5), BUMP, GRID, streams, 0.5, seed_path=("sup",))
    ab = evolve_mild(Measure.from_atoms([(-1.0, 1.0), (1.5, 1.0)]), BUMP, GRID,
                     streams, 0.5, seed_path=("sup",))
    rel = np.max(np.abs(ab.values - a.values - b.values)) / np.max(np.abs(ab.values))
    assert rel < 1e-12


def test_determinism_bitwise():
    one = evolve_mild(Measure.dirac(0.0), BUMP, GRID, SeedStreams(9), 0.5)
    two = evolve_mild(Measure.dirac(0.0), BUMP, GRID, SeedStreams(9), 0.5)
    np.testing.assert_array_equal(one.values, two.values)


def test_negativity_fraction_decreases_with_time_step():
    # coarse steps produce real negative excursions; refining the step
    # shrinks their lattice fraction (averaged over replicas)
    fracs = []
    for dt in (0.5, 0.25, 0.125):
        grid = SpaceTimeGrid(dim=1, points_per_axis=256, spacing=0.0625,
                             time_step=dt, horizon=2.0)
        per_rep = [evolve_mild(Measure.dirac(0.0), BUMP, grid, SeedStreams(21), 2.0,
                               seed_path=("neg", dt, rep)).negativity_fraction
                   for rep in range(8)]
        fracs.append(float(np.mean(per_rep)))
    assert fracs[0] > 0.0
    assert fracs[0] > fracs[1] > fracs[2]


def test_unstable_run_reports_step():
    # an enormous covariance amplitude overflows within a few dozen steps
    from pamlab.kernels import register_spectral_weight

    register_spectral_weight("_test_huge", lambda r: 1e30 * np.exp(-np.square(r)))
    spec = CovarianceSpec.custom_spectral("_test_huge")
    grid = SpaceTimeGrid(dim=1, points_per_axis=256, spacing=0.1, time_step=0.01,
                         horizon=0.5)
    with pytest.raises(UnstableRun) as info:
        evolve_mild(Measure.dirac(0.0), spec, grid, SeedStreams(2), 0.5)
    assert info.value.step is not None


def test_time_must_align_with_step():
    with pytest.raises(InvalidSpec):
        evolve_mild(Measure.dirac(0.0), BUMP, GRID, SeedStreams(1), 0.5012)


def test_deposit_conserves_mass():
    u0 = Measure.from_atoms([(0.33, 2.0), (-1.7, 0.5)])
    dep = deposit_measure(u0, GRID)
    assert dep.sum() * GRID.spacing == pytest.approx(2.5, rel=1e-12)


# ---------------------------------------------------------------------------
# ratio field
# ---------------------------------------------------------------------------

def test_ratio_field_zero_noise_is_one():
    rf = ratio_field(0.0, BUMP, GRID, SeedStreams(1), 0.5, zero_noise=True)
    sites = GRID.sites()
    inner = np.abs(sites) <= 0.45 * GRID.period
    assert np.max(np.abs(rf.values[inner] - 1.0)) < 1e-6
    assert np.isfinite(rf.bias_sup)


def test_ratio_field_mean_one():
    streams = SeedStreams(momentum := 31)
    reps = 400
    center = GRID.points_per_axis // 2
    acc = np.empty(reps)
    for r in range(reps):
        rf = ratio_field(0.0, BUMP, GRID, streams, 0.5, seed_path=("rmean", r), audit=False)
        acc[r] = rf.values[center]
    se = acc.std(ddof=1) / math.sqrt(reps)
    assert abs(acc.mean() - 1.0) < 3 * se


def test_ratio_field_width_guard_and_bias_tolerance():
    with pytest.raises(InvalidSpec):
        ratio_field(0.0, BUMP, GRID, SeedStreams(1), 0.5, width=GRID.spacing ** 2 / 4)
    with pytest.raises(SurrogateBiasExceeded):
        ratio_field(0.0, BUMP, GRID, SeedStreams(1), 0.5, bias_tol=1e-16)


# ---------------------------------------------------------------------------
# series second moment
# ---------------------------------------------------------------------------

def test_chaos_order_zero_is_squared_mean():
    cm = chaos_second_moment(BUMP, Measure.dirac(0.0), 0.5, 0.0, max_order=0)
    assert cm.terms[0] == pytest.approx(heat_kernel(0.5, 0.0, 1) ** 2, rel=1e-14)


def test_chaos_order_one_matches_quadrature_oracle():
    from pamlab.solver import _non_crossing_term

    t = 0.5
    term = _non_crossing_term(1, t, 0.0, Measure.dirac(0.0).atoms, 1.0, 1.0, 1, 24)
    oracle, _ = integrate.quad(lambda s: (1 + 4 * s * (t - s) / t) ** -0.5, 0, t)
    oracle *= heat_kernel(t, 0.0, 1) ** 2
    assert term == pytest.approx(oracle, rel=1e-10)


def test_chaos_small_time_value_frozen():
    # quadrature-converged value, stable under node refinement
    a = chaos_second_moment(BUMP, Measure.dirac(0.0), 0.1, 0.0, max_order=3, nodes=20)
    b = chaos_second_moment(BUMP, Measure.dirac(0.0), 0.1, 0.0, max_order=3, nodes=28)
    assert a.value == pytest.approx(b.value, rel=1e-10)
    assert a.value == pytest.approx(1.7534083214732736, rel=1e-9)
    assert a.truncation_ratio < 0.01


def test_chaos_two_atoms_off_center():
    # symmetry: atoms at +-z observed from 0 give the same value as z observed
    # from mirrored targets
    u0 = Measure.from_atoms([(-0.5, 1.0), (0.5, 1.0)])
    a = chaos_second_moment(BUMP, u0, 0.3, 0.2, max_order=2)
    b = chaos_second_moment(BUMP, u0, 0.3, -0.2, max_order=2)
    assert a.value == pytest.approx(b.value, rel=1e-10)


def test_chaos_truncation_guard():
    with pytest.raises(TruncationUnreliable):
        chaos_second_moment(BUMP, Measure.dirac(0.0), 3.0, 0.0, max_order=3)


def test_chaos_contract_errors():
    with pytest.raises(InvalidSpec):
        chaos_second_moment(CovarianceSpec.riesz(0.5, dim=1, epsilon=0.1),
                            Measure.dirac(0.0), 0.1, 0.0)
    with pytest.raises(InvalidSpec):
        chaos_second_moment(BUMP, Measure.uniform_density(-1, 1), 0.1, 0.0)
    with pytest.raises(UnsupportedKernel):
        chaos_second_moment(CovarianceSpec.custom_spectral("xi2_gaussian"),
                            Measure.dirac(0.0), 0.1, 0.0)


def test_chaos_cross_checks_ensemble_second_moment():
    t = 0.5
    cm = chaos_second_moment(BUMP, Measure.dirac(0.0), t, 0.0, max_order=3)
    vals = evolve_ensemble_values(Measure.dirac(0.0), BUMP, GRID, SeedStreams(5), t,
                                  2000, [GRID.points_per_axis // 2], batch_size=250)
    sq = vals[:, 0] ** 2
    se = sq.std(ddof=1) / math.sqrt(len(sq))
    tol = 3 * se + cm.truncation_ratio * cm.value
    assert abs(sq.mean() - cm.value) < tol


def test_field_csv_round_trip(tmp_path):
    state = evolve_mild(Measure.dirac(0.0), BUMP, GRID, SeedStreams(1), 0.5)
    path = tmp_path / "field.csv"
    field_to_csv(path, state)
    rows = np.loadtxt(path, delimiter=",", skiprows=1, usecols=(0, 1))
    np.testing.assert_allclose(rows[:, 0], GRID.sites(), rtol=1e-15)
    np.testing.assert_allclose(rows[:, 1], state.values, rtol=1e-15)


def test_two_dimensional_zero_noise():
    grid2 = SpaceTimeGrid(dim=2, points_per_axis=128, spacing=0.125, time_step=0.05,
                          horizon=0.25)
    spec2 = CovarianceSpec.gaussian_bump(dim=2)
    u0 = Measure.dirac(np.array([0.0, 0.0]))
    state = evolve_mild(u0, spec2, grid2, SeedStreams(1), 0.25, zero_noise=True)
    sites = grid2.sites()
    gx, gy = np.meshgrid(sites, sites, indexing="ij")
    target = heat_kernel(0.25, np.stack([gx, gy], axis=-1), 2)
    assert np.max(np.abs(state.values - target)) < 1e-8
