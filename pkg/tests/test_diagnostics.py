import itertools

import numpy as np
import numpy.testing as npt
import pytest
from scipy.integrate import quad, solve_ivp, trapezoid

from src.diagnostics import (
    SeminormTable,
    damping_monitor,
    duhamel_accumulate,
    envelope_report,
    fgr_context,
    g_decompose,
    nakanishi_lower_bound,
    nakanishi_seminorm,
    pullback,
    reduced_envelope,
    scattering_defect,
    strichartz_st,
    virial_monitor,
    z_power_monitor,
)
from src.dynamics import evolve
from src.errors import CoverageError
from src.models import ModelConfig, RadialField, SpectralField, SystemState, Trajectory
from src.radial import gaussian, lp_norms, make_grid, norm, spectral_values
from src.resolvent import gaussian_hat, spectral_profile


def free_run(grid, t_end, dt=0.05, stride=1):
    config = ModelConfig(
        grid=grid,
        G=RadialField.zeros(grid),
        dt=dt,
        t_end=t_end,
        checkpoint_stride=stride,
        field_stride=stride,
        cubic_on=False,
    )
    return evolve(SystemState(gaussian(grid, 1.0), 0j), config)


@pytest.fixture(scope="module")
def gaussian_context(gaussian_coupling):
    return fgr_context(gaussian_coupling, spectral_profile(lambda rho: gaussian_hat(rho, 1.0)))


def test_free_pullback_is_constant(free_trajectory):
    initial = free_trajectory.states[0].xi
    for t in (5.0, 20.0):
        npt.assert_allclose(pullback(free_trajectory, t).values, initial.values, atol=1e-12)


def test_free_run_scatters(free_trajectory):
    report = scattering_defect(free_trajectory, 1e-6)
    assert report.verdict
    assert report.verdict_time == pytest.approx(10.0)
    assert np.all(np.diff(report.cauchy_defect) <= 1e-15)


def test_bound_oscillator_does_not_scatter(coupled_trajectory):
    report = scattering_defect(coupled_trajectory, 1e-3)
    assert not report.verdict
    assert report.statistic >= np.min(np.abs(coupled_trajectory.z_values))


def test_scattering_needs_stored_fields(small_grid):
    with pytest.raises(CoverageError):
        scattering_defect(free_run(small_grid, 0.1, stride=2), 1e-6)


def test_strichartz_of_free_gaussian():
    trajectory = free_run(make_grid(2047, 100.0), 5.0)
    expected, _ = quad(lambda t: np.pi / 3 / (1 + 4 * t ** 2) ** 2, 0.0, 5.0, epsabs=1e-14)
    npt.assert_allclose(strichartz_st(trajectory, 0.0, 5.0), expected ** 0.25, rtol=1e-5)


def test_strichartz_outside_stored_range(free_trajectory):
    with pytest.raises(CoverageError):
        strichartz_st(free_trajectory, 0.0, 30.0)


def test_duhamel_reproduces_forced_field(small_grid, gaussian_coupling):
    config = ModelConfig(
        grid=small_grid,
        G=gaussian_coupling,
        dt=0.01,
        t_end=4.0,
        checkpoint_stride=5,
        field_stride=5,
        cubic_on=False,
    )
    trajectory = evolve(SystemState(RadialField.zeros(small_grid), 0.2), config)
    integral = duhamel_accumulate(trajectory, 0.0, 4.0)
    final = trajectory.states[-1].xi
    assert not integral.low_accuracy
    assert integral.nodes == 81
    assert norm(final - integral.field, "L2") <= 5e-3 * norm(final, "L2")


def test_duhamel_single_node_is_flagged(free_trajectory):
    integral = duhamel_accumulate(free_trajectory, 2.0, 2.5)
    assert integral.nodes == 1
    assert integral.low_accuracy


def test_reduced_envelope_solves_reduced_law():
    gamma, y0 = 2 * np.pi ** 2 / np.e, 0.09
    times = np.linspace(0.0, 50.0, 11)
    solution = solve_ivp(lambda t, y: -gamma * y ** 3, (0.0, 50.0), [y0], t_eval=times, rtol=1e-11, atol=1e-14)
    npt.assert_allclose(reduced_envelope(y0, gamma, times), solution.y[0], rtol=1e-7)


def test_identity_monitors_need_dense_checkpoints(free_trajectory, gaussian_context):
    with pytest.raises(ValueError, match="sparse"):
        damping_monitor(free_trajectory, gaussian_context)


def test_g_decompose(coupled_trajectory, gaussian_context):
    state = coupled_trajectory.states[3]
    Y, g = g_decompose(state, gaussian_context)
    scale = np.max(np.abs(state.xi.values))
    npt.assert_allclose((Y + g).values, state.xi.values, atol=1e-14 * scale)
    npt.assert_allclose(Y.values, -abs(state.z) ** 2 * state.z * gaussian_context.outgoing.values)


def test_nakanishi_vanishes_for_free_flow(free_trajectory):
    report = nakanishi_seminorm(free_trajectory, 0.0, 10.0, 20.0)
    assert report.value <= 1e-12


def test_nakanishi_needs_horizon_after_window(free_trajectory):
    with pytest.raises(ValueError):
        nakanishi_seminorm(free_trajectory, 0.0, 10.0, 10.0)


def test_nakanishi_is_subadditive(coupled_trajectory):
    table = SeminormTable(coupled_trajectory, 25.0)
    rng = np.random.default_rng(7)
    for _ in range(20):
        t0, t1, t2 = (float(t) for t in sorted(rng.choice(21, size=3, replace=False)))
        whole = nakanishi_seminorm(coupled_trajectory, t0, t2, 25.0, table).value
        first = nakanishi_seminorm(coupled_trajectory, t0, t1, 25.0, table).value
        second = nakanishi_seminorm(coupled_trajectory, t1, t2, 25.0, table).value
        assert whole <= (first + second) * (1 + 1e-10)


def window_norm(table, first, i, j):
    rows = np.array([
        table.pullbacks[min(k, j)] - table.pullbacks[i] for k in range(first, len(table.times))
    ])
    times = table.times[first:]
    rows = rows * np.exp(-1j * np.outer(times, table.grid.rho ** 2))
    values = spectral_values(SpectralField(table.grid, rows[0]), rows)
    return trapezoid(lp_norms(values, table.grid, 6) ** 4, times) ** 0.25


@pytest.mark.parametrize("t0", [0.0, 5.0])
def test_nakanishi_matches_full_window_supremum(coupled_trajectory, t0):
    table = SeminormTable(coupled_trajectory, 25.0)
    first = table.index_of(t0)
    indices = table.candidates(t0, 20.0)
    full = max(window_norm(table, first, i, j) for i, j in itertools.combinations(indices, 2))
    report = nakanishi_seminorm(coupled_trajectory, t0, 20.0, 25.0, table)
    npt.assert_allclose(report.value, full, rtol=1e-10)


def test_nakanishi_lower_bound(coupled_trajectory):
    table = SeminormTable(coupled_trajectory, 20.0)
    report = nakanishi_seminorm(coupled_trajectory, 2.0, 12.0, 20.0, table)
    first, second = nakanishi_lower_bound(coupled_trajectory, 2.0, 12.0, 20.0, table)
    assert report.value > 0
    assert max(first, second) <= report.value * (1 + 1e-12)
    assert report.pair[0] < report.pair[1]
    assert 0.0 <= report.tail_fraction <= 1.0


def test_virial_identity_for_free_gaussian():
    trajectory = free_run(make_grid(1023, 100.0), 10.0, dt=0.01, stride=5)
    series = virial_monitor(trajectory, 50.0)
    assert series.summary <= 0.05


def test_virial_cutoff_must_fit_domain(free_trajectory):
    with pytest.raises(ValueError):
        virial_monitor(free_trajectory, 60.0)


def test_virial_identity_with_coupling_and_cubic_term():
    grid = make_grid(1023, 100.0)
    config = ModelConfig(
        grid=grid,
        G=gaussian(grid, 1.0),
        dt=0.01,
        t_end=5.0,
        checkpoint_stride=5,
        field_stride=5,
    )
    trajectory = evolve(SystemState(gaussian(grid, 1.0, 0.5), 0.2), config)
    assert virial_monitor(trajectory, 20.0).summary <= 1e-3


def test_degree_eight_identity_is_degree_two_scaled(small_grid, gaussian_coupling, gaussian_context):
    config = ModelConfig(
        grid=small_grid,
        G=gaussian_coupling,
        dt=0.01,
        t_end=5.0,
        checkpoint_stride=1,
        field_stride=500,
    )
    dense = evolve(SystemState(gaussian(small_grid, 1.0, 0.1), 0.3), config)
    coarse = Trajectory(config, dense.records[::2], dense.states)

    gaps = []
    for trajectory in (dense, coarse):
        degree_two = damping_monitor(trajectory, gaussian_context)
        degree_eight = z_power_monitor(trajectory, gaussian_context)
        weight = np.abs(trajectory.z_values) ** 6
        npt.assert_allclose(degree_eight.fgr_term, weight * degree_two.fgr_term, rtol=1e-12)
        npt.assert_allclose(degree_eight.remainder, weight * degree_two.remainder, rtol=1e-10, atol=1e-18)
        gap = np.abs(degree_eight.residual - weight * degree_two.residual)[1:-1]
        gaps.append(np.max(gap) / np.max(np.abs(degree_eight.lhs)))

    assert gaps[0] <= 1e-3
    assert gaps[1] > 2.5 * gaps[0]


@pytest.mark.slow
def test_radiation_damping_of_gaussian_coupling():
    grid = make_grid(1535, 300.0)
    G = gaussian(grid, 1.0)
    context = fgr_context(G, spectral_profile(lambda rho: gaussian_hat(rho, 1.0)))
    config = ModelConfig(grid=grid, G=G, dt=0.01, t_end=200.0, checkpoint_stride=5, field_stride=5000)
    z0 = 0.3
    trajectory = evolve(SystemState(RadialField.zeros(grid), z0), config)

    assert damping_monitor(trajectory, context).summary <= 0.1
    assert z_power_monitor(trajectory, context).summary <= 0.1

    envelope = envelope_report(trajectory, context.gamma)
    assert envelope["envelope_deviation"] <= 0.2
    assert -0.35 <= envelope["late_slope"] <= -0.15
    assert envelope["z_final"] < 0.6 * z0


def test_window_pairs_cover_all_stored_fields(free_trajectory):
    table = SeminormTable(free_trajectory, 25.0)
    indices = table.candidates(0.0, 20.0)
    assert list(indices) == list(range(21))
    assert table.times[-1] == 25.0
    assert len(list(itertools.combinations(indices, 2))) == 210
