import numpy as np
import numpy.testing as npt
import pytest

from src.diagnostics import fgr_context
from src.errors import ShellConditionError
from src.models import RadialField
from src.radial import gaussian, make_grid, neg_laplacian, to_spectral
from src.resolvent import (
    beta_resolvent,
    dispersive_decay_probe,
    extrapolated_gamma,
    far_field_taper,
    fgr_condition_check,
    fgr_gamma,
    fgr_report,
    field_from_profile,
    gaussian_hat,
    hat_transform,
    regularized_gamma,
    resolvent_apply,
    resonant_grid,
    spectral_profile,
)

GAUSSIAN_GAMMA = 2 * np.pi ** 2 / np.e


@pytest.fixture(scope="module")
def gaussian_profile():
    return spectral_profile(lambda rho: gaussian_hat(rho, 1.0))


def test_resonant_grid_places_resonance_on_panel_edge():
    rho, spacing = resonant_grid(1.0, 12.0, 37.0)
    assert spacing <= 1 / 37.0
    npt.assert_allclose(rho[int(round(2 / spacing))], 1.0, rtol=1e-14)
    assert rho[-1] >= 12.0


def test_resonant_grid_resolves_radius():
    _, spacing = resonant_grid(1.0, 12.0, 10.0, r_extent=300.0)
    assert spacing <= np.pi / 310.0


@pytest.mark.parametrize("rho0, rho_max", [(0.0, 12.0), (2.0, 1.5)])
def test_resonant_grid_rejects_bad_ranges(rho0, rho_max):
    with pytest.raises(ValueError):
        resonant_grid(rho0, rho_max)


def test_hat_transform_of_gaussian(compact_grid):
    profile = hat_transform(gaussian(compact_grid, 1.0))
    assert profile.provenance == "physical"
    npt.assert_allclose(profile.values.real, gaussian_hat(profile.rho), atol=1e-10)
    npt.assert_allclose(profile.values[0], (2 * np.pi) ** 1.5, rtol=1e-10)


def test_gamma_of_gaussian_closed_form(gaussian_profile):
    report = fgr_report(gaussian_profile)
    npt.assert_allclose(report.gamma, GAUSSIAN_GAMMA, rtol=1e-10)
    npt.assert_allclose(report.gamma_sphere, GAUSSIAN_GAMMA, rtol=1e-10)
    assert abs(report.gamma - report.gamma_sphere) / report.gamma_sphere <= 1e-8
    assert report.fgr_holds
    assert report.beta.imag < 0


def test_gamma_two_ways_on_physical_profile(compact_grid):
    profile = hat_transform(gaussian(compact_grid, 1.3, 0.7))
    beta = beta_resolvent(profile)
    npt.assert_allclose(-beta.imag, fgr_gamma(profile), rtol=1e-8)


def test_gamma_matches_regularized_limit(gaussian_profile):
    npt.assert_allclose(extrapolated_gamma(gaussian_profile), GAUSSIAN_GAMMA, rtol=1e-6)
    errors = [abs(regularized_gamma(gaussian_profile, eps) - GAUSSIAN_GAMMA) for eps in (1e-2, 1e-3, 1e-4)]
    assert errors[0] > errors[1] > errors[2]
    with pytest.raises(ValueError):
        extrapolated_gamma(gaussian_profile, coarse=1e-4, fine=1e-3)


def test_beta_refinement_is_stable():
    hat = lambda rho: gaussian_hat(rho, 1.0)
    coarse = beta_resolvent(spectral_profile(hat, density=100.0))
    fine = beta_resolvent(spectral_profile(hat, density=200.0))
    assert abs(coarse - fine) <= 1e-9


def test_beta_on_grid_matches_quadrature(compact_grid, gaussian_profile):
    G = gaussian(compact_grid, 1.0)
    context = fgr_context(G, gaussian_profile)
    npt.assert_allclose(context.beta, beta_resolvent(gaussian_profile), rtol=1e-7)
    npt.assert_allclose(context.gamma, GAUSSIAN_GAMMA, rtol=1e-7)


def test_shell_condition(bump_profile):
    holds, min_abs = fgr_condition_check(spectral_profile(bump_profile))
    assert not holds
    assert min_abs == 0.0
    assert fgr_gamma(spectral_profile(bump_profile)) == 0.0


def test_shell_vanishing_profile_has_real_beta(bump_profile):
    beta = beta_resolvent(spectral_profile(bump_profile))
    assert beta.imag == 0.0
    assert beta.real > 0


def test_gaussian_fails_shell_condition(gaussian_profile):
    holds, min_abs = fgr_condition_check(gaussian_profile)
    assert holds
    assert min_abs > 0


def test_field_from_profile_has_compact_spectrum(small_grid, bump_profile):
    G = field_from_profile(bump_profile, small_grid)
    c = to_spectral(G).coeffs
    outside = (small_grid.rho <= 1.5) | (small_grid.rho >= 2.5)
    npt.assert_allclose(c[outside], 0.0, atol=1e-14)
    assert np.max(np.abs(c)) > 0


def test_field_from_profile_samples_transform_on_grid_frequencies(bump_profile):
    grid = make_grid(2047, 200.0)
    profile = hat_transform(field_from_profile(bump_profile, grid), rho_max=4.0)
    rho = grid.rho[grid.rho < 4.0]
    npt.assert_allclose(profile.at(rho), bump_profile(rho), atol=1e-10)


def test_regular_resolvent_inverts(bump_coupling):
    phi = resolvent_apply(bump_coupling, 0.0, "regular")
    applied = neg_laplacian(phi) - phi
    scale = np.max(np.abs(bump_coupling.values))
    npt.assert_allclose(applied.values, bump_coupling.values, atol=1e-10 * scale)
    npt.assert_allclose(phi.values.imag, 0.0, atol=1e-14)


def test_regular_resolvent_rejects_resonant_coupling(gaussian_coupling):
    with pytest.raises(ShellConditionError) as excinfo:
        resolvent_apply(gaussian_coupling, 0.0, "regular")
    assert excinfo.value.min_abs_on_shell > 0


def test_resolvent_rejects_unknown_mode(gaussian_coupling):
    with pytest.raises(ValueError):
        resolvent_apply(gaussian_coupling, 0.0, "incoming")


def test_outgoing_resolvent_radiates(compact_grid, gaussian_profile):
    """Away from the source r * R_+(1)G is a multiple of e^{ir}."""
    G = gaussian(compact_grid, 1.0)
    outgoing = resolvent_apply(G, 0.0, "limiting_absorption", profile=gaussian_profile)
    far = compact_grid.r > 15.0
    amplitude = compact_grid.r[far] * outgoing.values[far] * np.exp(-1j * compact_grid.r[far])
    npt.assert_allclose(amplitude, amplitude[0], rtol=1e-6)


def test_far_field_taper(small_grid):
    taper = far_field_taper(small_grid, 0.5)
    r = small_grid.r
    npt.assert_allclose(taper[r <= 50.0], 1.0)
    npt.assert_allclose(taper[r >= 75.0], 0.0, atol=1e-15)
    assert np.all(np.diff(taper) <= 0)
    with pytest.raises(ValueError):
        far_field_taper(small_grid, 1.0)


def test_decay_probe_needs_increasing_times(small_grid):
    with pytest.raises(ValueError):
        dispersive_decay_probe(gaussian(small_grid), 5.0, [1.0, 2.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        dispersive_decay_probe(gaussian(small_grid), 5.0, [1.0, 2.0])


@pytest.mark.slow
def test_dispersive_decay_exponent():
    grid = make_grid(4999, 1000.0)
    times = np.geomspace(5.0, 80.0, 12)
    probe = dispersive_decay_probe(gaussian(grid, 1.0), 5.0, times)
    assert not probe.degenerate
    assert -1.7 <= probe.exponent <= -1.3


def test_hat_transform_is_linear(compact_grid):
    F, G = gaussian(compact_grid, 1.0), gaussian(compact_grid, 2.0, 0.3)
    combined = hat_transform(F * 2.0 - G * 0.5).values
    npt.assert_allclose(combined, 2.0 * hat_transform(F).values - 0.5 * hat_transform(G).values, atol=1e-11)
    npt.assert_array_equal(hat_transform(RadialField.zeros(compact_grid)).values, 0.0)


def test_gamma_is_quadratic_in_coupling():
    single = spectral_profile(lambda rho: gaussian_hat(rho, 1.0))
    double = spectral_profile(lambda rho: gaussian_hat(rho, 1.0, 2.0))
    npt.assert_allclose(fgr_gamma(double), 4 * fgr_gamma(single), rtol=1e-14)


def test_shell_condition_with_zero_tolerance(gaussian_profile):
    holds, _ = fgr_condition_check(gaussian_profile, tol=0.0)
    assert holds
    npt.assert_allclose(abs(gaussian_profile.resonant_value), (2 * np.pi) ** 1.5 * np.exp(-0.5), rtol=1e-14)


def test_decay_probe_is_linear(small_grid):
    times = [2.0, 4.0, 8.0, 16.0]
    single = dispersive_decay_probe(gaussian(small_grid), 5.0, times)
    double = dispersive_decay_probe(gaussian(small_grid, 1.0, 2.0), 5.0, times)
    npt.assert_allclose(double.samples, 2 * single.samples, rtol=1e-12)
    npt.assert_allclose(double.exponent, single.exponent, rtol=1e-10)


def test_decay_probe_of_zero_is_degenerate(small_grid):
    probe = dispersive_decay_probe(RadialField.zeros(small_grid), 5.0, [1.0, 2.0, 3.0, 4.0])
    assert probe.degenerate
    assert np.isnan(probe.exponent)
    npt.assert_array_equal(probe.samples, 0.0)
