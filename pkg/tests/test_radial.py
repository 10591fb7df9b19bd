import numpy as np
import numpy.testing as npt
import pytest

from src.errors import GridMismatchError
from src.models import RadialField, RadialGrid
from src.radial import (
    free_gaussian,
    free_propagate,
    from_spectral,
    gaussian,
    gradient_norm_sq,
    inner_product,
    make_grid,
    neg_laplacian,
    norm,
    radial_derivative,
    sample_radial,
    shell_mass,
    to_spectral,
)


def random_field(grid, seed=0):
    rng = np.random.default_rng(seed)
    return RadialField(grid, rng.standard_normal(grid.n) + 1j * rng.standard_normal(grid.n))


def test_grid_nodes():
    grid = make_grid(9, 10.0)
    npt.assert_allclose(grid.r, np.arange(1, 10))
    npt.assert_allclose(grid.rho, np.pi / 10 * np.arange(1, 10))
    npt.assert_allclose(grid.weights, 4 * np.pi * grid.r ** 2)


@pytest.mark.parametrize("n, r_max", [(1, 10.0), (16, 0.0), (16, -1.0), (16, float("inf"))])
def test_grid_rejects_bad_parameters(n, r_max):
    with pytest.raises(ValueError):
        RadialGrid(n, r_max)


def test_field_rejects_non_finite_values():
    grid = make_grid(8, 1.0)
    values = np.zeros(8)
    values[3] = np.nan
    with pytest.raises(ValueError, match="node 4"):
        RadialField(grid, values)


def test_field_rejects_wrong_length():
    with pytest.raises(GridMismatchError):
        RadialField(make_grid(8, 1.0), np.zeros(7))


def test_spectral_round_trip(small_grid):
    u = random_field(small_grid)
    npt.assert_allclose(from_spectral(to_spectral(u)).values, u.values, atol=1e-11)


def test_parseval(small_grid):
    u = random_field(small_grid, seed=3)
    c = to_spectral(u).coeffs
    npt.assert_allclose(np.sum(np.abs(c) ** 2), inner_product(u, u).real, rtol=1e-12)


def test_free_flow_preserves_l2():
    grid = make_grid(1023, 100.0)
    u = gaussian(grid, 1.0) + random_field(grid) * 1e-3
    start = norm(u, "L2")
    for _ in range(1000):
        u = free_propagate(u, 0.01)
    assert abs(norm(u, "L2") - start) / start <= 1e-12


def test_free_flow_matches_closed_form():
    grid = make_grid(4096, 100.0)
    evolved = free_propagate(gaussian(grid, 1.0), 0.5)
    exact = free_gaussian(grid, 0.5, 1.0)
    assert norm(evolved - exact, "L2") <= 1e-6


def test_free_flow_zero_time_is_identity(small_grid):
    u = random_field(small_grid)
    assert free_propagate(u, 0.0) is u


def test_free_flow_rejects_infinite_time(small_grid):
    with pytest.raises(ValueError):
        free_propagate(random_field(small_grid), float("inf"))


def test_neg_laplacian_of_gaussian(compact_grid):
    r = compact_grid.r
    expected = (3 - r ** 2) * np.exp(-r ** 2 / 2)
    npt.assert_allclose(neg_laplacian(gaussian(compact_grid)).values, expected, atol=1e-9)


def test_radial_derivative_of_gaussian(compact_grid):
    r = compact_grid.r
    npt.assert_allclose(radial_derivative(gaussian(compact_grid)).values, -r * np.exp(-r ** 2 / 2), atol=1e-9)


def test_gaussian_norms(compact_grid):
    u = gaussian(compact_grid)
    npt.assert_allclose(norm(u, "L2"), np.pi ** 0.75, rtol=1e-10)
    npt.assert_allclose(norm(u, "L4"), (np.pi / 2) ** 0.375, rtol=1e-10)
    npt.assert_allclose(norm(u, "L6"), (np.pi / 3) ** 0.25, rtol=1e-10)
    npt.assert_allclose(gradient_norm_sq(u), 1.5 * np.pi ** 1.5, rtol=1e-10)
    npt.assert_allclose(norm(u, "H", theta=1.0), np.sqrt(2.5 * np.pi ** 1.5), rtol=1e-10)
    npt.assert_allclose(norm(u, "H", theta=0.0), norm(u, "L2"), rtol=1e-12)


def test_weighted_norm_orders(compact_grid):
    u = gaussian(compact_grid)
    assert norm(u, "L2sigma", sigma=-5.0) < norm(u, "L2") < norm(u, "L2sigma", sigma=1.0)


@pytest.mark.parametrize("kind, options", [("L3", {}), ("H", {"theta": 2.0}), ("H", {}), ("L2sigma", {})])
def test_norm_rejects_bad_arguments(compact_grid, kind, options):
    with pytest.raises(ValueError):
        norm(gaussian(compact_grid), kind, **options)


def test_inner_product_grid_mismatch(small_grid, compact_grid):
    with pytest.raises(GridMismatchError):
        inner_product(gaussian(small_grid), gaussian(compact_grid))


def test_inner_product_is_conjugate_linear_in_second_slot(small_grid):
    f, g = random_field(small_grid, 1), random_field(small_grid, 2)
    npt.assert_allclose(inner_product(f, g * 1j), -1j * inner_product(f, g), rtol=1e-12)


def test_shell_mass(small_grid):
    assert shell_mass(gaussian(small_grid)) == 0.0
    outer = sample_radial(lambda r: np.where(r > 95.0, 1.0, 0.0), small_grid)
    assert shell_mass(outer) == pytest.approx(0.5 * norm(outer, "L2") ** 2)
