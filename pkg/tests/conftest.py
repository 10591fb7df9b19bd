"""Shared grids, couplings and trajectories."""
import pytest

from src.dynamics import evolve
from src.models import ModelConfig, RadialField, SystemState
from src.radial import gaussian, make_grid
from src.resolvent import field_from_profile, smooth_bump


@pytest.fixture(scope="session")
def small_grid():
    return make_grid(511, 100.0)


@pytest.fixture(scope="session")
def compact_grid():
    """Short domain for quadrature checks of localized fields."""
    return make_grid(1023, 40.0)


@pytest.fixture(scope="session")
def gaussian_coupling(small_grid):
    return gaussian(small_grid, 1.0)


@pytest.fixture(scope="session")
def bump_profile():
    return smooth_bump(2.0, 0.5)


@pytest.fixture(scope="session")
def bump_coupling(small_grid, bump_profile):
    return field_from_profile(bump_profile, small_grid)


@pytest.fixture(scope="module")
def coupled_trajectory(small_grid, gaussian_coupling):
    """Cubic run with an active oscillator; fields every 1.0 up to t = 20."""
    config = ModelConfig(
        grid=small_grid,
        G=gaussian_coupling,
        dt=0.01,
        t_end=20.0,
        checkpoint_stride=10,
        field_stride=100,
    )
    init = SystemState(gaussian(small_grid, 1.0, 0.1), 0.3 + 0.0j)
    return evolve(init, config)


@pytest.fixture(scope="module")
def free_trajectory(small_grid):
    """Linear Schroedinger flow of a Gaussian: no coupling, no oscillator, no cubic term."""
    config = ModelConfig(
        grid=small_grid,
        G=RadialField.zeros(small_grid),
        dt=0.05,
        t_end=20.0,
        checkpoint_stride=20,
        field_stride=20,
        cubic_on=False,
    )
    return evolve(SystemState(gaussian(small_grid, 1.0), 0j), config)


@pytest.fixture
def write_config(tmp_path):
    def write(text: str, name: str = "experiment.toml"):
        path = tmp_path / name
        path.write_text(text)
        return path
    return write

