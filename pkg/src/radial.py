"""Radial fields on R^3: sine-transform representation, free propagator, inner products and norms.

For radial u the substitution w = r*u turns -Laplacian into -d^2/dr^2 on (0, r_max) with
Dirichlet ends, so the type-I discrete sine transform diagonalizes it with eigenvalues rho_k^2.
Coefficients are normalized as c = sqrt(4*pi*h) * DST(w) with the orthonormal DST-I, which
makes sum |c_k|^2 equal to the quadrature L^2 norm 4*pi*h*sum |u_k|^2 r_k^2 exactly.
"""
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import fft

from .config import SHELL_FRACTION
from .errors import GridMismatchError
from .models import RadialField, RadialGrid, SpectralField

NORM_KINDS = ("L2", "L4", "L6", "H", "L2sigma")


def make_grid(n: int, r_max: float) -> RadialGrid:
    """Create a radial grid with n interior nodes on (0, r_max)."""
    if int(n) != n:
        raise ValueError(f"n must be an integer, got {n}")
    return RadialGrid(int(n), float(r_max))


def sample_radial(profile: Callable[[np.ndarray], np.ndarray], grid: RadialGrid) -> RadialField:
    """Sample a radial profile on the grid nodes (the origin is never evaluated)."""
    values = np.broadcast_to(np.asarray(profile(grid.r), dtype=complex), (grid.n,))
    return RadialField(grid, values.copy())


def _dst(x: np.ndarray) -> np.ndarray:
    # real and imaginary parts separately; the orthonormal DST-I is its own inverse
    return fft.dst(x.real, type=1, norm="ortho", axis=-1) + 1j * fft.dst(x.imag, type=1, norm="ortho", axis=-1)


def _same_grid(*fields) -> RadialGrid:
    grid = fields[0].grid
    for other in fields[1:]:
        if other.grid != grid:
            raise GridMismatchError(f"grid mismatch: {grid} vs {other.grid}")
    return grid


def to_spectral(u: RadialField) -> SpectralField:
    grid = u.grid
    return SpectralField(grid, np.sqrt(4 * np.pi * grid.h) * _dst(grid.r * u.values))


def from_spectral(c: SpectralField) -> RadialField:
    grid = c.grid
    return RadialField(grid, _dst(c.coeffs) / np.sqrt(4 * np.pi * grid.h) / grid.r)


def spectral_values(c: SpectralField, coeff_rows: np.ndarray) -> np.ndarray:
    """Nodal values for a stack of coefficient rows (shape (m, n)) on the grid of c."""
    grid = c.grid
    return _dst(coeff_rows) / np.sqrt(4 * np.pi * grid.h) / grid.r


def propagate_values(values: np.ndarray, grid: RadialGrid, dt: float) -> np.ndarray:
    """Free flow on raw nodal values, without field validation."""
    scale = np.sqrt(4 * np.pi * grid.h)
    c = scale * _dst(grid.r * values)
    return _dst(c * np.exp(-1j * grid.rho ** 2 * dt)) / scale / grid.r


def free_propagate(u: RadialField, dt: float) -> RadialField:
    """Apply e^{i dt Laplacian}: multiply coefficients by e^{-i rho^2 dt}."""
    if not np.isfinite(dt):
        raise ValueError(f"free propagation needs a finite time, got {dt}")
    if dt == 0:
        return u
    return RadialField(u.grid, propagate_values(u.values, u.grid, dt))


def free_flow_values(c: SpectralField, times: Sequence[float]) -> np.ndarray:
    """Nodal values of e^{i t Laplacian} applied to c for every t; shape (len(times), n)."""
    times = np.asarray(times, dtype=float)
    phases = np.exp(-1j * np.outer(times, c.grid.rho ** 2))
    return spectral_values(c, phases * c.coeffs)


def inner_product(f: RadialField, g: RadialField) -> complex:
    """(f|g) = integral of f * conj(g) over R^3."""
    grid = _same_grid(f, g)
    return complex(np.sum(grid.weights * f.values * g.values.conj()))


def norm(u: RadialField, kind: str, theta: Optional[float] = None, sigma: Optional[float] = None) -> float:
    """Norms of a radial field.

    Args:
        u: Field to measure
        kind: One of 'L2', 'L4', 'L6', 'H' (Sobolev H^theta), 'L2sigma' (<x>^sigma weighted L^2)
        theta: Sobolev order in [0, 1], required for 'H'
        sigma: Weight exponent for 'L2sigma'; negative values give L^{2,-|sigma|}

    Returns:
        The norm value.
    """
    grid = u.grid
    if kind in ("L2", "L4", "L6"):
        p = int(kind[1])
        return float(np.sum(grid.weights * np.abs(u.values) ** p) ** (1 / p))
    if kind == "H":
        if theta is None or not 0 <= theta <= 1:
            raise ValueError(f"Sobolev order must lie in [0, 1], got {theta}")
        c = to_spectral(u).coeffs
        return float(np.sqrt(np.sum((1 + grid.rho ** 2) ** theta * np.abs(c) ** 2)))
    if kind == "L2sigma":
        if sigma is None:
            raise ValueError("weighted L2 norm needs sigma")
        weight = (1 + grid.r ** 2) ** sigma
        return float(np.sqrt(np.sum(grid.weights * weight * np.abs(u.values) ** 2)))
    raise ValueError(f"unknown norm kind '{kind}', expected one of {NORM_KINDS}")


def lp_norms(values: np.ndarray, grid: RadialGrid, p: int) -> np.ndarray:
    """Row-wise L^p norms of a stack of nodal values."""
    return np.sum(grid.weights * np.abs(values) ** p, axis=-1) ** (1 / p)


def neg_laplacian(u: RadialField) -> RadialField:
    c = to_spectral(u)
    return from_spectral(SpectralField(u.grid, u.grid.rho ** 2 * c.coeffs))


def gradient_norm_sq(u: RadialField) -> float:
    """||grad u||^2 = sum rho_k^2 |c_k|^2."""
    c = to_spectral(u)
    return float(np.sum(u.grid.rho ** 2 * np.abs(c.coeffs) ** 2))


def radial_derivative(u: RadialField) -> RadialField:
    """Spectral d/dr of u.

    w' = sum c_k rho_k cos(rho_k r) is a type-I cosine transform of the zero-padded
    coefficients, and u' = (w' - u) / r.
    """
    grid = u.grid
    c = to_spectral(u).coeffs
    padded = np.zeros(grid.n + 2, dtype=complex)
    padded[1:-1] = c * grid.rho
    cosine = fft.dct(padded.real, type=1) + 1j * fft.dct(padded.imag, type=1)
    scale = np.sqrt(2 / (grid.n + 1)) / np.sqrt(4 * np.pi * grid.h)
    w_prime = 0.5 * scale * cosine[1:-1]
    return RadialField(grid, (w_prime - u.values) / grid.r)


def shell_mass(u: RadialField, fraction: float = SHELL_FRACTION) -> float:
    """Half the squared L^2 norm carried by the outer fraction of the domain."""
    grid = u.grid
    outer = grid.r > (1 - fraction) * grid.r_max
    return float(0.5 * np.sum(grid.weights[outer] * np.abs(u.values[outer]) ** 2))


def gaussian(grid: RadialGrid, width: float = 1.0, amplitude: complex = 1.0) -> RadialField:
    return sample_radial(lambda r: amplitude * np.exp(-r ** 2 / (2 * width ** 2)), grid)


def free_gaussian(grid: RadialGrid, t: float, width: float = 1.0, amplitude: complex = 1.0) -> RadialField:
    """Closed-form free evolution of amplitude * exp(-r^2 / (2 width^2)) at time t."""
    a = width ** 2
    spread = a + 2j * t
    return sample_radial(lambda r: amplitude * (a / spread) ** 1.5 * np.exp(-r ** 2 / (2 * spread)), grid)
