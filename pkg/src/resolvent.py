"""Radial Fourier analysis of the coupling G and limiting-absorption resolvent quantities.

Frequency integrals run on a half-step grid whose panel edges include the resonance rho0.
Principal values use the midpoint rule on the subtracted integrand (f - f(rho0))/(rho^2 - rho0^2),
an analytic tail beyond the last panel edge P, and the leading endpoint correction at P.
The integrands are even in rho, so the midpoint rule converges spectrally.
"""
import logging
import math
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import quad

from .config import RHO_DENSITY, RHO_MAX, SHELL_DELTA, SHELL_TOL
from .errors import ShellConditionError
from .models import DecayProbe, FgrReport, RadialField, RadialGrid, SpectralField, SpectralProfile
from .radial import free_flow_values, from_spectral, to_spectral

logger = logging.getLogger(__name__)

# 4*pi / (2*pi)^3: radial volume element in frequency space
FREQ_MEASURE = 1 / (2 * np.pi ** 2)
# Matrix blocks stay below this many entries
BLOCK_ENTRIES = 4_000_000
# Extra physical length resolved by the frequency grid beyond the largest radius
ALIAS_MARGIN = 10.0


def resonant_grid(
    rho0: float = 1.0,
    rho_max: float = RHO_MAX,
    density: float = RHO_DENSITY,
    r_extent: float = 0.0,
) -> Tuple[np.ndarray, float]:
    """Half-step frequency grid with rho0 on a panel edge.

    Args:
        rho0: Resonant frequency, placed at an even index
        rho_max: Upper end of the quadrature (rounded up to a panel edge)
        density: Minimum number of panels per unit frequency
        r_extent: Largest radius at which sin(rho*r) must be resolved

    Returns:
        (rho, spacing) with rho[k] = k*spacing/2.
    """
    if not rho0 > 0:
        raise ValueError(f"resonance must be positive, got rho0={rho0}")
    if not rho_max > rho0:
        raise ValueError(f"frequency grid up to {rho_max} does not reach the resonance rho0={rho0}")
    spacing = 1.0 / density
    if r_extent > 0:
        spacing = min(spacing, np.pi / (r_extent + ALIAS_MARGIN))
    spacing = rho0 / max(1, math.ceil(rho0 / spacing - 1e-9))
    panels = math.ceil(rho_max / spacing - 1e-9)
    return 0.5 * spacing * np.arange(2 * panels + 1), spacing


def _physical_evaluator(G: RadialField) -> Callable[[np.ndarray], np.ndarray]:
    grid = G.grid
    weighted = grid.h * G.values * grid.r
    at_zero = 4 * np.pi * grid.h * np.sum(G.values * grid.r ** 2)
    block = max(1, BLOCK_ENTRIES // grid.n)

    def evaluate(rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        flat = rho.ravel()
        out = np.empty(flat.shape, dtype=complex)
        for start in range(0, flat.size, block):
            part = flat[start:start + block]
            sums = np.sin(np.outer(part, grid.r)) @ weighted
            positive = part > 0
            safe = np.where(positive, part, 1.0)
            out[start:start + block] = np.where(positive, 4 * np.pi * sums / safe, at_zero)
        return out.reshape(rho.shape)

    return evaluate


def hat_transform(
    G: RadialField,
    rho0: float = 1.0,
    rho_max: float = RHO_MAX,
    density: float = RHO_DENSITY,
) -> SpectralProfile:
    """Radial Fourier transform (4 pi / rho) * integral of G(r) r sin(rho r) dr by quadrature."""
    rho, spacing = resonant_grid(rho0, rho_max, density)
    evaluator = _physical_evaluator(G)
    logger.debug(f"hat transform on {rho.size} frequencies, spacing {spacing:.3e}")
    return SpectralProfile(rho, evaluator(rho), "physical", rho0, spacing, evaluator)


def spectral_profile(
    func: Callable[[np.ndarray], np.ndarray],
    rho0: float = 1.0,
    rho_max: float = RHO_MAX,
    density: float = RHO_DENSITY,
) -> SpectralProfile:
    """Profile specified directly in frequency space."""
    rho, spacing = resonant_grid(rho0, rho_max, density)

    def evaluate(values: np.ndarray) -> np.ndarray:
        return np.asarray(func(np.asarray(values, dtype=float)), dtype=complex)

    return SpectralProfile(rho, evaluate(rho), "spectral", rho0, spacing, evaluate)


def smooth_bump(center: float, half_width: float, amplitude: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    """C-infinity bump amplitude * exp(1 - 1/(1 - x^2)), x = (rho - center)/half_width."""
    if half_width <= 0:
        raise ValueError(f"bump half width must be positive, got {half_width}")

    def bump(rho: np.ndarray) -> np.ndarray:
        x = (np.asarray(rho, dtype=float) - center) / half_width
        inside = np.abs(x) < 1
        safe = np.where(inside, x, 0.0)
        return np.where(inside, amplitude * np.exp(1 - 1 / (1 - safe ** 2)), 0.0)

    return bump


def gaussian_hat(rho: np.ndarray, width: float = 1.0, amplitude: float = 1.0) -> np.ndarray:
    """Transform of amplitude * exp(-r^2 / (2 width^2))."""
    return amplitude * (2 * np.pi) ** 1.5 * width ** 3 * np.exp(-(width * np.asarray(rho)) ** 2 / 2)


def field_from_profile(func: Callable[[np.ndarray], np.ndarray], grid: RadialGrid) -> RadialField:
    """Physical field whose sine coefficients sample the given transform.

    c_k = rho_k * Ghat(rho_k) / sqrt(2 pi r_max), so coefficients vanish wherever Ghat does.
    """
    coeffs = grid.rho * np.asarray(func(grid.rho), dtype=complex) / np.sqrt(2 * np.pi * grid.r_max)
    return from_spectral(SpectralField(grid, coeffs))


def _require_unit_resonance(profile: SpectralProfile):
    if abs(profile.rho0 - 1.0) > 1e-12:
        raise ValueError(f"profile grid is built around rho0={profile.rho0}, not the resonant shell rho=1")
    if profile.rho_max <= 1.0:
        raise ValueError(f"profile grid up to {profile.rho_max} does not cover rho=1")


def _pv_constant(rho_mid: np.ndarray, rho0: float, spacing: float) -> float:
    """Coefficient of f(rho0) in the subtracted principal value: midpoint sum, endpoint and tail."""
    p = rho_mid[-1] + spacing / 2
    midpoint = -spacing * np.sum(1 / (rho_mid ** 2 - rho0 ** 2))
    endpoint = spacing ** 2 * p / (12 * (p ** 2 - rho0 ** 2) ** 2)
    tail = -np.log((p + rho0) / (p - rho0)) / (2 * rho0)
    return float(midpoint + endpoint + tail)


def fgr_gamma(profile: SpectralProfile) -> float:
    """Gamma from the resonant-sphere formula: (2 pi)^-3 * pi * (1/2) * integral over |eta|=1 of |Ghat|^2."""
    _require_unit_resonance(profile)
    sphere_integral = 4 * np.pi * abs(profile.resonant_value) ** 2
    return float((2 * np.pi) ** -3 * np.pi * 0.5 * sphere_integral)


def beta_resolvent(profile: SpectralProfile) -> complex:
    """beta = (G|R_+(1)G) by principal-value quadrature plus the delta-shell term.

    With (f|g) = integral f conj(g), beta carries -i*pi*delta, so Im beta <= 0.
    """
    _require_unit_resonance(profile)
    rho0 = profile.rho0
    rho_mid, hat_mid = profile.midpoints
    f_mid = FREQ_MEASURE * np.abs(hat_mid) ** 2 * rho_mid ** 2
    f0 = FREQ_MEASURE * abs(profile.resonant_value) ** 2 * rho0 ** 2
    pv = profile.spacing * np.sum(f_mid / (rho_mid ** 2 - rho0 ** 2)) + f0 * _pv_constant(rho_mid, rho0, profile.spacing)
    return complex(pv, -np.pi * f0 / (2 * rho0))


def regularized_gamma(profile: SpectralProfile, eps: float, cut: float = 0.5) -> float:
    """Gamma(eps) = -Im (G|(-Laplacian - 1 - i eps)^{-1} G) by adaptive quadrature.

    Within |rho^2 - 1| < cut the substitution rho^2 - 1 = eps*tan(theta) turns the
    Lorentzian into d theta. Gamma(eps) -> Gamma as eps -> 0.
    """
    _require_unit_resonance(profile)
    if not 0 < cut < 1:
        raise ValueError(f"cut must lie in (0, 1), got {cut}")
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")

    def density(rho: float) -> float:
        return FREQ_MEASURE * abs(complex(profile.at(rho)[0])) ** 2 * rho ** 2

    def near(theta: float) -> float:
        rho = math.sqrt(1 + eps * math.tan(theta))
        return density(rho) / (2 * rho)

    def far(rho: float) -> float:
        x = rho ** 2 - 1
        return density(rho) * eps / (x ** 2 + eps ** 2)

    options = dict(limit=400, epsabs=1e-15, epsrel=1e-13)
    bound = math.atan(cut / eps)
    inner, _ = quad(near, -bound, bound, **options)
    lower, _ = quad(far, 0.0, math.sqrt(1 - cut), **options)
    upper, _ = quad(far, math.sqrt(1 + cut), profile.rho_max, **options)
    return float(inner + lower + upper)


def extrapolated_gamma(profile: SpectralProfile, coarse: float = 1e-3, fine: float = 1e-4) -> float:
    """Linear eps -> 0 extrapolation of Gamma(eps) from two regularizations."""
    if not 0 < fine < coarse:
        raise ValueError(f"need 0 < fine < coarse, got fine={fine}, coarse={coarse}")
    g_coarse, g_fine = regularized_gamma(profile, coarse), regularized_gamma(profile, fine)
    logger.debug(f"Gamma(eps={coarse:g}) = {g_coarse:.12g}, Gamma(eps={fine:g}) = {g_fine:.12g}")
    return g_fine + (g_fine - g_coarse) * fine / (coarse - fine)


def fgr_condition_check(
    profile: SpectralProfile,
    tol: float = SHELL_TOL,
    delta: float = SHELL_DELTA,
) -> Tuple[bool, float]:
    """Whether |Ghat(1)| > tol, plus min |Ghat| over the shell [1 - delta, 1 + delta]."""
    _require_unit_resonance(profile)
    shell = np.abs(profile.rho - 1.0) <= delta
    min_abs = float(np.min(np.abs(profile.values[shell])))
    return abs(profile.resonant_value) > tol, min_abs


def fgr_report(profile: SpectralProfile, tol: float = SHELL_TOL, delta: float = SHELL_DELTA) -> FgrReport:
    beta = beta_resolvent(profile)
    holds, min_abs = fgr_condition_check(profile, tol, delta)
    hat1 = abs(profile.resonant_value)
    report = FgrReport(
        beta=beta,
        gamma=-beta.imag,
        gamma_sphere=fgr_gamma(profile),
        sphere_integral=4 * np.pi * hat1 ** 2,
        fgr_holds=holds,
        min_abs_on_shell=min_abs,
        hat_at_resonance=hat1,
    )
    logger.info(f"beta = {beta.real:.6g} {beta.imag:+.6g}i, Gamma = {report.gamma:.6g}, FGR holds: {holds}")
    return report


def _regular_inverse(G: RadialField, omega: float, delta: float, tol: float) -> RadialField:
    grid = G.grid
    c = to_spectral(G).coeffs
    denominator = grid.rho ** 2 - 1 - omega
    if 1 + omega > 0:
        rho0 = math.sqrt(1 + omega)
        shell = np.abs(grid.rho - rho0) <= delta
        hat_on_shell = np.abs(c[shell]) * np.sqrt(2 * np.pi * grid.r_max) / grid.rho[shell]
        if hat_on_shell.size and (np.max(hat_on_shell) > tol or np.any(denominator[shell] == 0)):
            raise ShellConditionError(
                f"Ghat does not vanish near rho^2 = 1 + omega (max {np.max(hat_on_shell):.3e} > tol {tol:.1e})",
                float(np.min(hat_on_shell)),
            )
        c = np.where(shell, 0.0, c)
        denominator = np.where(shell, 1.0, denominator)
    return from_spectral(SpectralField(grid, c / denominator))


def _outgoing_nodal(
    grid: RadialGrid,
    evaluator: Callable[[np.ndarray], np.ndarray],
    rho0: float,
    rho_max: float,
    density: float,
) -> np.ndarray:
    rho, spacing = resonant_grid(rho0, rho_max, density, r_extent=grid.r_max)
    hat = evaluator(rho)
    rho_mid, hat_mid = rho[1::2], hat[1::2]
    hat0 = hat[int(round(2 * rho0 / spacing))]
    weights = hat_mid * rho_mid / (rho_mid ** 2 - rho0 ** 2)
    constant = _pv_constant(rho_mid, rho0, spacing)
    block = max(1, BLOCK_ENTRIES // rho_mid.size)
    logger.debug(f"outgoing resolvent: {rho_mid.size} midpoints, spacing {spacing:.3e}, blocks of {block} nodes")

    out = np.empty(grid.n, dtype=complex)
    for start in range(0, grid.n, block):
        r = grid.r[start:start + block]
        f0 = hat0 * rho0 * np.sin(rho0 * r)
        pv = spacing * (np.sin(np.outer(r, rho_mid)) @ weights) + f0 * constant
        out[start:start + block] = (pv + 1j * np.pi * f0 / (2 * rho0)) / (2 * np.pi ** 2 * r)
    return out


def resolvent_apply(
    G: RadialField,
    omega: float,
    mode: str,
    profile: Optional[SpectralProfile] = None,
    rho_max: float = RHO_MAX,
    density: float = RHO_DENSITY,
    delta: float = SHELL_DELTA,
    tol: float = SHELL_TOL,
) -> RadialField:
    """Apply (-Laplacian - 1 - omega)^{-1} to G.

    Args:
        G: Field to invert against
        omega: Spectral shift; the singular shell sits at rho^2 = 1 + omega
        mode: 'regular' (exact discrete inverse, requires Ghat to vanish on the shell) or
            'limiting_absorption' (principal value plus i*pi*delta, outgoing boundary value)
        profile: Transform of G used in limiting-absorption mode; computed from G when absent
        rho_max: Frequency cutoff of the limiting-absorption quadrature
        density: Minimum frequency panels per unit
        delta: Half width of the shell checked in regular mode
        tol: Largest |Ghat| tolerated on that shell

    Returns:
        The resolvent applied to G, complex in limiting-absorption mode.
    """
    if mode == "regular":
        return _regular_inverse(G, omega, delta, tol)
    if mode != "limiting_absorption":
        raise ValueError(f"unknown resolvent mode '{mode}'")
    if not 1 + omega > 0:
        raise ValueError(f"limiting absorption needs 1 + omega > 0, got omega={omega}")
    evaluator = profile.evaluator if profile is not None else _physical_evaluator(G)
    if profile is not None:
        rho_max = max(rho_max, profile.rho_max)
        density = max(density, 1.0 / profile.spacing)
    return RadialField(G.grid, _outgoing_nodal(G.grid, evaluator, math.sqrt(1 + omega), rho_max, density))


def far_field_taper(grid: RadialGrid, start: float) -> np.ndarray:
    """Raised-cosine window: 1 below start*r_max, 0 beyond (1 + start)/2 * r_max."""
    if not 0 < start < 1:
        raise ValueError(f"taper start must lie in (0, 1), got {start}")
    a, b = start * grid.r_max, 0.5 * (1 + start) * grid.r_max
    ramp = np.clip((grid.r - a) / (b - a), 0.0, 1.0)
    return 0.5 * (1 + np.cos(np.pi * ramp))


def dispersive_decay_probe(
    v: RadialField,
    sigma: float,
    t_grid: Sequence[float],
    taper: float = 0.5,
    rho_max: float = RHO_MAX,
    density: float = RHO_DENSITY,
) -> DecayProbe:
    """Weighted norms ||<x>^-sigma e^{it Laplacian} R_+(1) v|| and their log-log slope against <t>.

    The outgoing tail of R_+(1)v is cut smoothly before the domain edge so the
    truncated wave does not reflect back into the weighted window.
    """
    times = np.asarray(t_grid, dtype=float)
    if times.size < 4:
        raise ValueError(f"decay probe needs at least 4 times, got {times.size}")
    if np.any(times <= 0) or np.any(np.diff(times) <= 0):
        raise ValueError("decay probe times must be positive and increasing")

    grid = v.grid
    outgoing = resolvent_apply(v, 0.0, "limiting_absorption", rho_max=rho_max, density=density)
    tapered = RadialField(grid, outgoing.values * far_field_taper(grid, taper))
    values = free_flow_values(to_spectral(tapered), times)
    weight = grid.weights * (1 + grid.r ** 2) ** (-sigma)
    samples = np.sqrt(np.sum(weight * np.abs(values) ** 2, axis=1))

    if not np.all(samples > 0):
        return DecayProbe(times, samples, math.nan, True)
    exponent = float(np.polyfit(np.log(np.sqrt(1 + times ** 2)), np.log(samples), 1)[0])
    logger.info(f"decay probe: fitted exponent {exponent:.3f} over t in [{times[0]:g}, {times[-1]:g}]")
    return DecayProbe(times, samples, exponent, False)
