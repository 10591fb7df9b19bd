"""Dynamical identities and space-time functionals evaluated on trajectories."""
import logging
import math
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid

from .config import MAX_CHECKPOINT_SPACING, RHO_DENSITY, RHO_MAX
from .errors import CoverageError
from .models import (
    DampingSeries,
    DuhamelIntegral,
    FgrContext,
    NakanishiReport,
    RadialField,
    RadialGrid,
    ScatterReport,
    SpectralField,
    SpectralProfile,
    SystemState,
    Trajectory,
    VirialSeries,
)
from .radial import (
    free_propagate,
    from_spectral,
    gradient_norm_sq,
    inner_product,
    lp_norms,
    norm,
    radial_derivative,
    spectral_values,
    to_spectral,
)
from .resolvent import resolvent_apply

logger = logging.getLogger(__name__)

# Tolerance for matching requested times against stored checkpoint times
TIME_EPS = 1e-9


def fgr_context(
    G: RadialField,
    profile: Optional[SpectralProfile] = None,
    rho_max: float = RHO_MAX,
    density: float = RHO_DENSITY,
) -> FgrContext:
    """Outgoing resolvent R_+(1)G on the grid and beta = (G|R_+(1)G) from it."""
    outgoing = resolvent_apply(G, 0.0, "limiting_absorption", profile=profile, rho_max=rho_max, density=density)
    beta = inner_product(G, outgoing)
    logger.debug(f"grid beta = {beta.real:.8g} {beta.imag:+.8g}i")
    return FgrContext(G, outgoing, beta)


def pullback(traj: Trajectory, t: float) -> RadialField:
    """Profile e^{-it Laplacian} xi(t) at a stored field checkpoint."""
    state = traj.state_at(t)
    return free_propagate(state.xi, -state.t)


def _pullback_coeffs(traj: Trajectory) -> np.ndarray:
    rho2 = traj.config.grid.rho ** 2
    return np.array([to_spectral(s.xi).coeffs * np.exp(1j * rho2 * s.t) for s in traj.states])


def scattering_defect(traj: Trajectory, tolerance: float) -> ScatterReport:
    """Cauchy defect of the pullbacks in H^1 and the oscillator tail.

    The verdict is taken at the midpoint of the stored window.
    """
    if len(traj.states) < 4:
        raise CoverageError(f"scattering report needs at least 4 field checkpoints, got {len(traj.states)}")
    grid = traj.config.grid
    times = traj.field_times
    coeffs = _pullback_coeffs(traj)
    weight = 1 + grid.rho ** 2

    count = len(times)
    distance = np.zeros((count, count))
    for j in range(count):
        diff = coeffs[j + 1:] - coeffs[j]
        distance[j, j + 1:] = np.sqrt(np.sum(weight * np.abs(diff) ** 2, axis=1))
    distance = np.maximum(distance, distance.T)

    defect = np.zeros(count)
    running = 0.0
    for i in range(count - 1, -1, -1):
        running = max(running, float(np.max(distance[i, i:])))
        defect[i] = running

    record_times = traj.times
    z_abs = np.abs(traj.z_values)
    z_tail = np.array([np.max(z_abs[record_times >= t - TIME_EPS]) for t in times])

    verdict_time = times[0] + 0.5 * (times[-1] - times[0])
    index = int(np.searchsorted(times, verdict_time - TIME_EPS))
    statistic = float(defect[index] + z_tail[index])
    pullbacks = [from_spectral(SpectralField(grid, row)) for row in coeffs]
    logger.info(f"scattering statistic at t={times[index]:.2f}: {statistic:.3e} (tolerance {tolerance:.1e})")
    return ScatterReport(
        times=times,
        pullbacks=pullbacks,
        cauchy_defect=defect,
        z_sup_tail=z_tail,
        verdict_time=float(times[index]),
        statistic=statistic,
        tolerance=tolerance,
        verdict=statistic < tolerance,
    )


def g_decompose(state: SystemState, context: FgrContext) -> Tuple[RadialField, RadialField]:
    """Split xi = Y + g with Y = -|z|^2 z R_+(1)G."""
    z = state.z
    Y = context.outgoing * (-abs(z) ** 2 * z)
    return Y, state.xi - Y


def _require_density(traj: Trajectory):
    if len(traj.records) < 3:
        raise ValueError("identity monitors need at least 3 checkpoints")
    spacing = float(np.max(np.diff(traj.times)))
    if spacing > MAX_CHECKPOINT_SPACING + TIME_EPS:
        raise ValueError(
            f"checkpoints too sparse for centered differences: spacing {spacing:g} > {MAX_CHECKPOINT_SPACING}"
        )


def _g_projection(traj: Trajectory, context: FgrContext) -> np.ndarray:
    # (G|g) = (G|xi) - (G|Y) = (G|xi) + |z|^2 conj(z) beta
    z = traj.z_values
    return traj.g_xi_values + np.abs(z) ** 2 * z.conj() * context.beta


def damping_monitor(traj: Trajectory, context: FgrContext) -> DampingSeries:
    """(1/2) d/dt|z|^2 = -(Gamma/2)|z|^6 + Im((1/2)|z|^2 z (G|g) + |z|^2 conj(z) conj((G|g)))."""
    _require_density(traj)
    t = traj.times
    z = traj.z_values
    y = np.abs(z) ** 2
    projection = _g_projection(traj, context)
    return DampingSeries(
        times=t,
        lhs=0.5 * np.gradient(y, t),
        fgr_term=-0.5 * context.gamma * y ** 3,
        remainder=np.imag(0.5 * y * z * projection + y * z.conj() * projection.conj()),
        degree=2,
    )


def z_power_monitor(traj: Trajectory, context: FgrContext) -> DampingSeries:
    """(1/8) d/dt|z|^8 = -(Gamma/2)|z|^12 + Im((1/2) z|z|^8 (G|g) + |z|^8 conj(z) conj((G|g)))."""
    _require_density(traj)
    t = traj.times
    z = traj.z_values
    y4 = np.abs(z) ** 8
    projection = _g_projection(traj, context)
    return DampingSeries(
        times=t,
        lhs=np.gradient(y4, t) / 8,
        fgr_term=-0.5 * context.gamma * np.abs(z) ** 12,
        remainder=np.imag(0.5 * z * y4 * projection + y4 * z.conj() * projection.conj()),
        degree=8,
    )


def reduced_envelope(y0: float, gamma: float, times: np.ndarray) -> np.ndarray:
    """Solution y0 (1 + 2 Gamma y0^2 t)^{-1/2} of y' = -Gamma y^3 for y = |z|^2."""
    times = np.asarray(times, dtype=float)
    return y0 / np.sqrt(1 + 2 * gamma * y0 ** 2 * (times - times[0]))


def envelope_report(traj: Trajectory, gamma: float) -> Dict[str, float]:
    """Deviation of |z|^2 from the reduced law and the late-time log-log slope of |z|."""
    t = traj.times
    y = np.abs(traj.z_values) ** 2
    predicted = reduced_envelope(y[0], gamma, t)
    late = (t >= t[0] + 0.5 * (t[-1] - t[0])) & (t > 0)
    slope = math.nan
    if np.count_nonzero(late) >= 2 and np.all(y[late] > 0):
        slope = float(np.polyfit(np.log(t[late]), 0.5 * np.log(y[late]), 1)[0])
    return {
        "envelope_deviation": float(np.max(np.abs(y / predicted - 1))) if y[0] > 0 else 0.0,
        "late_slope": slope,
        "z_final": float(np.sqrt(y[-1])),
        "z_predicted": float(np.sqrt(predicted[-1])),
    }


def _window(traj: Trajectory, a: float, b: float) -> np.ndarray:
    times = traj.field_times
    inside = np.flatnonzero((times >= a - TIME_EPS) & (times <= b + TIME_EPS))
    gap = 2 * traj.field_spacing
    if inside.size == 0:
        raise CoverageError(f"no stored fields in [{a}, {b}]")
    nodes = times[inside]
    if nodes[0] - a > gap or b - nodes[-1] > gap or (nodes.size > 1 and np.max(np.diff(nodes)) > gap + TIME_EPS):
        raise CoverageError(f"stored fields do not cover [{a}, {b}] within {gap:g}")
    return inside


def strichartz_st(traj: Trajectory, a: float, b: float) -> float:
    """(integral over [a, b] of ||xi(t)||_6^4 dt)^{1/4}, trapezoid over stored fields."""
    inside = _window(traj, a, b)
    times = traj.field_times[inside]
    if inside.size < 2:
        return 0.0
    l6 = np.array([norm(traj.states[i].xi, "L6") for i in inside])
    return float(trapezoid(l6 ** 4, times) ** 0.25)


def _linear_weights(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    # integral over [0, 1] of e^{x s} and s e^{x s}
    small = np.abs(x) < 1e-2
    safe = np.where(small, 1.0, x)
    ex = np.exp(safe)
    i0 = np.where(small, 1 + x / 2 + x ** 2 / 6 + x ** 3 / 24 + x ** 4 / 120 + x ** 5 / 720, (ex - 1) / safe)
    i1 = np.where(
        small,
        0.5 + x / 3 + x ** 2 / 8 + x ** 3 / 30 + x ** 4 / 144 + x ** 5 / 840,
        (ex * (safe - 1) + 1) / safe ** 2,
    )
    return i0, i1


def _source(state: SystemState, G: RadialField, cubic_on: bool) -> RadialField:
    z = state.z
    values = abs(z) ** 2 * z * G.values
    if cubic_on:
        values = values + np.abs(state.xi.values) ** 2 * state.xi.values
    return RadialField(G.grid, values)


def duhamel_accumulate(traj: Trajectory, t0: float, t1: float) -> DuhamelIntegral:
    """-i * integral over [t0, t1] of e^{i(t1-s) Laplacian} f(s) ds, f = |xi|^2 xi + |z|^2 z G.

    The source is demodulated by the oscillator frequency (q = e^{is} fhat), interpolated
    linearly between stored fields, and the remaining phases are integrated exactly.
    """
    config = traj.config
    grid = config.grid
    inside = _window(traj, t0, t1)
    times = traj.field_times[inside]
    rho2 = grid.rho ** 2
    sources = np.array([to_spectral(_source(traj.states[i], config.G, config.cubic_on)).coeffs for i in inside])

    if inside.size == 1:
        coeffs = -1j * (t1 - t0) * np.exp(-1j * rho2 * (t1 - times[0])) * sources[0]
        logger.warning(f"Duhamel integral over [{t0}, {t1}] uses a single stored field")
        return DuhamelIntegral(from_spectral(SpectralField(grid, coeffs)), 1, True)

    if abs(times[0] - t0) > TIME_EPS or abs(times[-1] - t1) > TIME_EPS:
        raise CoverageError(f"Duhamel integral needs stored fields at both ends of [{t0}, {t1}]")

    lam = rho2 - 1
    demodulated = sources * np.exp(1j * times)[:, None]
    total = np.zeros(grid.n, dtype=complex)
    for k in range(times.size - 1):
        a, b = times[k], times[k + 1]
        width = b - a
        i0, i1 = _linear_weights(-1j * lam * width)
        total += width * np.exp(-1j * lam * (t1 - b)) * (demodulated[k] * i1 + demodulated[k + 1] * (i0 - i1))
    coeffs = -1j * np.exp(-1j * t1) * total
    return DuhamelIntegral(from_spectral(SpectralField(grid, coeffs)), int(times.size), False)


class SeminormTable:
    """Space-time norms ||u[T]_> - u[S]||_{st(S, horizon)} for pairs of stored fields.

    Times after the last stored field only see free flows and are filled in by extending
    the stored grid with the field spacing up to the horizon.
    """

    def __init__(self, traj: Trajectory, horizon: float):
        self.grid: RadialGrid = traj.config.grid
        self.field_times = traj.field_times
        if horizon <= self.field_times[0]:
            raise ValueError(f"horizon {horizon} precedes the first stored field")
        self.horizon = float(horizon)
        self.pullbacks = _pullback_coeffs(traj)

        stored = self.field_times[self.field_times <= horizon + TIME_EPS]
        extension: List[float] = []
        if horizon > stored[-1] + TIME_EPS:
            spacing = traj.field_spacing
            extension = list(np.arange(stored[-1] + spacing, horizon - TIME_EPS, spacing)) + [horizon]
        self.times = np.concatenate([stored, np.array(extension, dtype=float)])
        self.stored_count = stored.size
        self._series: Dict[Tuple[int, int], np.ndarray] = {}

    def _l6(self, coeff_rows: np.ndarray) -> np.ndarray:
        if coeff_rows.shape[0] == 0:
            return np.zeros(0)
        values = spectral_values(SpectralField(self.grid, coeff_rows[0]), coeff_rows)
        return lp_norms(values, self.grid, 6)

    def series(self, i: int, j: int) -> np.ndarray:
        """||D(t)||_6 on self.times[i:] for S = t_i < T = t_j."""
        key = (i, j)
        if key not in self._series:
            rho2 = self.grid.rho ** 2
            before = self.times[i:j + 1]
            diffs = self.pullbacks[i:j + 1] - self.pullbacks[i]
            head = self._l6(diffs * np.exp(-1j * np.outer(before, rho2)))
            after = self.times[j + 1:]
            free = (self.pullbacks[j] - self.pullbacks[i])[None, :] * np.exp(-1j * np.outer(after, rho2))
            self._series[key] = np.concatenate([head, self._l6(free)])
        return self._series[key]

    def pair_norm(self, i: int, j: int) -> float:
        return float(trapezoid(self.series(i, j) ** 4, self.times[i:]) ** 0.25)

    def index_of(self, t: float) -> int:
        index = int(np.argmin(np.abs(self.field_times - t)))
        if abs(self.field_times[index] - t) > TIME_EPS:
            raise CoverageError(f"no stored field at t={t}")
        return index

    def candidates(self, t0: float, t1: float) -> np.ndarray:
        if t1 > self.field_times[-1] + TIME_EPS:
            raise CoverageError(f"stored fields end at {self.field_times[-1]}, before T1={t1}")
        return np.flatnonzero((self.field_times >= t0 - TIME_EPS) & (self.field_times <= t1 + TIME_EPS))


def nakanishi_seminorm(
    traj: Trajectory,
    t0: float,
    t1: float,
    horizon: float,
    table: Optional[SeminormTable] = None,
) -> NakanishiReport:
    """sup over stored S < T in [t0, t1] of ||u[T]_> - u[S]||_{st(S, horizon)}."""
    if horizon <= t1:
        raise ValueError(f"horizon {horizon} must exceed T1={t1}")
    table = table or SeminormTable(traj, horizon)
    indices = table.candidates(t0, t1)
    best, pair, tail = 0.0, None, 0.0
    for position, i in enumerate(indices):
        for j in indices[position + 1:]:
            value = table.pair_norm(i, j)
            if value > best:
                best, pair = value, (i, j)
    if pair is not None:
        i, j = pair
        values = table.series(i, j) ** 4
        times = table.times[i:]
        total = trapezoid(values, times)
        late = times >= horizon - 0.1 * (horizon - t0) - TIME_EPS
        tail = float(trapezoid(values[late], times[late]) / total) if total > 0 and late.sum() > 1 else 0.0
        pair = (float(table.field_times[i]), float(table.field_times[j]))
    return NakanishiReport(value=best, t0=t0, t1=t1, horizon=horizon, pair=pair, tail_fraction=tail)


def nakanishi_lower_bound(
    traj: Trajectory,
    t0: float,
    t1: float,
    horizon: float,
    table: Optional[SeminormTable] = None,
) -> Tuple[float, float]:
    """(||u - u[T0]||_{st(T0, T1)}, ||u[T1] - u[T0]||_{st(T1, horizon)}) on the seminorm's grid."""
    table = table or SeminormTable(traj, horizon)
    i, j = table.index_of(t0), table.index_of(t1)
    values = table.series(i, j) ** 4
    times = table.times[i:]
    split = j - i
    first = trapezoid(values[:split + 1], times[:split + 1]) ** 0.25
    second = trapezoid(values[split:], times[split:]) ** 0.25
    return float(first), float(second)


def virial_weights(grid: RadialGrid, radius: float) -> Dict[str, np.ndarray]:
    """Cutoff a = R f(r/R) and the profile functions of the localized virial identity.

    f(s) = s on s <= 1, 3/2 on s >= 2, and 1 + x - x^3 + x^4/2 (x = s - 1) in between,
    which is C^2 with 0 <= f' <= 1.
    """
    s = grid.r / radius
    x = np.clip(s - 1, 0.0, 1.0)
    bridge = (s > 1) & (s < 2)
    flat = s <= 1
    f = np.where(flat, s, np.where(bridge, 1 + x - x ** 3 + x ** 4 / 2, 1.5))
    f1 = np.where(flat, 1.0, np.where(bridge, 1 - 3 * x ** 2 + 2 * x ** 3, 0.0))
    f2 = np.where(bridge, -6 * x + 6 * x ** 2, 0.0)
    f3 = np.where(bridge, -6 + 12 * x, 0.0)

    h = f1 + 2 * f / s
    h1 = f2 + 2 * f1 / s - 2 * f / s ** 2
    h2 = f3 + 2 * f2 / s - 4 * f1 / s ** 2 + 4 * f / s ** 3
    return {
        "a": radius * f,
        "lap_psi": h,
        "f0": 1 - f1,
        "f1": 0.25 * (h2 + 2 * h1 / s),
        "f2": 0.25 * h - 0.75,
    }


def virial_functional(state: SystemState, weights: Dict[str, np.ndarray]) -> float:
    """V = (1/2) Im integral of conj(xi) a d_r xi."""
    xi = state.xi
    dr = radial_derivative(xi).values
    return float(0.5 * np.imag(np.sum(xi.grid.weights * xi.values.conj() * weights["a"] * dr)))


def virial_rhs(
    state: SystemState,
    G: RadialField,
    radius: float,
    cubic_on: bool,
    weights: Optional[Dict[str, np.ndarray]] = None,
) -> float:
    """Closed form of dV/dt for the localized virial functional."""
    xi = state.xi
    grid = xi.grid
    weights = weights or virial_weights(grid, radius)
    u = xi.values
    dr = radial_derivative(xi).values
    w = grid.weights
    value = (
        gradient_norm_sq(xi)
        - np.sum(w * weights["f0"] * np.abs(dr) ** 2)
        - np.sum(w * weights["f1"] * np.abs(u) ** 2) / radius ** 2
    )
    if cubic_on:
        quartic = np.abs(u) ** 4
        value += 0.75 * np.sum(w * quartic) + np.sum(w * weights["f2"] * quartic)
    z = state.z
    forcing = abs(z) ** 2 * z * G.values
    value += np.real(np.sum(w * forcing.conj() * weights["a"] * dr))
    value += 0.5 * np.real(np.sum(w * weights["lap_psi"] * u.conj() * forcing))
    return float(value)


def virial_monitor(traj: Trajectory, radius: float) -> VirialSeries:
    """Finite-difference dV/dt against its closed form at every stored field."""
    grid = traj.config.grid
    if radius <= 0 or 2 * radius > grid.r_max:
        raise ValueError(f"virial cutoff 2R = {2 * radius} must lie inside r_max = {grid.r_max}")
    if len(traj.states) < 3:
        raise CoverageError("virial monitor needs at least 3 stored fields")
    times = traj.field_times
    if np.max(np.diff(times)) > MAX_CHECKPOINT_SPACING + TIME_EPS:
        raise ValueError(f"stored fields too sparse for the virial monitor (spacing > {MAX_CHECKPOINT_SPACING})")

    weights = virial_weights(grid, radius)
    G, cubic_on = traj.config.G, traj.config.cubic_on
    functional = np.array([virial_functional(s, weights) for s in traj.states])
    rhs = np.array([virial_rhs(s, G, radius, cubic_on, weights) for s in traj.states])
    return VirialSeries(times, functional, np.gradient(functional, times), rhs, radius)
