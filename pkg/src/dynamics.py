"""Right-hand side and Strang-split time integration of the coupled field-oscillator system.

    i xi' = -Laplacian xi + |xi|^2 xi + |z|^2 z G
    i z'  = z + (1/2) z^2 (G|xi) + |z|^2 conj((G|xi))

One step is C(dt/2) K(dt/2) L(dt) K(dt/2) C(dt/2): C the exact pointwise cubic phase rotation,
K the coupled forcing/oscillator flow by classical RK4, L the exact free flow.
"""
import cmath
import logging
import math
from typing import Optional, Protocol, Tuple

import numpy as np

from .config import SHELL_MASS_LIMIT
from .errors import GridMismatchError, IntegrationError
from .models import CheckpointRecord, ModelConfig, RadialField, SystemState, Trajectory
from .radial import gradient_norm_sq, inner_product, neg_laplacian, propagate_values, shell_mass

logger = logging.getLogger(__name__)


class CheckpointSink(Protocol):
    def write(self, record: CheckpointRecord, state: Optional[SystemState]) -> None: ...


def mass(state: SystemState) -> float:
    """M = (1/2)||xi||^2 + |z|^2."""
    return 0.5 * inner_product(state.xi, state.xi).real + abs(state.z) ** 2


def energy(state: SystemState, G: RadialField, cubic_on: bool = True) -> float:
    """E = (1/2)||grad xi||^2 + (1/4)||xi||_4^4 + |z|^2 + Re(|z|^2 z (G|xi))."""
    if G.grid != state.grid:
        raise GridMismatchError("coupling field and state live on different grids")
    xi = state.xi
    value = 0.5 * gradient_norm_sq(xi) + abs(state.z) ** 2
    if cubic_on:
        value += 0.25 * float(np.sum(xi.grid.weights * np.abs(xi.values) ** 4))
    z = state.z
    return float(value + (abs(z) ** 2 * z * inner_product(G, xi)).real)


def rhs(state: SystemState, config: ModelConfig) -> Tuple[RadialField, complex]:
    """Time derivatives (dxi/dt, dz/dt) of the coupled system."""
    xi, z, G = state.xi, state.z, config.G
    a = inner_product(G, xi)
    forcing = neg_laplacian(xi).values + abs(z) ** 2 * z * G.values
    if config.cubic_on:
        forcing = forcing + np.abs(xi.values) ** 2 * xi.values
    dz = -1j * (z + 0.5 * z * z * a + abs(z) ** 2 * np.conj(a))
    return RadialField(xi.grid, -1j * forcing), complex(dz)


def _coupled_flow(values: np.ndarray, z: complex, G: RadialField, gg: float, tau: float) -> Tuple[np.ndarray, complex]:
    # xi' = -i|z|^2 z G only moves xi along G, so xi = xi0 + gamma*G and
    # (G|xi) = (G|xi0) + conj(gamma)*(G|G); RK4 runs on the scalars (gamma, z).
    a0 = complex(np.sum(G.grid.weights * G.values * values.conj()))

    def field(gamma: complex, w: complex) -> Tuple[complex, complex]:
        a = a0 + gamma.conjugate() * gg
        ww = abs(w) ** 2
        return -1j * ww * w, -1j * (w + 0.5 * w * w * a + ww * a.conjugate())

    gamma = 0j
    k1 = field(gamma, z)
    k2 = field(gamma + 0.5 * tau * k1[0], z + 0.5 * tau * k1[1])
    k3 = field(gamma + 0.5 * tau * k2[0], z + 0.5 * tau * k2[1])
    k4 = field(gamma + tau * k3[0], z + tau * k3[1])
    gamma = tau * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]) / 6
    z = z + tau * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]) / 6
    return values + gamma * G.values, z


def step(state: SystemState, dt: float, config: ModelConfig) -> SystemState:
    """One symmetric splitting step of size dt (either sign)."""
    if not math.isfinite(dt) or dt == 0:
        raise ValueError(f"step size must be finite and nonzero, got {dt}")
    grid, G = config.grid, config.G
    half = 0.5 * dt
    gg = inner_product(G, G).real
    values, z = state.xi.values, state.z

    if config.cubic_on:
        values = values * np.exp(-1j * np.abs(values) ** 2 * half)
    values, z = _coupled_flow(values, z, G, gg, half)
    values = propagate_values(values, grid, dt)
    values, z = _coupled_flow(values, z, G, gg, half)
    if config.cubic_on:
        values = values * np.exp(-1j * np.abs(values) ** 2 * half)

    if not (np.all(np.isfinite(values)) and cmath.isfinite(z)):
        raise IntegrationError("non-finite state after step", 0, state.t)
    return SystemState(RadialField(grid, values), z, state.t + dt)


def time_reversed(state: SystemState) -> SystemState:
    """(xi, z, t) -> (conj xi, conj z, -t); maps solutions to solutions when G is real."""
    return SystemState(state.xi.conj(), state.z.conjugate(), -state.t)


def _checkpoint(index: int, state: SystemState, config: ModelConfig, has_field: bool) -> CheckpointRecord:
    total = mass(state)
    fraction = shell_mass(state.xi) / total if total > 0 else 0.0
    return CheckpointRecord(
        step=index,
        t=state.t,
        mass=total,
        energy=energy(state, config.G, config.cubic_on),
        z=state.z,
        g_xi=inner_product(config.G, state.xi),
        shell_fraction=fraction,
        shell_valid=fraction <= SHELL_MASS_LIMIT,
        has_field=has_field,
    )


def evolve(init: SystemState, config: ModelConfig, sink: Optional[CheckpointSink] = None) -> Trajectory:
    """Integrate from init to init.t + t_end, recording checkpoints.

    Scalars are recorded every checkpoint_stride steps and fields every field_stride steps;
    both always include the first and last state. A shortened final step lands exactly on t_end.
    """
    if init.grid != config.grid:
        raise GridMismatchError("initial state is not sampled on the run grid")

    n_steps = math.ceil(config.t_end / config.dt - 1e-9) if config.t_end > 0 else 0
    trajectory = Trajectory(config)
    report_every = max(1, n_steps // 10)

    def keep(index: int, state: SystemState, with_field: bool):
        record = _checkpoint(index, state, config, with_field)
        quartic = float(np.sum(state.grid.weights * np.abs(state.xi.values) ** 4))
        if quartic > config.l4_ceiling:
            last = trajectory.records[-1].t if trajectory.records else None
            raise IntegrationError(f"||xi||_4^4 = {quartic:.3e} exceeds ceiling {config.l4_ceiling:.1e}", index, last)
        trajectory.records.append(record)
        if with_field:
            trajectory.states.append(state)
            logger.debug(f"field checkpoint t={state.t:.4f}")
        if sink is not None:
            sink.write(record, state if with_field else None)

    keep(0, init, True)
    state = init
    logger.info(f"Evolving {n_steps} steps of dt={config.dt} (cubic {'on' if config.cubic_on else 'off'})")

    for index in range(1, n_steps + 1):
        last_step = index == n_steps
        dt = config.t_end - (n_steps - 1) * config.dt if last_step else config.dt
        try:
            state = step(state, dt, config)
        except IntegrationError as exc:
            last = trajectory.records[-1].t if trajectory.records else None
            raise IntegrationError(exc.reason, index, last) from exc
        t = init.t + (config.t_end if last_step else index * config.dt)
        state = SystemState(state.xi, state.z, t)

        if index % config.checkpoint_stride == 0 or last_step:
            keep(index, state, index % config.field_stride == 0 or last_step)
        if index % report_every == 0:
            rec = trajectory.records[-1]
            logger.info(f"  t={rec.t:.2f}  |z|={abs(rec.z):.5f}  mass={rec.mass:.10f}")

    return trajectory


def conservation_report(trajectory: Trajectory) -> dict:
    """Largest relative drift of mass and energy along the checkpoints."""
    masses = np.array([rec.mass for rec in trajectory.records])
    energies = np.array([rec.energy for rec in trajectory.records])
    mass_scale = abs(masses[0]) or 1.0
    energy_scale = abs(energies[0]) or 1.0
    return {
        "mass_drift": float(np.max(np.abs(masses - masses[0])) / mass_scale),
        "energy_drift": float(np.max(np.abs(energies - energies[0])) / energy_scale),
    }
