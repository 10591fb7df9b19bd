"""Data models for the radiation-damping laboratory."""
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .errors import CoverageError, GridMismatchError


@dataclass(frozen=True)
class RadialGrid:
    """Interior nodes r_k = k*h, h = r_max/(n+1), of a Dirichlet-truncated radial domain."""
    n: int
    r_max: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"grid needs n >= 2 interior nodes, got n={self.n}")
        if not math.isfinite(self.r_max) or self.r_max <= 0:
            raise ValueError(f"grid needs a positive finite r_max, got {self.r_max}")

    @property
    def h(self) -> float:
        return self.r_max / (self.n + 1)

    @cached_property
    def r(self) -> np.ndarray:
        return self.h * np.arange(1, self.n + 1)

    @cached_property
    def rho(self) -> np.ndarray:
        """Sine-basis frequencies k*pi/r_max; -Laplacian acts as rho**2."""
        return np.pi / self.r_max * np.arange(1, self.n + 1)

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights 4*pi*r**2*h of the radial volume integral."""
        return 4 * np.pi * self.r ** 2 * self.h


@dataclass(frozen=True, eq=False)
class RadialField:
    """Complex samples u(r_k) of a radial function on R^3."""
    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != (self.grid.n,):
            raise GridMismatchError(f"field has shape {values.shape}, grid has n={self.grid.n}")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise ValueError(f"non-finite field value at node {bad + 1} (r={self.grid.r[bad]:.6g})")
        object.__setattr__(self, "values", values)

    def _check(self, other: "RadialField"):
        if other.grid != self.grid:
            raise GridMismatchError(f"grid mismatch: {self.grid} vs {other.grid}")

    def __add__(self, other: "RadialField") -> "RadialField":
        self._check(other)
        return RadialField(self.grid, self.values + other.values)

    def __sub__(self, other: "RadialField") -> "RadialField":
        self._check(other)
        return RadialField(self.grid, self.values - other.values)

    def __mul__(self, scalar: complex) -> "RadialField":
        return RadialField(self.grid, scalar * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> "RadialField":
        return RadialField(self.grid, -self.values)

    def conj(self) -> "RadialField":
        return RadialField(self.grid, self.values.conj())

    @classmethod
    def zeros(cls, grid: RadialGrid) -> "RadialField":
        return cls(grid, np.zeros(grid.n, dtype=complex))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Coefficients c_k of w = r*u in the Dirichlet sine basis, normalized so sum |c_k|^2 = ||u||^2."""
    grid: RadialGrid
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=complex)
        if coeffs.shape != (self.grid.n,):
            raise GridMismatchError(f"coefficients have shape {coeffs.shape}, grid has n={self.grid.n}")
        object.__setattr__(self, "coeffs", coeffs)


@dataclass(frozen=True, eq=False)
class SpectralProfile:
    """Samples of the radial Fourier transform on a half-step grid with rho0 on a panel edge.

    Even-indexed samples are panel edges (0, d, 2d, ...), odd-indexed samples are panel
    midpoints; rho0 = J*d sits at index 2J. The evaluator reproduces the transform at
    arbitrary frequencies.
    """
    rho: np.ndarray
    values: np.ndarray
    provenance: str  # 'physical' or 'spectral'
    rho0: float
    spacing: float
    evaluator: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("spectral profile has non-finite samples")
        if np.any(np.diff(self.rho) <= 0) or self.rho[0] < 0:
            raise ValueError("spectral profile frequencies must be nonnegative and increasing")

    @property
    def resonant_index(self) -> int:
        return int(round(2 * self.rho0 / self.spacing))

    @property
    def resonant_value(self) -> complex:
        return complex(self.values[self.resonant_index])

    @property
    def rho_max(self) -> float:
        return float(self.rho[-1])

    @property
    def midpoints(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.rho[1::2], self.values[1::2]

    def at(self, rho) -> np.ndarray:
        """Evaluate the transform at arbitrary frequencies."""
        return self.evaluator(np.atleast_1d(np.asarray(rho, dtype=float)))


@dataclass
class FgrReport:
    """Fermi Golden Rule constants of a coupling profile."""
    beta: complex
    gamma: float
    gamma_sphere: float  # same constant from the resonant-sphere formula
    sphere_integral: float
    fgr_holds: bool
    min_abs_on_shell: float
    hat_at_resonance: float

    def to_record(self) -> Dict[str, Any]:
        return {
            "beta_re": self.beta.real,
            "beta_im": self.beta.imag,
            "gamma": self.gamma,
            "gamma_sphere": self.gamma_sphere,
            "sphere_integral": self.sphere_integral,
            "fgr_holds": self.fgr_holds,
            "min_abs_on_shell": self.min_abs_on_shell,
            "hat_at_resonance": self.hat_at_resonance,
        }


@dataclass(eq=False)
class FgrContext:
    """Precomputed outgoing resolvent R_+(1)G and beta = (G|R_+(1)G) on the run grid."""
    G: RadialField
    outgoing: RadialField
    beta: complex

    @property
    def gamma(self) -> float:
        return -self.beta.imag


@dataclass(eq=False)
class ModelConfig:
    """Everything the integrator needs for one run."""
    grid: RadialGrid
    G: RadialField
    dt: float
    t_end: float
    checkpoint_stride: int = 10
    field_stride: int = 100
    cubic_on: bool = True
    l4_ceiling: float = 1e6
    profile: Optional[SpectralProfile] = None
    fgr: Optional[FgrReport] = None

    def __post_init__(self):
        if not math.isfinite(self.dt) or self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not math.isfinite(self.t_end) or self.t_end < 0:
            raise ValueError(f"t_end must be nonnegative, got {self.t_end}")
        if self.G.grid != self.grid:
            raise GridMismatchError("coupling field G is not sampled on the run grid")
        if self.checkpoint_stride < 1 or self.field_stride < 1:
            raise ValueError("checkpoint strides must be positive")
        if self.field_stride % self.checkpoint_stride:
            raise ValueError(
                f"field_stride ({self.field_stride}) must be a multiple of "
                f"checkpoint_stride ({self.checkpoint_stride})"
            )


@dataclass(frozen=True, eq=False)
class SystemState:
    """The field xi, the oscillator amplitude z and the time t."""
    xi: RadialField
    z: complex
    t: float = 0.0

    def __post_init__(self):
        z = complex(self.z)
        if not (math.isfinite(z.real) and math.isfinite(z.imag)):
            raise ValueError(f"non-finite oscillator amplitude z={z}")
        object.__setattr__(self, "z", z)

    @property
    def grid(self) -> RadialGrid:
        return self.xi.grid

    def rotated(self, theta: float) -> "SystemState":
        """Gauge transform (xi, z) -> (e^{i theta} xi, e^{i theta} z)."""
        phase = np.exp(1j * theta)
        return SystemState(self.xi * phase, self.z * phase, self.t)


@dataclass
class CheckpointRecord:
    """Scalars stored at every checkpoint."""
    step: int
    t: float
    mass: float
    energy: float
    z: complex
    g_xi: complex  # (G|xi)
    shell_fraction: float
    shell_valid: bool
    has_field: bool = False

    def to_record(self) -> Dict[str, Any]:
        return {
            "step": self.step,
            "t": self.t,
            "mass": self.mass,
            "energy": self.energy,
            "z_re": self.z.real,
            "z_im": self.z.imag,
            "z_abs": abs(self.z),
            "g_xi_re": self.g_xi.real,
            "g_xi_im": self.g_xi.imag,
            "shell_fraction": self.shell_fraction,
            "shell_valid": self.shell_valid,
            "has_field": self.has_field,
        }


@dataclass(eq=False)
class Trajectory:
    """Dense checkpoint scalars plus the sparser stored field states."""
    config: ModelConfig
    records: List[CheckpointRecord] = field(default_factory=list)
    states: List[SystemState] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([rec.t for rec in self.records])

    @property
    def z_values(self) -> np.ndarray:
        return np.array([rec.z for rec in self.records], dtype=complex)

    @property
    def g_xi_values(self) -> np.ndarray:
        return np.array([rec.g_xi for rec in self.records], dtype=complex)

    @property
    def field_times(self) -> np.ndarray:
        return np.array([state.t for state in self.states])

    @property
    def field_spacing(self) -> float:
        return self.config.field_stride * self.config.dt

    def state_at(self, t: float) -> SystemState:
        """Stored state at checkpoint time t."""
        if self.states:
            times = self.field_times
            index = int(np.argmin(np.abs(times - t)))
            if abs(times[index] - t) <= 1e-9 * max(1.0, abs(t)):
                return self.states[index]
        raise CoverageError(f"no field stored at t={t}")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([rec.to_record() for rec in self.records])


@dataclass(eq=False)
class DampingSeries:
    """Both sides of an amplitude identity sampled on the checkpoint grid."""
    times: np.ndarray
    lhs: np.ndarray
    fgr_term: np.ndarray
    remainder: np.ndarray
    degree: int = 2
    residual: np.ndarray = None

    def __post_init__(self):
        self.residual = self.lhs - self.fgr_term - self.remainder

    @property
    def summary(self) -> float:
        """l1 ratio of residual to the damping term over interior points."""
        inner = slice(1, -1)
        scale = np.sum(np.abs(self.fgr_term[inner]))
        if scale == 0:
            return 0.0 if not np.any(self.residual[inner]) else math.inf
        return float(np.sum(np.abs(self.residual[inner])) / scale)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "t": self.times,
            "lhs": self.lhs,
            "fgr_term": self.fgr_term,
            "remainder": self.remainder,
            "residual": self.residual,
        })


@dataclass(eq=False)
class ScatterReport:
    """Cauchy defect of the pullbacks and the oscillator tail."""
    times: np.ndarray
    pullbacks: List[RadialField]
    cauchy_defect: np.ndarray
    z_sup_tail: np.ndarray
    verdict_time: float
    statistic: float
    tolerance: float
    verdict: bool

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "t": self.times,
            "cauchy_defect": self.cauchy_defect,
            "z_sup_tail": self.z_sup_tail,
        })


@dataclass(eq=False)
class VirialSeries:
    """Time derivative of the localized virial functional against its closed form."""
    times: np.ndarray
    functional: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    radius: float
    residual: np.ndarray = None

    def __post_init__(self):
        self.residual = self.lhs - self.rhs

    @property
    def summary(self) -> float:
        inner = slice(1, -1)
        scale = np.sum(np.abs(self.rhs[inner]))
        if scale == 0:
            return 0.0 if not np.any(self.residual[inner]) else math.inf
        return float(np.sum(np.abs(self.residual[inner])) / scale)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "t": self.times,
            "functional": self.functional,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "residual": self.residual,
        })


@dataclass(eq=False)
class DuhamelIntegral:
    """Quadrature of the Duhamel term over stored field checkpoints."""
    field: RadialField
    nodes: int
    low_accuracy: bool


@dataclass
class NakanishiReport:
    """Finite-horizon Nakanishi seminorm with its maximizing pair."""
    value: float
    t0: float
    t1: float
    horizon: float
    pair: Optional[Tuple[float, float]]
    tail_fraction: float


@dataclass(eq=False)
class DecayProbe:
    """Weighted norms of the free flow of R_+(1)v and their fitted power law."""
    times: np.ndarray
    samples: np.ndarray
    exponent: float
    degenerate: bool

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "weighted_norm": self.samples})


@dataclass(eq=False)
class StandingWaveParams:
    """Converged frequency shift and profile of the standing-wave family."""
    epsilon: float
    omega: float
    phi: RadialField
    a: float  # (G|phi)
    iterations: int = 0
    history: List[float] = field(default_factory=list)

    def to_record(self) -> Dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            "omega": self.omega,
            "a": self.a,
            "iterations": self.iterations,
        }


@dataclass
class StandingWaveReport:
    """How closely a run follows the exact standing wave."""
    fixed_point_residual: float
    inverse_residual: float
    balance_residual: float
    rhs_residual: float
    evolution_error: float
    modulus_drift: float
    cubic_on: bool
    cubic_scale: float

    def to_record(self) -> Dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class CheckResult:
    """One acceptance check of an experiment."""
    name: str
    statistic: float
    tolerance: float
    passed: bool

    def __post_init__(self):
        self.statistic = float(self.statistic)
        self.tolerance = float(self.tolerance)
        self.passed = bool(self.passed)

    def to_line(self) -> str:
        return (
            f"check={self.name} statistic={self.statistic!r} "
            f"tolerance={self.tolerance!r} passed={str(self.passed).lower()}"
        )


@dataclass
class ExperimentConfig:
    """Validated experiment file: kind plus one level of sections with scalar values."""
    kind: str
    sections: Dict[str, Dict[str, Any]]
    source: Optional[Path] = field(default=None, compare=False)

    def __getitem__(self, key: str) -> Any:
        section, name = key.split(".", 1)
        return self.sections[section][name]

    @property
    def z0(self) -> complex:
        return complex(self["initial.z_re"], self["initial.z_im"])
