"""Experiment files and the pipelines that run them.

An experiment file is TOML with one level of sections and scalar values. parse_config
validates it against CONFIG_SCHEMA, and run dispatches on the experiment kind, writes the
run directory and returns the acceptance checks of the kind.
"""
import hashlib
import json
import logging
import math
import sqlite3
import tomllib
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import (
    CONFIG_ECHO_FILE,
    CONFIG_SCHEMA,
    EXPERIMENT_KINDS,
    FGR_FILE,
    OUTPUT_ROOT,
    STANDING_WAVE_FILE,
)
from .database import finish_run, insert_check, insert_run, transaction
from .diagnostics import (
    damping_monitor,
    envelope_report,
    fgr_context,
    scattering_defect,
    virial_monitor,
    z_power_monitor,
)
from .dynamics import conservation_report, evolve
from .errors import ConfigError, RunError
from .models import (
    CheckResult,
    ExperimentConfig,
    ModelConfig,
    RadialField,
    RadialGrid,
    SpectralField,
    SpectralProfile,
    SystemState,
)
from .radial import from_spectral, gaussian, make_grid, norm
from .records import TrajectoryWriter, read_field_block, write_field_block, write_kv_record, write_summary, write_table
from .resolvent import (
    dispersive_decay_probe,
    extrapolated_gamma,
    fgr_report,
    field_from_profile,
    gaussian_hat,
    hat_transform,
    smooth_bump,
    spectral_profile,
)
from .standing_wave import omega_fixed_point, standing_wave_run

logger = logging.getLogger(__name__)

COUPLING_KINDS = ("gaussian", "spectral-bump")
XI_KINDS = ("zero", "gaussian", "file")


# Parsing and validation
def _parse_scalar(text: str) -> Any:
    try:
        return tomllib.loads(f"value = {text}")["value"]
    except tomllib.TOMLDecodeError:
        return text


def _coerce(key: str, default: Any, value: Any) -> Any:
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(key, f"must be finite, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(key, f"expected a string, got {value!r}")
    return value


def _merge(sections: Dict[str, Dict[str, Any]], raw: Dict[str, Any]) -> None:
    for section, entries in raw.items():
        if section not in CONFIG_SCHEMA:
            raise ConfigError(section, "unknown section")
        if not isinstance(entries, dict):
            raise ConfigError(section, "expected a section of key = value entries")
        for name, value in entries.items():
            key = f"{section}.{name}"
            if name not in CONFIG_SCHEMA[section]:
                raise ConfigError(key, "unknown key")
            if isinstance(value, (dict, list)):
                raise ConfigError(key, "only scalar values are allowed")
            sections[section][name] = _coerce(key, CONFIG_SCHEMA[section][name], value)


def _apply_overrides(sections: Dict[str, Dict[str, Any]], overrides: Sequence[str]) -> None:
    for override in overrides:
        key, sep, text = override.partition("=")
        key = key.strip()
        if not sep or "." not in key:
            raise ConfigError(key or override, "override must look like section.key=value")
        section, name = key.split(".", 1)
        _merge(sections, {section: {name: _parse_scalar(text.strip())}})


def _require(condition: bool, key: str, message: str) -> None:
    if not condition:
        raise ConfigError(key, message)


def _validate(config: ExperimentConfig) -> None:
    c = config
    _require(c["grid.n"] >= 2, "grid.n", "needs at least 2 interior nodes")
    _require(c["grid.r_max"] > 0, "grid.r_max", "must be positive")

    _require(c["coupling.kind"] in COUPLING_KINDS, "coupling.kind", f"must be one of {COUPLING_KINDS}")
    _require(c["coupling.width"] > 0, "coupling.width", "must be positive")
    _require(c["coupling.half_width"] > 0, "coupling.half_width", "must be positive")

    _require(c["initial.xi_kind"] in XI_KINDS, "initial.xi_kind", f"must be one of {XI_KINDS}")
    _require(c["initial.xi_width"] > 0, "initial.xi_width", "must be positive")
    _require(c["initial.noise_amplitude"] >= 0, "initial.noise_amplitude", "must be nonnegative")
    if c["initial.xi_kind"] == "file":
        _require(bool(c["initial.xi_file"]), "initial.xi_file", "required when xi_kind = 'file'")
        _require(Path(c["initial.xi_file"]).is_file(), "initial.xi_file", f"file not found: {c['initial.xi_file']}")

    _require(c["run.dt"] > 0, "run.dt", "must be positive")
    _require(c["run.t_end"] >= 0, "run.t_end", "must be nonnegative")
    _require(c["run.checkpoint_stride"] >= 1, "run.checkpoint_stride", "must be at least 1")
    _require(c["run.field_stride"] >= 1, "run.field_stride", "must be at least 1")
    _require(
        c["run.field_stride"] % c["run.checkpoint_stride"] == 0,
        "run.field_stride",
        "must be a multiple of run.checkpoint_stride",
    )
    _require(c["run.l4_ceiling"] > 0, "run.l4_ceiling", "must be positive")
    _require(c["run.seed"] >= 0, "run.seed", "must be nonnegative")

    _require(c["resolvent.rho_max"] > 1, "resolvent.rho_max", "must exceed the resonance rho = 1")
    _require(c["resolvent.rho_density"] > 0, "resolvent.rho_density", "must be positive")
    _require(0 < c["resolvent.shell_delta"] < 1, "resolvent.shell_delta", "must lie in (0, 1)")
    _require(c["resolvent.shell_tol"] > 0, "resolvent.shell_tol", "must be positive")

    _require(c["standing_wave.epsilon"] >= 0, "standing_wave.epsilon", "must be nonnegative")
    _require(c["standing_wave.horizon"] > 0, "standing_wave.horizon", "must be positive")
    _require(c["standing_wave.max_iterations"] >= 1, "standing_wave.max_iterations", "must be at least 1")
    _require(c["standing_wave.fixed_point_tol"] > 0, "standing_wave.fixed_point_tol", "must be positive")

    _require(c["diagnostics.probe_t_min"] > 0, "diagnostics.probe_t_min", "must be positive")
    _require(
        c["diagnostics.probe_t_max"] > c["diagnostics.probe_t_min"],
        "diagnostics.probe_t_max",
        "must exceed probe_t_min",
    )
    _require(c["diagnostics.probe_points"] >= 4, "diagnostics.probe_points", "needs at least 4 times")
    _require(0 < c["diagnostics.probe_taper"] < 1, "diagnostics.probe_taper", "must lie in (0, 1)")
    _require(c["diagnostics.virial_radius"] > 0, "diagnostics.virial_radius", "must be positive")
    _require(
        c["diagnostics.decay_exponent_min"] < c["diagnostics.decay_exponent_max"],
        "diagnostics.decay_exponent_min",
        "must be below decay_exponent_max",
    )
    if c.kind == "virial":
        _require(
            2 * c["diagnostics.virial_radius"] <= c["grid.r_max"],
            "diagnostics.virial_radius",
            "the cutoff support 2R must fit inside grid.r_max",
        )

    if c.kind == "standing-wave":
        delta = c["resolvent.shell_delta"]
        _require(
            c["coupling.kind"] == "spectral-bump",
            "coupling.kind",
            "standing waves need a spectral-bump coupling that vanishes on the resonant shell",
        )
        low = c["coupling.center"] - c["coupling.half_width"]
        high = c["coupling.center"] + c["coupling.half_width"]
        _require(
            high <= 1 - delta or low >= 1 + delta,
            "coupling.center",
            f"bump support [{low:g}, {high:g}] meets the shell [{1 - delta:g}, {1 + delta:g}]; "
            "the shell condition of the standing-wave family fails",
        )


def parse_config(
    path: Path,
    kind: Optional[str] = None,
    overrides: Sequence[str] = (),
) -> ExperimentConfig:
    """Read, merge with defaults, override and validate an experiment file.

    Args:
        path: TOML experiment file
        kind: Experiment kind; must agree with experiment.kind when the file sets it
        overrides: 'section.key=value' strings, values parsed as TOML scalars

    Returns:
        The validated ExperimentConfig with every schema key present.

    Raises:
        ConfigError: missing file, syntax error, unknown key, wrong type or violated invariant
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"file not found: {path}")
    try:
        with open(path, "rb") as handle:
            raw = tomllib.load(handle)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"{path}: {exc}") from exc

    sections = {section: dict(defaults) for section, defaults in CONFIG_SCHEMA.items()}
    _merge(sections, raw)
    _apply_overrides(sections, overrides)

    file_kind = sections["experiment"]["kind"]
    if kind and file_kind and kind != file_kind:
        raise ConfigError("experiment.kind", f"file is a '{file_kind}' experiment, not '{kind}'")
    kind = kind or file_kind
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError("experiment.kind", f"unknown experiment kind '{kind}', expected one of {list(EXPERIMENT_KINDS)}")
    sections["experiment"]["kind"] = kind

    xi_file = sections["initial"]["xi_file"]
    if xi_file and not Path(xi_file).is_absolute():
        sections["initial"]["xi_file"] = str((path.parent / xi_file).resolve())

    config = ExperimentConfig(kind, sections, source=path)
    _validate(config)
    logger.debug(f"parsed {kind} experiment from {path}")
    return config


def _echo_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    return json.dumps(value)


def echo_config(config: ExperimentConfig) -> str:
    """Canonical TOML text: sections and keys sorted, every key present, floats by repr."""
    blocks = []
    for section in sorted(config.sections):
        entries = config.sections[section]
        lines = [f"[{section}]"] + [f"{name} = {_echo_value(entries[name])}" for name in sorted(entries)]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def config_hash(config: ExperimentConfig) -> str:
    return hashlib.sha256(echo_config(config).encode("utf-8")).hexdigest()


# Builders
def build_grid(config: ExperimentConfig) -> RadialGrid:
    return make_grid(config["grid.n"], config["grid.r_max"])


def coupling_transform(config: ExperimentConfig) -> Callable[[np.ndarray], np.ndarray]:
    """Exact radial Fourier transform of the configured coupling."""
    amplitude = config["coupling.amplitude"]
    if config["coupling.kind"] == "gaussian":
        width = config["coupling.width"]
        return lambda rho: gaussian_hat(rho, width, amplitude)
    return smooth_bump(config["coupling.center"], config["coupling.half_width"], amplitude)


def build_coupling(config: ExperimentConfig, grid: RadialGrid) -> RadialField:
    if config["coupling.kind"] == "gaussian":
        return gaussian(grid, config["coupling.width"], config["coupling.amplitude"])
    return field_from_profile(coupling_transform(config), grid)


def build_profile(config: ExperimentConfig) -> SpectralProfile:
    return spectral_profile(
        coupling_transform(config),
        rho0=1.0,
        rho_max=config["resolvent.rho_max"],
        density=config["resolvent.rho_density"],
    )


def smooth_noise(grid: RadialGrid, amplitude: float, seed: int) -> RadialField:
    """Seeded random field with Gaussian-damped sine coefficients, scaled to L^2 norm amplitude."""
    rng = np.random.default_rng(seed)
    coeffs = (rng.standard_normal(grid.n) + 1j * rng.standard_normal(grid.n)) * np.exp(-grid.rho ** 2)
    noise = from_spectral(SpectralField(grid, coeffs))
    size = norm(noise, "L2")
    return noise * (amplitude / size) if size > 0 else noise


def build_initial(config: ExperimentConfig, grid: RadialGrid) -> SystemState:
    kind = config["initial.xi_kind"]
    if kind == "zero":
        xi = RadialField.zeros(grid)
    elif kind == "gaussian":
        xi = gaussian(grid, config["initial.xi_width"], config["initial.xi_amplitude"])
    else:
        values = read_field_block(Path(config["initial.xi_file"]))
        if values.size != grid.n:
            raise ConfigError("initial.xi_file", f"field has {values.size} nodes, grid has {grid.n}")
        xi = RadialField(grid, values)
    if config["initial.noise_amplitude"] > 0:
        xi = xi + smooth_noise(grid, config["initial.noise_amplitude"], config["run.seed"])
    return SystemState(xi, config.z0, 0.0)


def build_model(
    config: ExperimentConfig,
    grid: RadialGrid,
    G: RadialField,
    profile: Optional[SpectralProfile] = None,
) -> ModelConfig:
    return ModelConfig(
        grid=grid,
        G=G,
        dt=config["run.dt"],
        t_end=config["run.t_end"],
        checkpoint_stride=config["run.checkpoint_stride"],
        field_stride=config["run.field_stride"],
        cubic_on=config["run.cubic_on"],
        l4_ceiling=config["run.l4_ceiling"],
        profile=profile,
    )


@contextmanager
def _phase(kind: str, phase: str):
    try:
        yield
    except (RunError, ConfigError):
        raise
    except Exception as exc:
        raise RunError(kind, phase, exc) from exc


def _check(name: str, statistic: float, tolerance: float, passed: Optional[bool] = None) -> CheckResult:
    if passed is None:
        passed = math.isfinite(statistic) and statistic <= tolerance
    return CheckResult(name, statistic, tolerance, passed)


def _evolve(config: ExperimentConfig, model: ModelConfig, init: SystemState, out_dir: Path):
    with _phase(config.kind, "evolve"):
        with TrajectoryWriter(out_dir) as writer:
            return evolve(init, model, writer)


# Pipelines
def _run_simulate(config: ExperimentConfig, out_dir: Path) -> List[CheckResult]:
    with _phase(config.kind, "setup"):
        grid = build_grid(config)
        model = build_model(config, grid, build_coupling(config, grid))
        init = build_initial(config, grid)
    trajectory = _evolve(config, model, init, out_dir)
    with _phase(config.kind, "diagnostics"):
        drift = conservation_report(trajectory)
    return [
        _check("mass_drift", drift["mass_drift"], config["diagnostics.mass_tolerance"]),
        _check("energy_drift", drift["energy_drift"], config["diagnostics.energy_tolerance"]),
    ]


def _run_fgr(config: ExperimentConfig, out_dir: Path) -> List[CheckResult]:
    with _phase(config.kind, "resolvent"):
        grid = build_grid(config)
        G = build_coupling(config, grid)
        profile = build_profile(config)
        report = fgr_report(profile, config["resolvent.shell_tol"], config["resolvent.shell_delta"])
        regularized = extrapolated_gamma(profile)
        physical = fgr_report(
            hat_transform(G, 1.0, config["resolvent.rho_max"], config["resolvent.rho_density"]),
            config["resolvent.shell_tol"],
            config["resolvent.shell_delta"],
        )
    record = report.to_record()
    record["gamma_physical"] = physical.gamma
    record["gamma_regularized"] = regularized
    record["beta_physical_re"] = physical.beta.real
    record["beta_physical_im"] = physical.beta.imag
    write_kv_record(out_dir / FGR_FILE, record)

    scale = report.gamma_sphere if report.gamma_sphere > 0 else 1.0
    return [
        _check("gamma_agreement", abs(report.gamma - report.gamma_sphere) / scale, config["diagnostics.gamma_agreement_tolerance"]),
        _check("gamma_nonnegative", report.gamma, 0.0, passed=report.gamma >= 0),
        _check("gamma_physical", abs(physical.gamma - report.gamma) / scale, config["diagnostics.gamma_physical_tolerance"]),
        _check("gamma_regularized", abs(regularized - report.gamma) / scale, config["diagnostics.gamma_regularized_tolerance"]),
    ]


def _run_standing_wave(config: ExperimentConfig, out_dir: Path) -> List[CheckResult]:
    with _phase(config.kind, "fixed point"):
        grid = build_grid(config)
        G = build_coupling(config, grid)
        params = omega_fixed_point(
            config["standing_wave.epsilon"],
            G,
            max_iterations=config["standing_wave.max_iterations"],
            tol=config["standing_wave.fixed_point_tol"],
            delta=config["resolvent.shell_delta"],
            shell_tol=config["resolvent.shell_tol"],
        )
        model = build_model(config, grid, G)
    with _phase(config.kind, "evolve"):
        with TrajectoryWriter(out_dir) as writer:
            report, _ = standing_wave_run(params, model, config["standing_wave.horizon"], allow_cubic=True, sink=writer)

    with open(out_dir / "phi.bin", "wb") as handle:
        write_field_block(handle, params.phi.values)
    write_kv_record(out_dir / STANDING_WAVE_FILE, {**params.to_record(), **report.to_record(), "phi_file": "phi.bin"})

    # with the cubic term on the family is only approximate; drift is reported, not judged
    informational = math.inf if report.cubic_on else None
    return [
        _check("fixed_point_residual", report.fixed_point_residual, config["standing_wave.fixed_point_tol"]),
        _check("rhs_residual", report.rhs_residual, 1e-8),
        _check("evolution_error", report.evolution_error, informational or config["diagnostics.standing_wave_tolerance"]),
        _check("modulus_drift", report.modulus_drift, informational or 1e-6),
    ]


def _run_scatter_report(config: ExperimentConfig, out_dir: Path) -> List[CheckResult]:
    with _phase(config.kind, "setup"):
        grid = build_grid(config)
        model = build_model(config, grid, build_coupling(config, grid))
        init = build_initial(config, grid)
    trajectory = _evolve(config, model, init, out_dir)
    with _phase(config.kind, "diagnostics"):
        report = scattering_defect(trajectory, config["diagnostics.scatter_tolerance"])
    write_table(out_dir / "scatter.csv", report.to_frame())
    return [_check("scattering_verdict", report.statistic, report.tolerance, passed=report.verdict)]


def _run_virial(config: ExperimentConfig, out_dir: Path) -> List[CheckResult]:
    with _phase(config.kind, "setup"):
        grid = build_grid(config)
        model = build_model(config, grid, build_coupling(config, grid))
        init = build_initial(config, grid)
    trajectory = _evolve(config, model, init, out_dir)
    with _phase(config.kind, "diagnostics"):
        series = virial_monitor(trajectory, config["diagnostics.virial_radius"])
    write_table(out_dir / "virial.csv", series.to_frame())
    return [_check("virial_residual", series.summary, config["diagnostics.virial_tolerance"])]


def _run_damping(config: ExperimentConfig, out_dir: Path) -> List[CheckResult]:
    with _phase(config.kind, "resolvent"):
        grid = build_grid(config)
        G = build_coupling(config, grid)
        profile = build_profile(config)
        context = fgr_context(G, profile, config["resolvent.rho_max"], config["resolvent.rho_density"])
        model = build_model(config, grid, G, profile)
        model.fgr = fgr_report(profile, config["resolvent.shell_tol"], config["resolvent.shell_delta"])
        init = build_initial(config, grid)
    trajectory = _evolve(config, model, init, out_dir)
    with _phase(config.kind, "diagnostics"):
        damping = damping_monitor(trajectory, context)
        z_power = z_power_monitor(trajectory, context)
        envelope = envelope_report(trajectory, context.gamma)
    write_table(out_dir / "damping.csv", damping.to_frame())
    write_table(out_dir / "z_power.csv", z_power.to_frame())
    write_kv_record(out_dir / "envelope.rec", {"gamma_grid": context.gamma, "gamma": model.fgr.gamma, **envelope})
    tolerance = config["diagnostics.damping_tolerance"]
    return [
        _check("damping_residual", damping.summary, tolerance),
        _check("z_power_residual", z_power.summary, tolerance),
        _check("envelope_deviation", envelope["envelope_deviation"], config["diagnostics.envelope_tolerance"]),
        _check(
            "late_slope",
            abs(envelope["late_slope"] - config["diagnostics.late_slope"]),
            config["diagnostics.late_slope_tolerance"],
        ),
    ]


def _run_decay_probe(config: ExperimentConfig, out_dir: Path) -> List[CheckResult]:
    with _phase(config.kind, "decay probe"):
        grid = build_grid(config)
        G = build_coupling(config, grid)
        times = np.geomspace(
            config["diagnostics.probe_t_min"],
            config["diagnostics.probe_t_max"],
            config["diagnostics.probe_points"],
        )
        probe = dispersive_decay_probe(
            G,
            config["diagnostics.sigma"],
            times,
            taper=config["diagnostics.probe_taper"],
            rho_max=config["resolvent.rho_max"],
            density=config["resolvent.rho_density"],
        )
    write_table(out_dir / "decay.csv", probe.to_frame())
    write_kv_record(out_dir / "decay.rec", {"exponent": probe.exponent, "degenerate": probe.degenerate})

    low, high = config["diagnostics.decay_exponent_min"], config["diagnostics.decay_exponent_max"]
    distance = abs(probe.exponent - 0.5 * (low + high))
    return [_check("decay_exponent", distance, 0.5 * (high - low), passed=not probe.degenerate and low <= probe.exponent <= high)]


PIPELINES: Dict[str, Callable[[ExperimentConfig, Path], List[CheckResult]]] = {
    "simulate": _run_simulate,
    "fgr": _run_fgr,
    "standing-wave": _run_standing_wave,
    "scatter-report": _run_scatter_report,
    "virial": _run_virial,
    "damping": _run_damping,
    "decay-probe": _run_decay_probe,
}


def default_out_dir(config: ExperimentConfig) -> Path:
    if config["output.directory"]:
        return Path(config["output.directory"])
    return OUTPUT_ROOT / f"{config.kind}-{config_hash(config)[:12]}"


def run(
    config: ExperimentConfig,
    out_dir: Optional[Path] = None,
    conn: Optional[sqlite3.Connection] = None,
) -> Tuple[Path, List[CheckResult]]:
    """Run one experiment and write its run directory.

    Args:
        config: Validated experiment
        out_dir: Run directory; defaults to output.directory or a hashed directory under OUTPUT_ROOT
        conn: Registry connection; the run and its checks are recorded when given

    Returns:
        (run directory, acceptance checks). Every check passing means exit status 0.

    Raises:
        RunError: a module error, with the experiment kind and the phase it happened in
    """
    out_dir = Path(out_dir) if out_dir is not None else default_out_dir(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / CONFIG_ECHO_FILE).write_text(echo_config(config), encoding="utf-8")

    run_id = insert_run(conn, config.kind, out_dir, config_hash(config)) if conn is not None else None
    logger.info(f"Running {config.kind} experiment into {out_dir}")
    try:
        checks = PIPELINES[config.kind](config, out_dir)
    except Exception:
        if run_id is not None:
            finish_run(conn, run_id, "error")
        raise

    write_summary(out_dir, config.kind, checks)
    status = "pass" if all(check.passed for check in checks) else "fail"
    if run_id is not None:
        with transaction(conn):
            for check in checks:
                insert_check(conn, run_id, check)
            finish_run(conn, run_id, status)
    logger.info(f"{config.kind} experiment finished: {status}")
    return out_dir, checks
