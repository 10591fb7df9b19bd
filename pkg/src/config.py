"""Configuration and defaults for the radiation-damping laboratory."""
import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Base paths
BASE_DIR = Path(__file__).parent.parent
DATA_DIR = Path(os.getenv("RADLAB_DATA_DIR", BASE_DIR / "data"))
DB_PATH = Path(os.getenv("RADLAB_DB_PATH", DATA_DIR / "runs.db"))
OUTPUT_ROOT = Path(os.getenv("RADLAB_OUTPUT_DIR", BASE_DIR / "runs"))

# Radial grid
DEFAULT_N = 4096
DEFAULT_R_MAX = 200.0
SHELL_FRACTION = 0.1  # outer part of the domain watched for reflected radiation
SHELL_MASS_LIMIT = 1e-3  # allowed share of the total mass in that shell

# Frequency quadrature for the resolvent
RHO_MAX = 12.0
RHO_DENSITY = 200.0  # minimum samples per unit frequency
SHELL_DELTA = 0.2
SHELL_TOL = 1e-8

# Time integration
DEFAULT_DT = 0.01
STANDING_WAVE_DT = 0.002
L4_CEILING = 1e6
MAX_CHECKPOINT_SPACING = 0.1  # centered differences need at least this density

# Dispersive decay probe
DEFAULT_SIGMA = 5.0

# Output file names inside a run directory
CONFIG_ECHO_FILE = "config.echo"
TRAJECTORY_FILE = "trajectory.ndrec"
FIELDS_FILE = "fields.bin"
SUMMARY_FILE = "summary.rec"
FGR_FILE = "fgr.rec"
STANDING_WAVE_FILE = "standing_wave.rec"

# Experiment file schema: section -> key -> default. The default fixes the type.
CONFIG_SCHEMA = {
    "experiment": {
        "kind": "",
    },
    "grid": {
        "n": DEFAULT_N,
        "r_max": DEFAULT_R_MAX,
    },
    "coupling": {
        "kind": "gaussian",  # gaussian, spectral-bump
        "amplitude": 1.0,
        "width": 1.0,
        "center": 2.0,
        "half_width": 0.5,
    },
    "initial": {
        "xi_kind": "zero",  # zero, gaussian, file
        "xi_amplitude": 0.0,
        "xi_width": 1.0,
        "xi_file": "",
        "noise_amplitude": 0.0,
        "z_re": 0.1,
        "z_im": 0.0,
    },
    "run": {
        "dt": DEFAULT_DT,
        "t_end": 400.0,
        "checkpoint_stride": 10,
        "field_stride": 100,
        "cubic_on": True,
        "l4_ceiling": L4_CEILING,
        "seed": 0,
    },
    "resolvent": {
        "rho_max": RHO_MAX,
        "rho_density": RHO_DENSITY,
        "shell_delta": SHELL_DELTA,
        "shell_tol": SHELL_TOL,
    },
    "standing_wave": {
        "epsilon": 0.1,
        "horizon": 50.0,
        "max_iterations": 50,
        "fixed_point_tol": 1e-12,
    },
    "diagnostics": {
        "sigma": DEFAULT_SIGMA,
        "probe_t_min": 5.0,
        "probe_t_max": 80.0,
        "probe_points": 16,
        "probe_taper": 0.5,
        "virial_radius": 50.0,
        "scatter_tolerance": 1e-2,
        "mass_tolerance": 1e-6,
        "energy_tolerance": 1e-6,
        "gamma_agreement_tolerance": 1e-8,
        "gamma_physical_tolerance": 1e-6,
        "gamma_regularized_tolerance": 1e-6,
        "damping_tolerance": 0.1,
        "envelope_tolerance": 0.2,
        "late_slope": -0.25,
        "late_slope_tolerance": 0.1,
        "virial_tolerance": 0.05,
        "standing_wave_tolerance": 1e-4,
        "decay_exponent_min": -1.7,
        "decay_exponent_max": -1.3,
    },
    "output": {
        "directory": "",
    },
}

# Experiment kinds and the acceptance checks each one reports
EXPERIMENT_KINDS = {
    "simulate": {
        "description": "Evolve the coupled system and track the invariants",
        "checks": ["mass_drift", "energy_drift"],
    },
    "fgr": {
        "description": "Fermi Golden Rule constants of the coupling",
        "checks": ["gamma_agreement", "gamma_nonnegative", "gamma_physical", "gamma_regularized"],
    },
    "standing-wave": {
        "description": "Standing-wave family for shell-vanishing couplings",
        "checks": ["fixed_point_residual", "rhs_residual", "evolution_error", "modulus_drift"],
    },
    "scatter-report": {
        "description": "Pullback Cauchy defect and oscillator tail",
        "checks": ["scattering_verdict"],
    },
    "virial": {
        "description": "Localized virial identity along a trajectory",
        "checks": ["virial_residual"],
    },
    "damping": {
        "description": "Radiation damping identities and reduced amplitude law",
        "checks": ["damping_residual", "z_power_residual", "envelope_deviation", "late_slope"],
    },
    "decay-probe": {
        "description": "Weighted decay of the free flow of the outgoing resolvent",
        "checks": ["decay_exponent"],
    },
}
