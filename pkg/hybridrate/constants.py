from pathlib import Path

# Constants
VALID_SCHEMES = ["analog", "mrt-hybrid", "zf-hybrid"]
VALID_CHANNELS = ["rayleigh", "mmwave"]
VALID_FORMULAS = [
    "analog",
    "analog-perfect",
    "mrt-approx",
    "mrt-perfect",
    "zf-lb",
    "zf-perfect",
    "zf-loss",
]
VALID_PRESETS = ["fig1a", "fig1b", "fig2"]

DEFAULT_M = 120
DEFAULT_K = 6
DEFAULT_B1 = 2
DEFAULT_B2 = 10
DEFAULT_SNR_DB = "-10:30:5"
DEFAULT_BETA = "uniform:0.5,1.5"
DEFAULT_CHANNEL = "rayleigh"
DEFAULT_PATHS = 10
DEFAULT_TRIALS = 2000
DEFAULT_VALIDATE_TRIALS = 100_000
DEFAULT_WORKERS = 1
DEFAULT_CACHE_SIZE = 256 * 1024 * 1024  # 256MB

MIN_RATE_TRIALS = 100
MIN_MOMENT_TRIALS = 10_000
MAX_FEEDBACK_BITS = 20
MAX_USERS = 64

# Numerical tolerances
PIVOT_RTOL = 1e-12
DIAGONAL_LOADING = 1e-9
BOUNDARY_RTOL = 1e-12
CI_Z = 1.96
MOMENT_SE_MULTIPLIER = 4.0
DEFAULT_APPROX_TOL = 0.5
DEFAULT_LOSS_SNR_DB = 5.0

# Reserved stream indices; trial t uses index t
PATHLOSS_STREAM = 2**64 - 1
CODEBOOK_STREAM = 2**64 - 2

CONFIG_FILE = Path.home() / ".hybridrate" / "config"

CSV_COLUMNS = ["scheme", "b1", "b2", "snr_db", "user", "rate_bps_hz", "ci_halfwidth", "source"]

BITS_HELP = "Quantization bits, an integer or 'inf' for unquantized"
SNR_HELP = "SNR grid in dB as start:stop:step (stop included when on the grid) or a comma list"
BETA_HELP = "Path losses as a comma list of K values or 'uniform:lo,hi' drawn once per experiment"
SCHEME_HELP = f"Comma-separated list of schemes[dim] (options: {', '.join(VALID_SCHEMES)})[/dim]"
FORMULA_HELP = f"Closed form to evaluate, repeatable[dim] (options: {', '.join(VALID_FORMULAS)})[/dim]"
