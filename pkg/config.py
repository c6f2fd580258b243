"""
Configuration constants for the Entropy Estimation Tool

This module contains all configuration constants, numeric defaults and
file naming rules used throughout the application. A handful of
machine-specific settings can be overridden through environment variables
(or a .env file next to the working directory).
"""

import os

from dotenv import load_dotenv

load_dotenv()

CODE_VERSION = "1.0.0"
TOOL_NAME = "Entropy Estimation Tool"

# =============================================================================
# METRIC SPACES
# =============================================================================

TOL_METRIC = 1e-9              # Absolute tolerance for symmetry / triangle checks
EXACT_SIZE_LIMIT = 12          # Largest space handled by exhaustive cover/packing search
DENSE_LIMIT = 2048             # Larger spaces evaluate distance rows lazily
VALIDATION_FULL_LIMIT = 512    # Larger spaces get a sampled triangle check
VALIDATION_SAMPLE_ROWS = 48    # Rows (and pivots) drawn for the sampled check
MAX_REPORTED_VIOLATIONS = 20   # Violations kept verbatim in a validation report

# =============================================================================
# CURVES AND INTEGRATION
# =============================================================================

CURVE_TIME_SAMPLES = 65        # Uniform samples on [0, 1] (64 intervals)
CURVE_SUBSTEPS = 4             # Integrator steps per time-grid interval
FLOW_DT = 1e-2                 # Fixed step of the flow integrator
N_SEGMENTS = 8                 # Piecewise-constant control segments
N_CURVES = 32                  # Sampled curves per base point
SNAP_TOL = 1e-6                # Endpoint / base point snapping tolerance
CURVE_PAIR_CHUNK = 8           # Base points per vectorized chunk in curve_family
UNIFORM_BALL_DIRECTIONS = 64   # Directions probed by the convex-norm spot checks

# Quotient norms
RANK_REL_THRESHOLD = 1e-10     # Singular values below this * sigma_max are dropped
QUOTIENT_NORM_MAX_ITER = 200   # Coordinate-descent sweeps for convex norms
QUOTIENT_NORM_REL_TOL = 1e-6   # Relative improvement that stops the descent
RANGE_REL_TOL = 1e-8           # Residual tolerance for "v lies in the anchor image"

# Minkowski (Hessian) check
MINKOWSKI_STEP = 1e-4
MINKOWSKI_EIG_TOL = 1e-6       # Smallest eigenvalue that still counts as positive

# Accessibility / admissible graph
EPS_LINK = 0.1
N_PROBE = 32
R_PROBE = 1.25                 # Speed bound of the probe curves
VELOCITY_RESIDUAL_TOL = 1e-2   # Relative residual allowed when resolving finite-difference velocities

# =============================================================================
# ESTIMATOR
# =============================================================================

FIT_WINDOW_FRACTION = 0.5      # Trailing share of the grid used by the slope fit
MIN_WINDOW_POINTS = 3
SATURATION_FRACTION = 0.25     # Counts at or above this share of n are saturated
COUNT_TRUNCATION_MIN_SIZE = 4096  # Farthest-point traversal stops at the cap above this n
SLOPE_MONOTONE_TOL = 0.05      # Allowed decrease of slope when epsilon shrinks
TOL_PLATEAU_FRACTION = 0.15    # Plateau tolerance as a share of the diameter
PLATEAU_PASS_RATE = 0.95
PLATEAU_PAIR_SAMPLE = 200      # Pairs examined by plateau_check on large samples
ZERO_SLOPE_TOL = 0.05
ADDITIVITY_TOL = 0.1
EXACT_PAIR_LIMIT = 16          # Size limit for the exact count comparisons of lifts

# =============================================================================
# CLI / REPORTS
# =============================================================================

EXIT_OK = 0
EXIT_CLAIM_FAILED = 2
EXIT_CONFIG_ERROR = 3
EXIT_NUMERIC_ERROR = 4

REPORTS_BASE_DIR = os.getenv("ENTROPY_REPORTS_DIR", "reports")
RUNS_DIR = "runs"
SWEEPS_DIR = "sweeps"

MANIFEST_FILENAME = "manifest.json"
REPORT_FILENAME = "report.json"
ERRORS_FILENAME = "errors.json"
EPS_TABLE_FILENAME_TEMPLATE = "{family}_eps{index}.csv"
SWEEP_FILENAME_TEMPLATE = "sweep_{scenario}_{parameter}.csv"
JSON_FLOAT_DIGITS = 12         # Floats are rounded before serialization

# Fields of RunConfig that `sweep` accepts
SWEEPABLE_PARAMETERS = [
    'grid_size',
    'n_max',
    'r_max',
    'n_curves',
    'n_segments',
    'dt',
    'fit_window_fraction',
    'epsilon',
]

# =============================================================================
# RUNTIME (environment overrides)
# =============================================================================

N_JOBS = int(os.getenv("ENTROPY_N_JOBS", "1"))

# Logging configuration
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LOG_LEVEL = os.getenv("ENTROPY_LOG_LEVEL", "INFO")
LOG_TO_FILE = os.getenv("ENTROPY_LOG_TO_FILE", "false").lower() in ("1", "true", "yes")
LOG_DIR = os.getenv("ENTROPY_LOG_DIR", "logs")
