"""
tristeer - Configuration

Numerical constants and defaults for the steering planner.
Values are grouped by the stage of the construction that reads them.
"""

# =============================================================================
# Integration
# =============================================================================

# Adaptive RK45 tolerances
ABS_TOL = 1e-9
REL_TOL = 1e-9

# Fixed-step RK4 default step
RK4_STEP = 1e-3

# State norm at which a trajectory is declared blown up
GUARD_RADIUS = 1e6
GUARD_MARGIN = 1e-6        # event fires at GUARD_RADIUS * (1 + margin)

# Central finite differences: step = FD_STEP * max(1, |x|)
FD_STEP = 1e-6

# =============================================================================
# System Validation
# =============================================================================

VALIDATION_PROBES = 16
VALIDATION_SPREAD = 2.0    # std-dev of random probe points

# =============================================================================
# Regular Chain Search
# =============================================================================

RANK_MARGIN_MIN = 1e-6
ANCHOR_SAMPLES_PER_RADIUS = 64
ANCHOR_ATTEMPTS = 12       # radii 2^0 .. 2^(attempts-1)
ANCHOR_CHAIN_TOL = 1e-10

# =============================================================================
# Implicit Solver (phi)
# =============================================================================

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 50
TRUST_RADIUS = 10.0
LINE_SEARCH_HALVINGS = 30
SINGULAR_VALUE_COLLAPSE = 1e-8

# =============================================================================
# LTV Steering
# =============================================================================

LTV_GRID_INTERVALS = 64
LTV_SUBSTEPS = 4           # RK4 substeps per grid interval
GRAMIAN_EIG_MIN = 1e-10
BASIS_ENDPOINT_TOL = 1e-6

# =============================================================================
# Tracker
# =============================================================================

DELTA_START = 0.1
DELTA_HALVINGS = 10
HYSTERESIS = 0.1
DWELL_FRACTION = 1e-4      # dwell floor = DWELL_FRACTION * (T - t1)
TRACKER_STEPS = 256        # nominal backward steps over [t1, T]
SEARCH_SAMPLES_PER_RADIUS = 128
SEARCH_MAX_EXPONENT = 20

# =============================================================================
# Smoothing
# =============================================================================

RAMP_MIN_WIDTH = 1e-12
SPLINE_START_CELLS = 4
SPLINE_MAX_CELLS = 256
SPLINE_SAMPLES_PER_CELL = 16
FAMILY_SAMPLE_INTERVALS = 64
DELTA1_FRACTION = 0.01     # delta_1 = fraction * eps_2
BUDGET_FRACTION = 0.25     # Delta_1 = fraction * eps_2
BUDGET_HALVINGS = 8

# =============================================================================
# Shooting
# =============================================================================

RHO = 0.4
EPS2_RATIO = 1.0 - RHO     # eps_2 = (1 - rho) * eps_1
EPS1_START = 0.05
EPS1_MAX = 4.0
EPS1_MIN = 1e-6
FIXED_POINT_ITERS = 20
SHOOT_NEWTON_ITERS = 30
SHOOT_TOL = 1e-8
LAMBDA_FD_STEP = 1e-5
SIGMA_PROBES = 32
SIGMA_MAX_LEVEL = 40
SIGMA_RETRIES = 3
STAGE_ENDPOINT_TOL = 1e-6

# =============================================================================
# Planner
# =============================================================================

PLAN_TOL = 1e-4
DEFAULT_SEED = 0
SEED_ENV_VAR = "TRISTEER_SEED"

# =============================================================================
# Perturbation
# =============================================================================

PERTURB_TOL = 1e-3
PERTURB_MAX_ROUNDS = 25

# =============================================================================
# CLI Output
# =============================================================================

CSV_DIGITS = 17
SWEEP_LEVELS = 4

# =============================================================================
# Bench
# =============================================================================

BENCH_WORKERS = 4
