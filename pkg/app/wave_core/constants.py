STATIC_KINDS = ("square_well", "harmonic", "tabulated")

PERTURBATION_KINDS = ("none", "dipole_pulse", "dipole_periodic")

DAMPING_KINDS = ("radiation", "kerr")

INITIAL_KINDS = ("eigenstate", "superposition", "gaussian")

# Accepted `params` keys per kind (config strictness)
POTENTIAL_PARAMS = {
    "square_well": set(),
    "harmonic": {"omega"},
    "tabulated": {"values"},
}

PERTURBATION_PARAMS = {
    "none": set(),
    "dipole_pulse": {"epsilon", "t_center", "tau"},
    "dipole_periodic": {"epsilon", "omega", "t_ramp"},
}

INITIAL_PARAMS = {
    "eigenstate": {"n"},
    "superposition": {"terms"},
    "gaussian": {"center", "width", "momentum"},
}


class DEFAULTS:
    # Grid
    MIN_INTERIOR_POINTS = 8

    # Stepper
    DT = 1e-3
    FIXED_POINT_TOL = 1e-10
    MAX_FIXED_POINT_ITERS = 50
    MAX_DT_HALVINGS = 4

    # Damping
    BETA = 0.0
    DAMPING_KIND = "radiation"

    # Basis
    K_MAX = 32
    ORTHONORMALITY_TOL = 1e-10
    DEGENERACY_RTOL = 1e-9
    SIGN_CUTOFF = 1e-12

    # Time window
    T0 = 0.0
    T_FINAL = 20.0

    # Convergence detection
    POPULATION_THRESHOLD = 0.999
    POWER_THRESHOLD = 1e-8
    HOLD_TIME = 5.0

    # Output
    OUTPUT_PATH = "results"
    OBSERVER_STRIDE = 10

    # Checks
    NORMALIZATION_TOL = 1e-12
    INITIAL_TRUNCATION_TOL = 1e-6
    BALANCE_RTOL = 1e-3  # of (E_1 - E_0)
    RESIDUAL_TOL = 1e-4
    COMMUTATOR_IMAG_RTOL = 1e-12
    NEGATIVE_POWER_TOL = 1e-10

    # Alternation report
    ALTERNATION_HIGH = 0.9
    ALTERNATION_LOW = 0.1

    # Calibration: default two-state start when the base config is not a superposition
    CALIBRATION_WEIGHTS = (0.501, 0.499)
