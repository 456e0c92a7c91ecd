X = 'x'
Y = 'y'
Z = 'z'
AXES = [X, Y, Z]

# Slice-wise voxelization
DEFAULT_TAU = 0.1
DEFAULT_MARGIN = 3
PRUNED_VALUE_BOUND = 1e-12
ON_PLANE_EPS = 1e-6

# Parametric model
DEFAULT_RADIAL = 10
DEFAULT_N_C = 12
DEFAULT_N_R = 8
DEFAULT_S_LOSS = 128
DEFAULT_S_MESH = 64
MIN_RADIUS = 1e-3
SEED_VECTOR = (0.0, 0.0, 1.0)
FALLBACK_SEED_VECTOR = (0.0, 1.0, 0.0)
SEED_PARALLEL_EPS = 1e-6
DEGENERACY_EPS = 1e-9

# Losses
CENTERLINE_TOLERANCE = 0.2
DICE_SMOOTHING = 1e-7

# Four-stage schedule: (lambda_cl, lambda_e, lambda_vox, lambda_reg), trainable group
CENTERLINE = 'centerline'
RADIUS = 'radius'
ADJUSTMENTS = 'adjustments'
PARAM_GROUPS = [CENTERLINE, RADIUS, ADJUSTMENTS]

STAGE_WEIGHTS = {
    1: (1.0, 100.0, 0.0, 10.0),
    2: (0.0, 0.0, 1.0, 0.0),
    3: (0.0, 100.0, 1.0, 5.0),
    4: (0.0, 0.0, 1.0, 0.0),
}
STAGE_TRAINABLE = {
    1: (CENTERLINE,),
    2: (RADIUS,),
    3: (CENTERLINE,),
    4: (ADJUSTMENTS,),
}
STAGE_NAMES = {
    1: 'preliminary centerline fit',
    2: 'radius fit',
    3: 'centerline correction',
    4: 'radial adjustment',
}
DEFAULT_ITERATIONS = (500, 300, 300, 300)
DEFAULT_LEARNING_RATES = (0.5, 0.1, 0.1, 0.1)
DEFAULT_STAGES = (True, True, True, False)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
DIVERGENCE_FACTOR = 10.0
DIVERGENCE_FLOOR = 1e-3
LOG_EVERY = 50

# Finite differences
DEFAULT_FD_STEP = 1e-3
FD_REL_TOL = 1e-2
FD_ABS_TOL = 1e-4
FD_PASS_FRACTION = 0.99

# Exact SDF oracle
RAY_EPS = 1e-7
RAY_RETRIES = 8

SYNTH_KINDS = ['straight', 'arc', 'helix', 'varying_radius', 'elliptic']
PARAMS_VERSION = 1

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_DIVERGED = 2
