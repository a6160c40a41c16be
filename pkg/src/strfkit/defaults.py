"""Central table of numerical defaults.

Every constant a CLI run depends on lives here so `strfkit --show-defaults`
can print the full set and manifests can record them.
"""

# mel front-end
N_MELS = 64
F_MIN_HZ = 0.0
F_MAX_HZ = 8000.0
WINDOW_LENGTH_S = 0.025
HOP_LENGTH_S = 0.010
LOG_FLOOR = 1e-10
NORM_EPSILON = 1e-5

# kernel grid (9 mel channels x 1.11 s of context at 100 frames/s)
GRID_N_TIME = 111
GRID_N_FREQ = 9

# Gabor parameter bounds
SIGMA_MIN = 0.1
F_MAX_CYC = 0.5 * 2.0 ** 0.5  # per-axis Nyquist reachable at any orientation

# modulation-plane descriptors
DELTA_T_HZ = 16.0
DELTA_F_CPO = 0.08
KDE_GRID_SIZE = 64
N_BOOTSTRAP = 100

# optimal transport
SINKHORN_LAMBDA = 1e-3
SINKHORN_MAX_ITER = 10000
SINKHORN_TOL = 1e-9

# training
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
DIVERGENCE_CEILING = 1e6


def as_dict():
    """All defaults as a flat name -> value mapping."""
    return {
        k: v
        for k, v in globals().items()
        if k.isupper() and not k.startswith("_")
    }
