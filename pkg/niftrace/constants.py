"""
This module is used to store all relevant numerical constants.
"""

import numpy as np

PI = np.pi

# half precision #
F16_MAX = 65504.0
F32_EPS = np.float32(2.0 ** -24)  # unit roundoff
# PBRT's gamma(3), used to make the slab exit distance robust
GAMMA3 = np.float32(3.0 * 2.0 ** -24 / (1.0 - 3.0 * 2.0 ** -24))

# bvh #
SAH_BINS = 16
SAH_TRAVERSAL_COST = 1.0
SAH_INTERSECT_COST = 1.0
DEFAULT_MAX_LEAF_SIZE = 1
COMPACT_NODE_BYTES = 24
NODE32_BYTES = 32

# path tracing #
DEFAULT_MAX_DEPTH = 10
DEFAULT_ROULETTE_START_DEPTH = 3
RAY_EPSILON_SCALE = 1e-3
DEFAULT_VFOV = 40.0
T_FAR = np.float32(3.0e38)

# neural image field #
DEFAULT_FOURIER_DIM = 40
DEFAULT_HIDDEN = 128
DEFAULT_LAYERS = 4

# training #
DEFAULT_LEARNING_RATE = 0.001
DEFAULT_HUBER_DELTA = 0.001
DEFAULT_LOSS_SCALE = 16384.0
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

# file formats #
SBLOB_MAGIC = b"SBLOB\x00\x00\x01"
SBLOB_BUFFERS = ("nodes", "vertices", "indices", "spheres", "materials", "camera")
NIFW_MAGIC = b"NIFW"
NIFW_VERSION = 1

# synthetic sun #
SUN_RADIANCE = 1.0e4
SUN_DIAMETER_DEG = 0.5

# high sun spanning several pixels at desk resolution, carrying nearly all the energy
MIDDAY_SUN_RADIANCE = 2.0e4
MIDDAY_SUN_DIAMETER_DEG = 5.0
MIDDAY_SUN_ELEVATION_DEG = 70.0
MIDDAY_SKY_SCALE = 0.25
