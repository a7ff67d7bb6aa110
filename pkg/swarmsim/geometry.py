import numpy as np

from swarmsim.constants.swarmsim_constants import ZERO_SPEED


def displacement(origin, target, env):
    """target - origin, using the minimum image in a periodic arena."""
    delta = np.asarray(target, dtype=np.float64) - np.asarray(origin, dtype=np.float64)
    if env.periodic:
        delta = delta - env.L * np.round(delta / env.L)
    return delta


def pairwise_displacements(positions, env):
    """delta[i, j] = p_j - p_i for an (n, 2) position array."""
    delta = positions[np.newaxis, :, :] - positions[:, np.newaxis, :]
    if env.periodic:
        delta = delta - env.L * np.round(delta / env.L)
    return delta


def unit(vector):
    norm = np.linalg.norm(vector)
    if norm < ZERO_SPEED:
        return np.zeros_like(vector, dtype=np.float64)
    return np.asarray(vector, dtype=np.float64) / norm
