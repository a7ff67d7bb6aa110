from __future__ import annotations

import numpy as np

from numcore.constants.numcore_constants import INIT_SCHEME_CHOICES, ORTHOGONAL, UNIFORM_SCALED, ZEROS
from numcore.network import NetWeights


def orthogonal_matrix(shape, rng, gain=1.0):
    """
    QR-based orthogonal matrix. Columns are orthonormal when rows >= cols,
    rows are orthonormal otherwise.
    """
    rows, cols = shape
    gaussian = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(gaussian)
    # sign fix so diag(r) is non-negative
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
    if rows < cols:
        q = q.T
    return gain * q


def uniform_scaled_matrix(shape, rng):
    fan_out, fan_in = shape
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def init_weights(spec, scheme=UNIFORM_SCALED, seed=0):
    if scheme not in dict(INIT_SCHEME_CHOICES):
        raise ValueError(f"Unknown init scheme {scheme!r}")

    rng = np.random.default_rng(seed)
    weights = []
    for shape in spec.layer_shapes:
        if scheme == ORTHOGONAL:
            weights.append(orthogonal_matrix(shape, rng))
        elif scheme == ZEROS:
            weights.append(np.zeros(shape))
        else:
            weights.append(uniform_scaled_matrix(shape, rng))
    biases = [np.zeros(fan_out) for fan_out, _ in spec.layer_shapes]
    return NetWeights(weights, biases)
