"""
Central-difference gradient oracle used to cross-check every hand-written backward pass.
"""
from __future__ import annotations

import numpy as np

from numcore.constants.numcore_constants import FD_EPSILON, RELATIVE_ERROR_FLOOR
from numcore.network import NetWeights


def _arrays(params):
    if isinstance(params, NetWeights):
        return params.parameters()
    return list(params)


def finite_difference_gradient(loss_fn, weights, epsilon=FD_EPSILON):
    """
    Estimate d loss_fn(weights) / d weights by central differences.

    The arrays inside `weights` are perturbed in place one entry at a time and
    restored before returning; loss_fn is called with the same `weights` object.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon!r}")

    arrays = _arrays(weights)
    gradients = [np.zeros_like(array, dtype=np.float64) for array in arrays]
    for array, gradient in zip(arrays, gradients):
        for index in np.ndindex(array.shape):
            original = array[index]
            array[index] = original + epsilon
            plus = float(loss_fn(weights))
            array[index] = original - epsilon
            minus = float(loss_fn(weights))
            array[index] = original
            gradient[index] = (plus - minus) / (2.0 * epsilon)

    if isinstance(weights, NetWeights):
        return NetWeights.from_parameters(gradients)
    return gradients


def relative_error(analytic, numeric, floor=RELATIVE_ERROR_FLOOR):
    """max|a - n| / max(max|a|, max|n|, floor) over all parameter arrays."""
    a = np.concatenate([np.ravel(x) for x in _arrays(analytic)] + [np.zeros(0)])
    n = np.concatenate([np.ravel(x) for x in _arrays(numeric)] + [np.zeros(0)])
    if a.size == 0:
        return 0.0
    scale = max(np.max(np.abs(a)), np.max(np.abs(n)), floor)
    return float(np.max(np.abs(a - n)) / scale)
