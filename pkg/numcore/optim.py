from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np

from numcore.constants.numcore_constants import (
    ADAM, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON, OPTIMIZER_CHOICES, SGD,
)
from numcore.exceptions import NonFiniteParameters, ShapeMismatch
from numcore.network import NetWeights


@dataclass
class OptimizerState:
    kind: str
    learning_rate: float
    step: int = 0
    first_moments: Optional[List[np.ndarray]] = None
    second_moments: Optional[List[np.ndarray]] = None
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    epsilon: float = ADAM_EPSILON

    def __post_init__(self):
        if self.kind not in dict(OPTIMIZER_CHOICES):
            raise ValueError(f"Unknown optimizer {self.kind!r}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate!r}")

    def copy(self):
        return replace(
            self,
            first_moments=None if self.first_moments is None else [m.copy() for m in self.first_moments],
            second_moments=None if self.second_moments is None else [m.copy() for m in self.second_moments],
        )


def _as_list(params):
    if isinstance(params, NetWeights):
        return params.parameters()
    return [np.asarray(p, dtype=np.float64) for p in params]


def _rebuild(template, params):
    if isinstance(template, NetWeights):
        return NetWeights.from_parameters(params)
    return params


def make_optimizer(kind, learning_rate, parameters):
    params = _as_list(parameters)
    if kind == ADAM:
        return OptimizerState(
            kind=kind,
            learning_rate=learning_rate,
            first_moments=[np.zeros_like(p) for p in params],
            second_moments=[np.zeros_like(p) for p in params],
        )
    return OptimizerState(kind=kind, learning_rate=learning_rate)


def optimizer_step(opt, weights, gradients):
    """
    One functional update. Returns (new weights, new optimizer state); the inputs
    are left untouched. `weights` is either NetWeights or a list of arrays and the
    result has the same form.
    """
    params = _as_list(weights)
    grads = _as_list(gradients)
    if len(params) != len(grads):
        raise ShapeMismatch(f"{len(params)} parameter arrays but {len(grads)} gradient arrays")
    for index, (param, grad) in enumerate(zip(params, grads)):
        if param.shape != grad.shape:
            raise ShapeMismatch(f"Parameter {index}: shape {param.shape} vs gradient {grad.shape}")

    step = opt.step + 1
    lr = opt.learning_rate

    if opt.kind == SGD:
        updated = [p - lr * g for p, g in zip(params, grads)]
        new_state = replace(opt, step=step)
    else:
        if opt.first_moments is None or len(opt.first_moments) != len(params) or any(
            m.shape != p.shape for m, p in zip(opt.first_moments, params)
        ):
            raise ShapeMismatch("Adam moments do not match parameter shapes")
        first = [opt.beta1 * m + (1.0 - opt.beta1) * g for m, g in zip(opt.first_moments, grads)]
        second = [opt.beta2 * v + (1.0 - opt.beta2) * g * g for v, g in zip(opt.second_moments, grads)]
        first_correction = 1.0 - opt.beta1 ** step
        second_correction = 1.0 - opt.beta2 ** step
        updated = [
            p - lr * (m / first_correction) / (np.sqrt(v / second_correction) + opt.epsilon)
            for p, m, v in zip(params, first, second)
        ]
        new_state = replace(opt, step=step, first_moments=first, second_moments=second)

    if not all(np.all(np.isfinite(p)) for p in updated):
        raise NonFiniteParameters(f"Non-finite parameters after optimizer step {step}")

    return _rebuild(weights, updated), new_state


def soft_update(target, online, tau):
    """Polyak averaging: target <- tau * online + (1 - tau) * target."""
    params = [tau * o + (1.0 - tau) * t for t, o in zip(_as_list(target), _as_list(online))]
    return _rebuild(target, params)
