"""
Dense multilayer perceptrons with explicit forward and backward passes.

A network is split into an immutable description (NetSpec) and a mutable bag of
parameters (NetWeights). Every layer computes z = x W^T + b, hidden layers apply
leaky-ReLU and the last layer applies the NetSpec output activation. Inputs may be
a single vector or a batch of row vectors; gradients w.r.t. parameters are summed
over the batch.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, NamedTuple

import numpy as np

from numcore.constants.numcore_constants import (
    HIDDEN_ACTIVATION_CHOICES, LEAKY_RELU, LEAKY_RELU_SLOPE, LINEAR, OUTPUT_ACTIVATION_CHOICES, TANH,
)
from numcore.exceptions import DimensionMismatch, ShapeMismatch


@dataclass(frozen=True)
class NetSpec:
    input_dim: int
    hidden_size: int
    hidden_layers: int
    output_dim: int
    hidden_activation: str = LEAKY_RELU
    output_activation: str = LINEAR

    def __post_init__(self):
        for name in ('input_dim', 'hidden_size', 'hidden_layers', 'output_dim'):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.hidden_activation not in dict(HIDDEN_ACTIVATION_CHOICES):
            raise ValueError(f"Unsupported hidden activation {self.hidden_activation!r}")
        if self.output_activation not in dict(OUTPUT_ACTIVATION_CHOICES):
            raise ValueError(f"Unsupported output activation {self.output_activation!r}")

    @property
    def layer_shapes(self):
        """(fan_out, fan_in) of every weight matrix, input layer first."""
        sizes = [self.input_dim] + [self.hidden_size] * self.hidden_layers + [self.output_dim]
        return [(fan_out, fan_in) for fan_in, fan_out in zip(sizes[:-1], sizes[1:])]

    @property
    def parameter_count(self):
        return sum(fan_out * fan_in + fan_out for fan_out, fan_in in self.layer_shapes)

    def activation_for(self, layer_index):
        return self.output_activation if layer_index == len(self.layer_shapes) - 1 else self.hidden_activation

    def to_dict(self):
        return {
            'input_dim': self.input_dim,
            'hidden_size': self.hidden_size,
            'hidden_layers': self.hidden_layers,
            'output_dim': self.output_dim,
            'hidden_activation': self.hidden_activation,
            'output_activation': self.output_activation,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(**{key: data[key] for key in (
            'input_dim', 'hidden_size', 'hidden_layers', 'output_dim', 'hidden_activation', 'output_activation',
        )})


@dataclass
class NetWeights:
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def parameters(self):
        """Parameters in serialization order: W0, b0, W1, b1, ..."""
        params = []
        for weight, bias in zip(self.weights, self.biases):
            params.append(weight)
            params.append(bias)
        return params

    @classmethod
    def from_parameters(cls, params):
        params = list(params)
        return cls(weights=params[0::2], biases=params[1::2])

    def copy(self):
        return NetWeights([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self):
        return NetWeights([np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases])

    def flat(self):
        """Layer-major, row-major flattening."""
        return np.concatenate([np.ravel(p, order='C') for p in self.parameters()])

    @classmethod
    def from_flat(cls, spec, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != spec.parameter_count:
            raise ShapeMismatch(f"Expected {spec.parameter_count} parameters, got {flat.size}")
        weights, biases, offset = [], [], 0
        for fan_out, fan_in in spec.layer_shapes:
            weights.append(flat[offset:offset + fan_out * fan_in].reshape(fan_out, fan_in).copy())
            offset += fan_out * fan_in
            biases.append(flat[offset:offset + fan_out].copy())
            offset += fan_out
        return cls(weights, biases)

    def check_shapes(self, spec):
        shapes = spec.layer_shapes
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise ShapeMismatch(f"Expected {len(shapes)} layers, got {len(self.weights)}")
        for index, ((fan_out, fan_in), weight, bias) in enumerate(zip(shapes, self.weights, self.biases)):
            if weight.shape != (fan_out, fan_in) or bias.shape != (fan_out,):
                raise ShapeMismatch(
                    f"Layer {index}: expected W{(fan_out, fan_in)} b({fan_out},), got W{weight.shape} b{bias.shape}"
                )

    def is_finite(self):
        return all(np.all(np.isfinite(p)) for p in self.parameters())


class ForwardCache(NamedTuple):
    pre_activations: list
    activations: list
    squeeze: bool


class BackwardResult(NamedTuple):
    parameter_gradients: NetWeights
    input_gradient: np.ndarray


def _activate(z, kind):
    if kind == LEAKY_RELU:
        return np.where(z > 0, z, LEAKY_RELU_SLOPE * z)
    if kind == TANH:
        return np.tanh(z)
    return z


def _activation_slope(z, activated, kind):
    if kind == LEAKY_RELU:
        return np.where(z > 0, 1.0, LEAKY_RELU_SLOPE)
    if kind == TANH:
        return 1.0 - activated ** 2
    return np.ones_like(z)


def _as_batch(values, width, what):
    array = np.asarray(values, dtype=np.float64)
    squeeze = array.ndim == 1
    if squeeze:
        array = array[np.newaxis, :]
    if array.ndim != 2 or array.shape[1] != width:
        raise DimensionMismatch(f"{what} must have length {width}, got shape {np.shape(values)}")
    return array, squeeze


def forward_with_cache(spec, weights, inputs):
    if len(weights.weights) != len(spec.layer_shapes):
        raise ShapeMismatch(f"Weights have {len(weights.weights)} layers, spec expects {len(spec.layer_shapes)}")
    batch, squeeze = _as_batch(inputs, spec.input_dim, 'input')
    activations = [batch]
    pre_activations = []
    for index, (weight, bias) in enumerate(zip(weights.weights, weights.biases)):
        z = activations[-1] @ weight.T + bias
        pre_activations.append(z)
        activations.append(_activate(z, spec.activation_for(index)))
    output = activations[-1]
    return (output[0] if squeeze else output), ForwardCache(pre_activations, activations, squeeze)


def forward(spec, weights, inputs):
    return forward_with_cache(spec, weights, inputs)[0]


def backward(spec, weights, inputs, output_gradient, cache=None):
    if cache is None:
        _, cache = forward_with_cache(spec, weights, inputs)
    delta, _ = _as_batch(output_gradient, spec.output_dim, 'output gradient')
    if delta.shape[0] != cache.activations[0].shape[0]:
        raise DimensionMismatch(
            f"Output gradient batch {delta.shape[0]} does not match input batch {cache.activations[0].shape[0]}"
        )

    layer_count = len(weights.weights)
    grad_weights = [None] * layer_count
    grad_biases = [None] * layer_count
    for index in reversed(range(layer_count)):
        delta = delta * _activation_slope(
            cache.pre_activations[index], cache.activations[index + 1], spec.activation_for(index)
        )
        grad_weights[index] = delta.T @ cache.activations[index]
        grad_biases[index] = delta.sum(axis=0)
        delta = delta @ weights.weights[index]

    input_gradient = delta[0] if cache.squeeze else delta
    return BackwardResult(NetWeights(grad_weights, grad_biases), input_gradient)
