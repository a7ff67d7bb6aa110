"""
Graph training: mean of (S-1)^2 over positives, S^2 over negatives and
ReLU(S - 1 + delta) over soft samples, minimized with Adam through both encoders,
the skill embeddings and the relation parameters.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import List

import numpy as np
from django.conf import settings

from numcore.constants.numcore_constants import ADAM, RELATIVE_ERROR_FLOOR
from numcore.exceptions import NonFiniteParameters
from numcore.gradcheck import finite_difference_gradient, relative_error
from numcore.network import backward, forward_with_cache
from numcore.optim import make_optimizer, optimizer_step
from skillgraph.constants.skillgraph_constants import ENVIRONMENT, NEGATIVE, POSITIVE, RELATIONS, SOFT, TASK
from skillgraph.exceptions import GraphTrainingDiverged
from skillgraph.scoring import score_batch

logger = logging.getLogger(__name__)

SOFT_MARGIN = 0.05


@dataclass
class GraphLoss:
    value: float
    gradients: List[np.ndarray]
    scores: np.ndarray


@dataclass
class GraphQuality:
    positive_above: float
    negative_below: float
    soft_within: float
    positives: int
    negatives: int
    softs: int

    def as_dict(self):
        return dict(self.__dict__)


class _Encoded:
    """Encoder outputs for every entity appearing in a batch of samples."""

    def __init__(self, model, samples):
        self.rows = {ENVIRONMENT: [], TASK: []}
        self.head_slots = [self._slot(s.head) for s in samples]
        self.tail_slots = [None if s.tail_is_skill else self._slot(s.tail) for s in samples]
        self.outputs, self.caches, self.inputs = {}, {}, {}
        for kind, spec, weights in (
            (ENVIRONMENT, model.env_spec, model.env_encoder),
            (TASK, model.task_spec, model.task_encoder),
        ):
            inputs = np.array(self.rows[kind], dtype=np.float64).reshape(len(self.rows[kind]), spec.input_dim)
            self.inputs[kind] = inputs
            if len(inputs):
                self.outputs[kind], self.caches[kind] = forward_with_cache(spec, weights, inputs)
            else:
                self.outputs[kind], self.caches[kind] = np.zeros((0, spec.output_dim)), None

    def _slot(self, entity):
        rows = self.rows[entity.kind]
        rows.append(entity.values)
        return entity.kind, len(rows) - 1

    def vector(self, slot):
        kind, row = slot
        return self.outputs[kind][row]


def _forward(model, samples):
    encoded = _Encoded(model, samples)
    heads = np.array([encoded.vector(slot) for slot in encoded.head_slots])
    tails = np.array([
        model.skill_embeddings[sample.tail] if slot is None else encoded.vector(slot)
        for sample, slot in zip(samples, encoded.tail_slots)
    ])
    relations = np.array([RELATIONS.index(sample.relation) for sample in samples])
    result = score_batch(heads, model.normals[relations], model.translations[relations], tails, model.lam)
    return encoded, relations, result


def score_samples(model, samples):
    if not samples:
        return np.zeros(0)
    return _forward(model, samples)[2].score


def graph_loss_and_gradients(model, samples):
    """Mean loss over `samples` and its gradient for every array in model.parameters()."""
    size = len(samples)
    encoded, relations, result = _forward(model, samples)
    scores = result.score
    kinds = np.array([sample.kind for sample in samples])
    deltas = np.array([sample.delta for sample in samples])
    positive, negative, soft = kinds == POSITIVE, kinds == NEGATIVE, kinds == SOFT

    hinge = scores - 1.0 + deltas
    per_sample = np.where(positive, (scores - 1.0) ** 2, np.where(negative, scores ** 2, np.maximum(hinge, 0.0)))
    d_score = np.where(positive, 2.0 * (scores - 1.0), np.where(negative, 2.0 * scores, (hinge > 0) * 1.0))
    d_score = (d_score / size)[:, None]

    d_head = result.head * d_score
    d_tail = result.tail * d_score

    output_grads = {kind: np.zeros_like(output) for kind, output in encoded.outputs.items()}
    for i, (kind, row) in enumerate(encoded.head_slots):
        output_grads[kind][row] += d_head[i]
    embedding_grad = np.zeros_like(model.skill_embeddings)
    for i, (sample, slot) in enumerate(zip(samples, encoded.tail_slots)):
        if slot is None:
            embedding_grad[sample.tail] += d_tail[i]
        else:
            output_grads[slot[0]][slot[1]] += d_tail[i]

    normal_grad = np.zeros_like(model.normals)
    translation_grad = np.zeros_like(model.translations)
    np.add.at(normal_grad, relations, result.normal * d_score)
    np.add.at(translation_grad, relations, result.translation * d_score)

    encoder_grads = []
    for kind, spec, weights in (
        (ENVIRONMENT, model.env_spec, model.env_encoder),
        (TASK, model.task_spec, model.task_encoder),
    ):
        if encoded.caches[kind] is None:
            encoder_grads += weights.zeros_like().parameters()
        else:
            back = backward(spec, weights, encoded.inputs[kind], output_grads[kind], encoded.caches[kind])
            encoder_grads += back.parameter_gradients.parameters()

    gradients = encoder_grads + [embedding_grad, normal_grad, translation_grad]
    return GraphLoss(float(per_sample.mean()), gradients, scores)


def train_graph(model, samples, iterations=None, batch=None, seed=0, learning_rate=None):
    """
    Minibatch Adam for `iterations` steps; relation normals are put back on the unit
    sphere after each step. Returns (trained model, per-iteration losses).
    """
    config = settings.SGSWARM
    iterations = config['GRAPH_ITERATIONS'] if iterations is None else iterations
    batch = batch or config['GRAPH_BATCH']
    learning_rate = learning_rate or config['GRAPH_LEARNING_RATE']
    if not samples:
        raise ValueError("Cannot train a graph without samples")
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")

    rng = np.random.default_rng(seed)
    current = model.copy()
    optimizer = make_optimizer(ADAM, learning_rate, current.parameters())
    losses = []
    for iteration in range(iterations):
        rows = rng.choice(len(samples), size=min(batch, len(samples)), replace=False)
        loss = graph_loss_and_gradients(current, [samples[i] for i in rows])
        if not math.isfinite(loss.value):
            raise GraphTrainingDiverged(f"Graph loss is {loss.value} at iteration {iteration}")
        try:
            params, optimizer = optimizer_step(optimizer, current.parameters(), loss.gradients)
        except NonFiniteParameters as e:
            raise GraphTrainingDiverged(f"Iteration {iteration}: {e}") from e
        current = current.with_parameters(params).normalized()
        losses.append(loss.value)
        if (iteration + 1) % 50 == 0 or iteration + 1 == iterations:
            logger.info("graph iteration %d/%d loss %.5f", iteration + 1, iterations, loss.value)
        else:
            logger.debug("graph iteration %d loss %.5f", iteration + 1, loss.value)

    return replace(current, trained=True), losses


def graph_quality(model, samples, positive_threshold=0.95, negative_threshold=0.10, soft_margin=SOFT_MARGIN):
    """Fractions of positives above, negatives below and softs within their target."""
    scores = score_samples(model, samples)
    kinds = np.array([sample.kind for sample in samples])
    targets = np.array([sample.target for sample in samples])

    def fraction(mask, hits):
        return float(hits[mask].mean()) if mask.any() else float('nan')

    positive, negative, soft = kinds == POSITIVE, kinds == NEGATIVE, kinds == SOFT
    return GraphQuality(
        positive_above=fraction(positive, scores > positive_threshold),
        negative_below=fraction(negative, scores < negative_threshold),
        soft_within=fraction(soft, scores <= targets + soft_margin),
        positives=int(positive.sum()),
        negatives=int(negative.sum()),
        softs=int(soft.sum()),
    )


def gradient_check(model, samples, epsilon=1e-6):
    """Relative error between graph_loss_and_gradients and central differences."""
    analytic = graph_loss_and_gradients(model, samples).gradients
    probe = model.copy()
    params = probe.parameters()

    def loss(arrays):
        return graph_loss_and_gradients(probe.with_parameters(arrays), samples).value

    numeric = finite_difference_gradient(loss, params, epsilon)
    return relative_error(analytic, numeric)


def directional_gradient_check(model, samples, directions=4, epsilon=1e-6, seed=0):
    """
    Relative errors of the analytic directional derivative against central differences
    along `directions` random unit directions in parameter space. Two loss evaluations
    per direction, so it stays cheap on full-size graphs.
    """
    rng = np.random.default_rng(seed)
    params = model.parameters()
    gradients = graph_loss_and_gradients(model, samples).gradients
    errors = []
    for _ in range(directions):
        steps = [rng.standard_normal(p.shape) for p in params]
        norm = math.sqrt(sum(float(np.sum(s * s)) for s in steps))
        steps = [s / norm for s in steps]
        analytic = sum(float(np.sum(g * s)) for g, s in zip(gradients, steps))
        plus = graph_loss_and_gradients(model.with_parameters([p + epsilon * s for p, s in zip(params, steps)]),
                                        samples).value
        minus = graph_loss_and_gradients(model.with_parameters([p - epsilon * s for p, s in zip(params, steps)]),
                                         samples).value
        numeric = (plus - minus) / (2.0 * epsilon)
        errors.append(abs(analytic - numeric) / max(abs(analytic), abs(numeric), RELATIVE_ERROR_FLOOR))
    return errors
