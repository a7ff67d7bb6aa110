"""
TransH plausibility S = exp(-lambda * || P(h) + d_r - P(b) ||), where P projects onto the
hyperplane with unit normal w_r.

`transh_score` is the public single-triple form; `score_batch` evaluates a batch with
raw normals and returns analytic gradients for graph training.
"""
from __future__ import annotations

import logging
from typing import NamedTuple

import numpy as np

from skillgraph.constants.skillgraph_constants import UNIT_NORM_TOLERANCE

logger = logging.getLogger(__name__)


class ScoreGradients(NamedTuple):
    score: np.ndarray
    head: np.ndarray
    tail: np.ndarray
    normal: np.ndarray
    translation: np.ndarray


def project(vector, normal):
    """Component of `vector` (row-wise) lying in the hyperplane with normal `normal`."""
    return vector - np.sum(vector * normal, axis=-1, keepdims=True) * normal


def transh_score(head, normal, translation, tail, lam):
    head = np.asarray(head, dtype=np.float64)
    tail = np.asarray(tail, dtype=np.float64)
    normal = np.asarray(normal, dtype=np.float64)
    norm = np.linalg.norm(normal)
    if norm == 0:
        raise ValueError("Relation normal is the zero vector")
    if abs(norm - 1.0) > UNIT_NORM_TOLERANCE:
        logger.warning("Relation normal has norm %.6g, normalizing", norm)
        normal = normal / norm
    residual = project(head, normal) + np.asarray(translation, dtype=np.float64) - project(tail, normal)
    return float(np.exp(-lam * np.linalg.norm(residual)))


def score_batch(heads, normals, translations, tails, lam):
    """
    Row-wise scores and gradients dS/d(head, tail, normal, translation). Normals are used
    as given; training renormalizes them after each step.
    """
    x = heads - tails
    wx = np.sum(normals * x, axis=1, keepdims=True)
    u = x - wx * normals + translations
    distance = np.linalg.norm(u, axis=1, keepdims=True)
    score = np.exp(-lam * distance)

    # dS/du; zero at the (measure-zero) point u = 0
    safe = np.where(distance > 0, distance, 1.0)
    g = np.where(distance > 0, -lam * score * u / safe, 0.0)
    wg = np.sum(normals * g, axis=1, keepdims=True)
    dx = g - wg * normals
    d_normal = -(wg * x + wx * g)
    return ScoreGradients(score[:, 0], dx, -dx, d_normal, g)
