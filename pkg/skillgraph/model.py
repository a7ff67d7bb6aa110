from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import List

import numpy as np

from numcore.constants.numcore_constants import LINEAR, UNIFORM_SCALED
from numcore.initializers import init_weights, orthogonal_matrix
from numcore.network import NetSpec, NetWeights, forward
from skillgraph.constants.skillgraph_constants import (
    ENV_FEATURE_DIM, ENVIRONMENT, RELATIONS, TASK_FEATURE_DIM, TRANSLATION_INIT_SCALE,
)
from skillgraph.exceptions import UnknownSkill

logger = logging.getLogger(__name__)


@dataclass
class GraphModel:
    """
    Encoders for environment and task features, one embedding row per skill and the
    (normal, translation) pair of each relation in RELATIONS order.
    """
    env_spec: NetSpec
    env_encoder: NetWeights
    task_spec: NetSpec
    task_encoder: NetWeights
    skill_ids: List[str]
    skill_embeddings: np.ndarray
    normals: np.ndarray
    translations: np.ndarray
    lam: float
    trained: bool = False

    def __post_init__(self):
        if len(set(self.skill_ids)) != len(self.skill_ids):
            raise ValueError("Skill ids must be unique")
        dim = self.env_spec.output_dim
        if self.task_spec.output_dim != dim or self.skill_embeddings.shape != (len(self.skill_ids), dim):
            raise ValueError("Encoder outputs and skill embeddings must share one representation size")
        if self.normals.shape != (len(RELATIONS), dim) or self.translations.shape != (len(RELATIONS), dim):
            raise ValueError(f"Expected {len(RELATIONS)} relations of size {dim}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be > 0, got {self.lam}")

    @property
    def dim(self):
        return self.env_spec.output_dim

    def skill_index(self, skill_id):
        try:
            return self.skill_ids.index(skill_id)
        except ValueError:
            raise UnknownSkill(skill_id) from None

    def relation(self, name):
        index = RELATIONS.index(name)
        return self.normals[index], self.translations[index]

    def parameters(self):
        """Every trainable array: env encoder, task encoder, embeddings, normals, translations."""
        return (self.env_encoder.parameters() + self.task_encoder.parameters()
                + [self.skill_embeddings, self.normals, self.translations])

    def with_parameters(self, params):
        """Model sharing `params` (no copies), in parameters() order."""
        params = list(params)
        env_count = 2 * len(self.env_spec.layer_shapes)
        task_count = 2 * len(self.task_spec.layer_shapes)
        return replace(
            self,
            env_encoder=NetWeights.from_parameters(params[:env_count]),
            task_encoder=NetWeights.from_parameters(params[env_count:env_count + task_count]),
            skill_embeddings=params[-3],
            normals=params[-2],
            translations=params[-1],
        )

    def copy(self):
        return self.with_parameters([p.copy() for p in self.parameters()])

    def normalized(self):
        """Same model with every relation normal rescaled to unit length."""
        norms = np.linalg.norm(self.normals, axis=1, keepdims=True)
        return replace(self, normals=self.normals / np.where(norms > 0, norms, 1.0))


def init_graph_model(skill_ids, dim, hidden_size, hidden_layers, lam, seed=0):
    """
    Encoders get fan-in scaled uniform weights; skill embeddings and relation parameters
    start from orthogonal matrices; translations are scaled by TRANSLATION_INIT_SCALE.
    """
    rng = np.random.default_rng(seed)
    env_spec = NetSpec(ENV_FEATURE_DIM, hidden_size, hidden_layers, dim, output_activation=LINEAR)
    task_spec = NetSpec(TASK_FEATURE_DIM, hidden_size, hidden_layers, dim, output_activation=LINEAR)
    relation_rows = orthogonal_matrix((2 * len(RELATIONS), dim), rng)
    model = GraphModel(
        env_spec=env_spec,
        env_encoder=init_weights(env_spec, UNIFORM_SCALED, seed),
        task_spec=task_spec,
        task_encoder=init_weights(task_spec, UNIFORM_SCALED, seed + 1),
        skill_ids=list(skill_ids),
        skill_embeddings=orthogonal_matrix((len(skill_ids), dim), rng),
        normals=relation_rows[:len(RELATIONS)].copy(),
        translations=TRANSLATION_INIT_SCALE * relation_rows[len(RELATIONS):],
        lam=float(lam),
    )
    logger.debug("Initialized graph model: %d skills, dim %d, seed %d", len(skill_ids), dim, seed)
    return model.normalized()


def encode(model, feature):
    """Representation of one EntityFeature (or a list of same-kind features as rows)."""
    features = feature if isinstance(feature, (list, tuple)) else [feature]
    kinds = {f.kind for f in features}
    if len(kinds) != 1:
        raise ValueError("encode() takes features of a single kind")
    spec, weights = ((model.env_spec, model.env_encoder) if kinds.pop() == ENVIRONMENT
                     else (model.task_spec, model.task_encoder))
    output = forward(spec, weights, np.array([f.values for f in features], dtype=np.float64))
    return output if isinstance(feature, (list, tuple)) else output[0]
