"""
Sample library for graph training.

Per skill and per head entity (its environment and its task):
  positive  (head, r_head->s, skill)
  negative  (head, r_other->s, skill)               relation swap, always kept
            (task, r_t->s, cross-kind skill)        wrong tail
            (head, r_head->s, other same-kind entity)  entity as tail
  soft      (other same-kind entity, r_head->s, skill) with its similarity delta
Only feature vectors and skill identities are read, never policy weights.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from typing import List, Union

import numpy as np
from django.conf import settings

from skillgraph.constants.skillgraph_constants import (
    ENV_TO_SKILL, ENVIRONMENT, LIBRARY_ENVIRONMENTS, LIBRARY_TASKS, NEGATIVE, POSITIVE, RELATION_FOR_KIND, SOFT,
    TASK, TASK_TO_SKILL,
)
from skillgraph.features import EntityFeature, delta_weights, similarity_delta
from swarmsim.features import EnvFeature, TaskFeature

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SkillFact:
    skill_id: str
    env: EnvFeature
    task: TaskFeature

    @classmethod
    def from_record(cls, record):
        return cls(record.skill_id, record.env, record.task)

    @property
    def env_entity(self):
        return EntityFeature.from_env(self.env)

    @property
    def task_entity(self):
        return EntityFeature.from_task(self.task)


@dataclass(frozen=True)
class Triple:
    head: EntityFeature
    relation: str
    tail: Union[int, EntityFeature]  # skill row, or a corrupting entity
    kind: str
    delta: float = 0.0

    @property
    def tail_is_skill(self):
        return not isinstance(self.tail, EntityFeature)

    @property
    def target(self):
        """Target plausibility; for soft samples an upper bound."""
        if self.kind == POSITIVE:
            return 1.0
        if self.kind == NEGATIVE:
            return 0.0
        return 1.0 - self.delta


def reference_facts():
    """The 32-skill library: every subtask under both reference environments."""
    facts = []
    for env_name, (y, length) in LIBRARY_ENVIRONMENTS:
        for task_name, values in LIBRARY_TASKS:
            facts.append(SkillFact(f"{task_name}_{env_name}", EnvFeature(y, length), TaskFeature.from_values(values)))
    return facts


def _unique(entities):
    seen = []
    for entity in entities:
        if entity not in seen:
            seen.append(entity)
    return seen


def build_samples(facts, max_negatives=None, flocking_profile=None, task_profiles=None, env_weights=None, seed=0):
    """
    Enumerate the sample library in fact order. When a positive has more than
    `max_negatives` corruptions, the relation swap is kept and the rest are a seeded
    subsample.
    """
    facts = list(facts)
    if not facts:
        raise ValueError("Cannot build samples from an empty library")
    if len(facts) == 1:
        logger.warning("Library holds a single skill: only positives and relation swaps are built")
    max_negatives = max_negatives or settings.SGSWARM['MAX_NEGATIVES_PER_POSITIVE']
    rng = np.random.default_rng(seed)

    entities = {
        ENVIRONMENT: _unique(fact.env_entity for fact in facts),
        TASK: _unique(fact.task_entity for fact in facts),
    }
    swapped = {ENV_TO_SKILL: TASK_TO_SKILL, TASK_TO_SKILL: ENV_TO_SKILL}

    samples: List[Triple] = []
    for index, fact in enumerate(facts):
        for head in (fact.env_entity, fact.task_entity):
            relation = RELATION_FOR_KIND[head.kind]
            samples.append(Triple(head, relation, index, POSITIVE))

            corruptions = []
            if head.kind == TASK:
                corruptions += [
                    Triple(head, relation, other, NEGATIVE)
                    for other, other_fact in enumerate(facts) if other_fact.task.kind != fact.task.kind
                ]
            corruptions += [Triple(head, relation, entity, NEGATIVE) for entity in entities[head.kind] if entity != head]
            if len(corruptions) > max_negatives - 1:
                keep = np.sort(rng.choice(len(corruptions), size=max_negatives - 1, replace=False))
                corruptions = [corruptions[i] for i in keep]
            samples.append(Triple(head, swapped[relation], index, NEGATIVE))
            samples.extend(corruptions)

            weights = delta_weights(head, flocking_profile, task_profiles, env_weights)
            for other in entities[head.kind]:
                if other == head or (head.kind == TASK and other.task_kind != head.task_kind):
                    continue
                samples.append(Triple(other, relation, index, SOFT, similarity_delta(head, other, weights)))

    counts = Counter(sample.kind for sample in samples)
    logger.info("Built %d samples from %d skills: %d positive, %d negative, %d soft", len(samples), len(facts),
                counts[POSITIVE], counts[NEGATIVE], counts[SOFT])
    return samples
