"""
On-disk graph bundle:

    env_encoder.netjson/.netbin, task_encoder.netjson/.netbin   encoder nets
    embeddings.bin    skill embeddings, one row per skills.index entry
    relations.bin     normals then translations, RELATIONS order
    skills.index      JSON list of skill id, feature vectors and record path
    graph.meta        lambda, thresholds, similarity weights, format version
    loss.csv          per-iteration training loss
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

from django.conf import settings

from numcore.exceptions import NumcoreError
from numcore.storage import load_net, read_float_array, save_net, write_float_array
from skillgraph.constants.skillgraph_constants import (
    EMBEDDINGS_FILE, ENV_ENCODER_STEM, GRAPH_FORMAT_VERSION, GRAPH_META_FILE, LOSS_FIELDS, LOSS_FILE, RELATIONS,
    RELATIONS_FILE, SKILLS_INDEX_FILE, TASK_ENCODER_STEM,
)
from skillgraph.exceptions import CorruptGraphBundle, UnknownSkill
from skillgraph.model import GraphModel, init_graph_model
from skillgraph.samples import SkillFact, build_samples
from skillgraph.training import graph_quality, train_graph
from swarmsim.features import EnvFeature, TaskFeature

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SkillIndexEntry:
    skill_id: str
    env: EnvFeature
    task: TaskFeature
    path: Optional[str] = None

    @classmethod
    def from_record(cls, record, path=None):
        return cls(record.skill_id, record.env, record.task, str(path) if path is not None else None)

    def fact(self):
        return SkillFact(self.skill_id, self.env, self.task)

    def as_dict(self):
        return {
            'skill_id': self.skill_id,
            'env': [float(v) for v in self.env.to_vector()],
            'task': [float(v) for v in self.task.to_vector()],
            'task_kind': self.task.kind,
            'path': self.path,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data['skill_id'], EnvFeature.from_values(data['env']), TaskFeature.from_values(data['task']),
                   data.get('path'))


@dataclass
class GraphBundle:
    model: GraphModel
    entries: List[SkillIndexEntry]
    meta: dict = field(default_factory=dict)
    losses: List[float] = field(default_factory=list)

    def entry(self, skill_id):
        for entry in self.entries:
            if entry.skill_id == skill_id:
                return entry
        raise UnknownSkill(skill_id)

    def facts(self):
        return [entry.fact() for entry in self.entries]

    def kind_skill_ids(self, kind):
        """Ids of the skills whose task is of `kind`; dispatch never mixes kinds."""
        return [entry.skill_id for entry in self.entries if entry.task.kind == kind]


def graph_meta(model, **extra):
    config = settings.SGSWARM
    meta = {
        'format_version': GRAPH_FORMAT_VERSION,
        'dim': model.dim,
        'lambda': model.lam,
        'skills': len(model.skill_ids),
        'relations': list(RELATIONS),
        'trained': model.trained,
        'alpha_high': config['ALPHA_HIGH'],
        'alpha_low': config['ALPHA_LOW'],
        'blend_cap': config['BLEND_CAP'],
        'env_delta_weights': list(config['ENV_DELTA_WEIGHTS']),
        'task_delta_weights': {k: list(v) for k, v in config['TASK_DELTA_WEIGHTS'].items()},
        'flocking_delta_profile': config['FLOCKING_DELTA_PROFILE'],
    }
    meta.update(extra)
    return meta


def save_graph(directory, bundle):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    model = bundle.model
    if [entry.skill_id for entry in bundle.entries] != model.skill_ids:
        raise ValueError("Index entries must follow the model's skill order")

    save_net(directory / ENV_ENCODER_STEM, model.env_spec, model.env_encoder)
    save_net(directory / TASK_ENCODER_STEM, model.task_spec, model.task_encoder)
    write_float_array(directory / EMBEDDINGS_FILE, model.skill_embeddings.ravel())
    write_float_array(directory / RELATIONS_FILE, [*model.normals.ravel(), *model.translations.ravel()])
    (directory / SKILLS_INDEX_FILE).write_text(
        json.dumps([entry.as_dict() for entry in bundle.entries], indent=2, sort_keys=True) + '\n'
    )
    (directory / GRAPH_META_FILE).write_text(json.dumps(bundle.meta, indent=2, sort_keys=True) + '\n')
    with (directory / LOSS_FILE).open('w', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(LOSS_FIELDS)
        for iteration, loss in enumerate(bundle.losses):
            writer.writerow([iteration, repr(loss)])
    logger.info("Saved graph bundle with %d skills to %s", len(bundle.entries), directory)
    return directory


def load_graph(directory):
    directory = Path(directory)
    try:
        meta = json.loads((directory / GRAPH_META_FILE).read_text())
        index = json.loads((directory / SKILLS_INDEX_FILE).read_text())
    except (OSError, ValueError) as e:
        raise CorruptGraphBundle(f"Cannot read graph bundle {directory}: {e}") from e
    if meta.get('format_version') != GRAPH_FORMAT_VERSION:
        raise CorruptGraphBundle(f"{directory}: unsupported graph format {meta.get('format_version')!r}")

    entries = [SkillIndexEntry.from_dict(item) for item in index]
    dim, count = meta['dim'], len(entries)
    try:
        env_spec, env_encoder, _ = load_net(directory / ENV_ENCODER_STEM)
        task_spec, task_encoder, _ = load_net(directory / TASK_ENCODER_STEM)
        embeddings = read_float_array(directory / EMBEDDINGS_FILE, count * dim).reshape(count, dim)
        relations = read_float_array(directory / RELATIONS_FILE, 2 * len(RELATIONS) * dim)
    except NumcoreError as e:
        raise CorruptGraphBundle(f"{directory}: {e}") from e
    relations = relations.reshape(2 * len(RELATIONS), dim)

    model = GraphModel(
        env_spec=env_spec,
        env_encoder=env_encoder,
        task_spec=task_spec,
        task_encoder=task_encoder,
        skill_ids=[entry.skill_id for entry in entries],
        skill_embeddings=embeddings,
        normals=relations[:len(RELATIONS)].copy(),
        translations=relations[len(RELATIONS):].copy(),
        lam=meta['lambda'],
        trained=meta.get('trained', False),
    )
    losses = []
    loss_path = directory / LOSS_FILE
    if loss_path.exists():
        with loss_path.open(newline='') as handle:
            losses = [float(row['loss']) for row in csv.DictReader(handle)]
    return GraphBundle(model, entries, meta, losses)


def build_graph(entries, dim=None, hidden_size=None, hidden_layers=None, lam=None, iterations=None, batch=None,
                learning_rate=None, flocking_profile=None, seed=0):
    """Construct samples from the index entries, train a fresh model and return the bundle."""
    config = settings.SGSWARM
    entries = list(entries)
    if not entries:
        raise ValueError("Cannot build a graph from an empty registry")
    dim = dim or config['GRAPH_DIM']
    lam = lam or config['GRAPH_LAMBDA']
    samples = build_samples([entry.fact() for entry in entries], flocking_profile=flocking_profile, seed=seed)
    model = init_graph_model(
        [entry.skill_id for entry in entries], dim, hidden_size or config['GRAPH_HIDDEN_SIZE'],
        hidden_layers or config['GRAPH_HIDDEN_LAYERS'], lam, seed,
    )
    model, losses = train_graph(model, samples, iterations, batch, seed, learning_rate)
    quality = graph_quality(model, samples)
    logger.info("Graph quality: %s", quality.as_dict())
    meta = graph_meta(
        model, seed=seed, iterations=len(losses), batch=batch or config['GRAPH_BATCH'],
        flocking_delta_profile=flocking_profile or config['FLOCKING_DELTA_PROFILE'], quality=quality.as_dict(),
    )
    return GraphBundle(model, entries, meta, losses)
