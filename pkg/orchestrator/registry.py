"""
Skill registry: skill directories under `<root>/skills/<id>/`, indexed by the
RegisteredSkill table with per-file sha256 hashes and parent provenance.
"""
from __future__ import annotations

import hashlib
import logging
import shutil
from dataclasses import replace
from pathlib import Path

from django.db import transaction

from marl.constants.marl_constants import FINE_TUNED, TRAINED
from marl.exceptions import CorruptSkillRecord
from marl.records import SkillRecord
from orchestrator.constants.orchestrator_constants import HASH_CHUNK, REGISTRY_SKILLS_DIR
from orchestrator.exceptions import RegistryIntegrityError, UnresolvedSkill
from orchestrator.models import RegisteredSkill, SkillRegistry

logger = logging.getLogger(__name__)


def open_registry(root, create=True):
    """Registry row for `root`; creates the directory and the row unless create is False."""
    root = Path(root).resolve()
    if not create:
        if not root.is_dir():
            raise FileNotFoundError(f"Registry directory {root} does not exist")
        return SkillRegistry.objects.get(root=str(root))
    (root / REGISTRY_SKILLS_DIR).mkdir(parents=True, exist_ok=True)
    registry, created = SkillRegistry.objects.get_or_create(root=str(root))
    if created:
        logger.info("Created skill registry at %s", root)
    return registry


def file_sha256(path):
    digest = hashlib.sha256()
    with Path(path).open('rb') as handle:
        for chunk in iter(lambda: handle.read(HASH_CHUNK), b''):
            digest.update(chunk)
    return digest.hexdigest()


def directory_hashes(directory):
    directory = Path(directory)
    return {path.name: file_sha256(path) for path in sorted(directory.iterdir()) if path.is_file()}


def fresh_skill_id(registry, base):
    """`base` if unused in the registry, else the first free `base-2`, `base-3`, ..."""
    taken = set(registry.skills.values_list('skill_id', flat=True))
    if base not in taken:
        return base
    n = 2
    while f"{base}-{n}" in taken:
        n += 1
    return f"{base}-{n}"


@transaction.atomic
def registry_add(registry, record, skill_id=None, parent_id=None):
    """
    Copy `record` into the registry and index it. An explicit `skill_id` must be unused;
    otherwise the record's own id is made unique. With `parent_id` the skill is recorded
    as fine-tuned from that registered skill.
    """
    if skill_id is not None:
        if registry.skills.filter(skill_id=skill_id).exists():
            raise ValueError(f"Skill {skill_id!r} is already registered")
    else:
        skill_id = fresh_skill_id(registry, record.skill_id)

    parent = registry.skills.get(skill_id=parent_id) if parent_id else None
    if parent is not None and parent.task_kind != record.task_kind:
        raise ValueError(f"Parent {parent_id} is a {parent.task_kind} skill, {skill_id} is {record.task_kind}")

    relative = f"{REGISTRY_SKILLS_DIR}/{skill_id}"
    directory = registry.root_path / relative
    if directory.exists():
        logger.warning("Replacing unregistered files in %s", directory)
        shutil.rmtree(directory)
    saved = replace(record, skill_id=skill_id, parent_id=parent.skill_id if parent else record.parent_id)
    saved.save(directory)

    skill = RegisteredSkill.objects.create(
        registry=registry,
        skill_id=skill_id,
        path=relative,
        env=[float(v) for v in record.env.to_vector()],
        task=[float(v) for v in record.task.to_vector()],
        r_perc=record.task.r_perc,
        task_kind=record.task_kind,
        provenance=FINE_TUNED if parent is not None else TRAINED,
        parent=parent,
        placeholder=record.placeholder,
        file_hashes=directory_hashes(directory),
    )
    logger.info("Registered %s (%s%s)", skill_id, skill.provenance, f" from {parent_id}" if parent else '')
    return skill


def registry_list(registry):
    return registry.skills.select_related('parent').all()


def registry_entries(registry):
    """Graph index entries in registration order."""
    return [skill.index_entry() for skill in registry_list(registry)]


def registry_verify(registry):
    """
    Check every registered file against its recorded hash. Returns the verified skill ids;
    raises RegistryIntegrityError naming every skill with a missing or altered file.
    """
    problems = {}
    verified = []
    for skill in registry_list(registry):
        directory = skill.directory
        if not directory.is_dir():
            problems[skill.skill_id] = f"directory {directory} is missing"
            continue
        for name, expected in sorted(skill.file_hashes.items()):
            path = directory / name
            if not path.is_file():
                problems[skill.skill_id] = f"file {name} is missing"
                break
            if file_sha256(path) != expected:
                problems[skill.skill_id] = f"hash mismatch in {name}"
                break
        else:
            verified.append(skill.skill_id)
    if problems:
        raise RegistryIntegrityError(problems)
    logger.info("Verified %d skills in %s", len(verified), registry.root)
    return verified


def registry_gc(registry, dry_run=True):
    """
    Paths under the skills directory that no registered skill references: unknown skill
    directories and stray files inside known ones. Deleted unless `dry_run`.
    """
    known = {skill.path: set(skill.file_hashes) for skill in registry_list(registry)}
    skills_dir = registry.root_path / REGISTRY_SKILLS_DIR
    unreferenced = []
    if skills_dir.is_dir():
        for entry in sorted(skills_dir.iterdir()):
            relative = f"{REGISTRY_SKILLS_DIR}/{entry.name}"
            if relative not in known:
                unreferenced.append(entry)
            elif entry.is_dir():
                unreferenced += [path for path in sorted(entry.iterdir()) if path.name not in known[relative]]

    for path in unreferenced:
        if dry_run:
            logger.info("Would remove %s", path)
        elif path.is_dir():
            shutil.rmtree(path)
            logger.info("Removed %s", path)
        else:
            path.unlink()
            logger.info("Removed %s", path)
    return unreferenced


class RegistrySkills:
    """Read-only skill id -> SkillRecord view of a registry, loading each record once."""

    def __init__(self, registry):
        self.registry = registry
        self._cache = {}

    def __contains__(self, skill_id):
        return skill_id in self._cache or self.registry.skills.filter(skill_id=skill_id).exists()

    def __getitem__(self, skill_id):
        if skill_id not in self._cache:
            try:
                skill = self.registry.skills.get(skill_id=skill_id)
            except RegisteredSkill.DoesNotExist:
                raise UnresolvedSkill(f"Skill {skill_id!r} is not in registry {self.registry.root}") from None
            try:
                self._cache[skill_id] = SkillRecord.load(skill.directory)
            except CorruptSkillRecord as e:
                raise UnresolvedSkill(f"Skill {skill_id!r}: {e}") from e
        return self._cache[skill_id]
