from pathlib import Path

from django.db import models

from marl.constants.marl_constants import FINE_TUNED, PROVENANCE_CHOICES, TRAINED
from skillgraph.bundle import SkillIndexEntry
from swarmsim.constants.swarmsim_constants import TASK_KIND_CHOICES
from swarmsim.features import EnvFeature, TaskFeature


class SkillRegistry(models.Model):
    """
    One registry root directory. Skill files live on disk under the root; the rows here
    index them.
    """
    root = models.CharField(max_length=1024, unique=True)
    created = models.DateTimeField(auto_now_add=True)

    def __str__(self):
        return self.root

    @property
    def root_path(self):
        return Path(self.root)


class RegisteredSkill(models.Model):
    registry = models.ForeignKey(SkillRegistry, on_delete=models.CASCADE, related_name='skills')
    skill_id = models.CharField(max_length=128)
    # relative to the registry root
    path = models.CharField(max_length=1024)
    env = models.JSONField(default=list)
    task = models.JSONField(default=list)
    r_perc = models.FloatField(null=True, blank=True)
    task_kind = models.CharField(max_length=20, choices=TASK_KIND_CHOICES)
    provenance = models.CharField(max_length=20, choices=PROVENANCE_CHOICES, default=TRAINED)
    parent = models.ForeignKey('self', null=True, blank=True, on_delete=models.PROTECT, related_name='children')
    placeholder = models.BooleanField(default=False)
    # file name -> sha256
    file_hashes = models.JSONField(default=dict)
    created = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['registry', 'id']
        unique_together = ('registry', 'skill_id')

    def __str__(self):
        return f"{self.skill_id} ({self.provenance})"

    @property
    def directory(self):
        return self.registry.root_path / self.path

    @property
    def env_feature(self):
        return EnvFeature.from_values(self.env)

    @property
    def task_feature(self):
        task = TaskFeature.from_values(self.task)
        if not task.is_flocking and self.r_perc is not None:
            task = TaskFeature.adversarial(*self.task, r_perc=self.r_perc)
        return task

    @property
    def is_fine_tuned(self):
        return self.provenance == FINE_TUNED

    def lineage(self):
        """This skill followed by its parents up to the root skill."""
        chain, seen, current = [], set(), self
        while current is not None and current.pk not in seen:
            seen.add(current.pk)
            chain.append(current)
            current = current.parent
        return chain

    def index_entry(self):
        return SkillIndexEntry(self.skill_id, self.env_feature, self.task_feature, str(self.directory))
