"""
Decision records, the decision success rate and the scenario output files.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple

from orchestrator.constants.orchestrator_constants import STAGE_SUMMARY_FIELDS
from orchestrator.exceptions import EmptyDecisionLog
from skillgraph.dispatch import DispatchDecision
from swarmsim.constants.swarmsim_constants import GREEN, RED


@dataclass(frozen=True)
class DecisionRecord:
    seed: int
    stage: int
    stage_name: str
    tick: int
    teams: Tuple[str, ...]
    env: Tuple[float, ...]
    task: Tuple[float, ...]
    table_digest: str
    decision: DispatchDecision
    expected: Tuple[str, ...]
    finetuned: bool = False

    @property
    def success(self):
        """The dispatched skill set equals the declared expected set."""
        return set(self.decision.skill_ids) == set(self.expected)

    def as_dict(self):
        return {
            'seed': self.seed,
            'stage': self.stage,
            'stage_name': self.stage_name,
            'tick': self.tick,
            'teams': list(self.teams),
            'env': list(self.env),
            'task': list(self.task),
            'table_digest': self.table_digest,
            'decision': self.decision.as_dict(),
            'expected': list(self.expected),
            'success': self.success,
            'finetuned': self.finetuned,
        }


class DecisionLog:

    def __init__(self, decisions=()):
        self.decisions: List[DecisionRecord] = list(decisions)

    def __len__(self):
        return len(self.decisions)

    def __iter__(self):
        return iter(self.decisions)

    def __getitem__(self, index):
        return self.decisions[index]

    def append(self, decision):
        self.decisions.append(decision)

    def extend(self, decisions):
        self.decisions.extend(decisions)

    def as_dicts(self):
        return [decision.as_dict() for decision in self.decisions]

    def write_jsonl(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open('w') as handle:
            for row in self.as_dicts():
                handle.write(json.dumps(row, sort_keys=True) + '\n')
        return path


def decision_success_rate(log):
    """n_succ / n_total over every decision in the log."""
    decisions = list(log)
    if not decisions:
        raise EmptyDecisionLog("Cannot compute a success rate without decisions")
    return sum(decision.success for decision in decisions) / len(decisions)


@dataclass(frozen=True)
class StageSummary:
    seed: int
    stage: int
    name: str
    entry_tick: int
    exit_tick: int
    exit_reason: str
    alive_green: int
    alive_red: int

    @property
    def steps(self):
        return self.exit_tick - self.entry_tick

    def as_row(self):
        return {
            'seed': self.seed,
            'stage': self.stage,
            'name': self.name,
            'entry_tick': self.entry_tick,
            'exit_tick': self.exit_tick,
            'steps': self.steps,
            'exit_reason': self.exit_reason,
            'alive_green': self.alive_green,
            'alive_red': self.alive_red,
        }


def alive_counts(world):
    return {team: world.living_count(team) if team in world.teams else 0 for team in (GREEN, RED)}


def write_stage_summaries(path, summaries):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='') as handle:
        writer = csv.DictWriter(handle, fieldnames=STAGE_SUMMARY_FIELDS, lineterminator='\n')
        writer.writeheader()
        for summary in summaries:
            writer.writerow(summary.as_row())
    return path
