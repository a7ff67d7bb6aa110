from __future__ import annotations

import csv
import json
from pathlib import Path

EPISODE_METRIC_FIELDS = ('episode', 'team', 'reward_sum', 'kills', 'mean_neighbor_distance')


class TrajectoryWriter:
    """JSONL trajectory: one record per tick with every robot's state and the tick's events."""

    def __init__(self, path):
        self.path = Path(path)
        self._handle = None

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = self.path.open('w')
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    def write(self, world, step_result=None, **extra):
        record = {
            'tick': world.tick,
            'agents': [
                {k: v for k, v in agent.items() if k != 'is_leader'} for agent in world.snapshot()
            ],
            'events': step_result.events() if step_result is not None else {'kills': []},
        }
        record.update(extra)
        self._handle.write(json.dumps(record, sort_keys=True) + '\n')


def write_episode_metrics(path, rows):
    """Per-episode CSV: reward sums, kill counts and mean nearest-neighbour distance per team."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='') as handle:
        writer = csv.DictWriter(handle, fieldnames=EPISODE_METRIC_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: row.get(key, '') for key in EPISODE_METRIC_FIELDS})
    return path
