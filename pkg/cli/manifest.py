"""
Run manifests: what a command read, what it wrote and when, saved as
`manifest.json` in the run's output directory.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

from django.utils import timezone

from cli.constants.cli_constants import MANIFEST_FILE, TOOL_VERSION
from orchestrator.registry import file_sha256

logger = logging.getLogger(__name__)


def _files_under(path):
    path = Path(path)
    if path.is_dir():
        return [(str(p.relative_to(path)), p) for p in sorted(path.rglob('*')) if p.is_file()]
    return [(path.name, path)]


def inputs_digest(paths):
    """sha256 over every input file's name and content hash, directories walked in sorted order."""
    digest = hashlib.sha256()
    for path in paths:
        for name, file_path in _files_under(path):
            digest.update(f"{name}\0{file_sha256(file_path)}\n".encode())
    return digest.hexdigest()


@dataclass
class RunManifest:
    command: str
    out_dir: str
    inputs: List[str] = field(default_factory=list)
    seeds: List[int] = field(default_factory=list)
    version: str = TOOL_VERSION
    started: Optional[str] = None
    finished: Optional[str] = None
    input_hash: Optional[str] = None
    outputs: List[str] = field(default_factory=list)

    @classmethod
    def start(cls, command, out_dir, inputs=(), seeds=()):
        inputs = [str(path) for path in inputs if path is not None]
        return cls(
            command=command,
            out_dir=str(out_dir),
            inputs=inputs,
            seeds=[int(seed) for seed in seeds],
            started=timezone.now().isoformat(),
            input_hash=inputs_digest(inputs),
        )

    def add_output(self, path):
        """Record a written file, or every file under a written directory."""
        root = Path(self.out_dir)
        for _, file_path in _files_under(path):
            try:
                name = str(file_path.relative_to(root))
            except ValueError:
                name = str(file_path)
            if name not in self.outputs:
                self.outputs.append(name)

    def write(self):
        """Stamp the end time and replace manifest.json in one rename."""
        self.finished = timezone.now().isoformat()
        directory = Path(self.out_dir)
        directory.mkdir(parents=True, exist_ok=True)
        handle, temp = tempfile.mkstemp(dir=directory, prefix='.manifest-', suffix='.json')
        try:
            with os.fdopen(handle, 'w') as stream:
                json.dump(asdict(self), stream, indent=2, sort_keys=True)
                stream.write('\n')
            os.replace(temp, directory / MANIFEST_FILE)
        except BaseException:
            Path(temp).unlink(missing_ok=True)
            raise
        logger.debug("Wrote run manifest for %s to %s", self.command, directory)
        return directory / MANIFEST_FILE
