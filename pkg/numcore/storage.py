from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from numcore.constants.numcore_constants import (
    NET_ARRAY_DTYPE, NET_ARRAY_SUFFIX, NET_FORMAT_VERSION, NET_MANIFEST_SUFFIX,
)
from numcore.exceptions import CorruptWeightFile, UnknownFormatVersion
from numcore.network import NetSpec, NetWeights

logger = logging.getLogger(__name__)


def net_paths(stem):
    stem = str(stem)
    return Path(stem + NET_MANIFEST_SUFFIX), Path(stem + NET_ARRAY_SUFFIX)


def write_float_array(path, array):
    np.ascontiguousarray(array, dtype=NET_ARRAY_DTYPE).tofile(str(path))


def read_float_array(path, count=None):
    try:
        array = np.fromfile(str(path), dtype=NET_ARRAY_DTYPE)
    except OSError as e:
        raise CorruptWeightFile(f"Cannot read {path}: {e}") from e
    if count is not None and array.size != count:
        raise CorruptWeightFile(f"{path} holds {array.size} values, expected {count}")
    return array.astype(np.float64)


def save_net(stem, spec, weights, seed=None):
    """Writes <stem>.netjson and <stem>.netbin; returns both paths."""
    weights.check_shapes(spec)
    manifest_path, array_path = net_paths(stem)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)

    manifest = {
        'format_version': NET_FORMAT_VERSION,
        'spec': spec.to_dict(),
        'shapes': [list(p.shape) for p in weights.parameters()],
        'seed': seed,
        'count': spec.parameter_count,
    }
    write_float_array(array_path, weights.flat())
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + '\n')
    logger.debug("Saved net %s (%d parameters)", manifest_path, spec.parameter_count)
    return manifest_path, array_path


def load_net(stem):
    """Returns (spec, weights, manifest dict)."""
    manifest_path, array_path = net_paths(stem)
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, ValueError) as e:
        raise CorruptWeightFile(f"Cannot read manifest {manifest_path}: {e}") from e

    version = manifest.get('format_version')
    if version != NET_FORMAT_VERSION:
        raise UnknownFormatVersion(f"{manifest_path}: format version {version!r} is not supported")

    spec = NetSpec.from_dict(manifest['spec'])
    flat = read_float_array(array_path, spec.parameter_count)
    weights = NetWeights.from_flat(spec, flat)
    if [list(p.shape) for p in weights.parameters()] != manifest.get('shapes'):
        raise CorruptWeightFile(f"{manifest_path}: recorded shapes disagree with spec")
    return spec, weights, manifest
