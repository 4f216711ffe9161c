# AdaRoute - Dynamic Parameter Routing Adapters at Desk Scale
# Checkpoint - JSON manifest plus one little-endian float64 payload.
#
# Copyright (C) 2026  The adaroute developers
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.

import hashlib
import json
import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .artifacts import write_bytes, write_text
from .backbones import ModelGraph
from .config import RunConfig
from .errors import ConfigurationError, IntegrityError, MigrationError
from .model import build_model
from .optim import OptimState

CHECKPOINT_SCHEMA_VERSION = 1
MANIFEST_FILE = "manifest.json"
PAYLOAD_FILE = "payload.bin"
DTYPE = np.dtype("<f8")
OPTIM_HYPER = ("lr", "beta1", "beta2", "eps", "weight_decay")


@dataclass
class Checkpoint:
    """A loaded checkpoint: the rebuilt model, its config and optimizer state."""
    graph: ModelGraph
    config: RunConfig
    state: Optional[OptimState]
    manifest: dict


def _entries(graph: ModelGraph, state: Optional[OptimState]) -> List[Tuple[str, np.ndarray]]:
    entries = [(name, t.data) for name, t in graph.tensors.items()]
    if state is not None:
        for name in sorted(state.m):
            entries.append(("optim.m." + name, state.m[name]))
            entries.append(("optim.v." + name, state.v[name]))
    return entries


def save_checkpoint(graph: ModelGraph, path: str, config: RunConfig,
                    state: Optional[OptimState] = None) -> dict:
    """Writes path/manifest.json and path/payload.bin; returns the manifest.

    Tensors are laid out back to back in registration order, followed by
    the optimizer moments when a state is given.
    """
    directory = []
    chunks = []
    offset = 0
    for name, data in _entries(graph, state):
        raw = np.ascontiguousarray(data, dtype=DTYPE).tobytes()
        entry = {"name": name, "shape": list(data.shape), "offset": offset, "nbytes": len(raw)}
        if name in graph.tensors:
            entry["frozen"] = graph.frozen[name]
            entry["category"] = str(graph.categories[name])
        directory.append(entry)
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)

    optimizer = None
    if state is not None:
        optimizer = {key: getattr(state, key) for key in OPTIM_HYPER}
        optimizer["step"] = state.step
    manifest = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "config": config.to_dict(),
        "payload": {"file": PAYLOAD_FILE, "nbytes": len(payload),
                    "sha256": hashlib.sha256(payload).hexdigest()},
        "tensors": directory,
        "optimizer": optimizer,
    }
    write_bytes(os.path.join(path, PAYLOAD_FILE), payload)
    write_text(os.path.join(path, MANIFEST_FILE), json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    logging.info("Saved checkpoint with " + str(len(directory)) + " tensors to " + path)
    return manifest


def read_manifest(path: str) -> dict:
    manifest_path = os.path.join(path, MANIFEST_FILE)
    try:
        with open(manifest_path) as f:
            manifest = json.load(f)
    except OSError as e:
        raise ConfigurationError("Cannot read checkpoint manifest {}: {}".format(manifest_path, e.strerror or e))
    except json.JSONDecodeError as e:
        raise IntegrityError("Checkpoint manifest {} is not valid JSON: {}".format(manifest_path, e))
    version = manifest.get("schema_version")
    if version != CHECKPOINT_SCHEMA_VERSION:
        raise MigrationError("Checkpoint {} has schema version {}, this build reads version {}".format(
            path, version, CHECKPOINT_SCHEMA_VERSION))
    return manifest


def _check_layout(directory: List[dict], nbytes: int) -> None:
    offset = 0
    for entry in directory:
        expected = int(np.prod(entry["shape"], dtype=np.int64)) * DTYPE.itemsize
        if entry["offset"] != offset or entry["nbytes"] != expected:
            raise IntegrityError("Tensor '{}' is not laid out contiguously in the payload".format(entry["name"]))
        offset += entry["nbytes"]
    if offset != nbytes:
        raise IntegrityError("Tensor directory covers {} bytes, payload holds {}".format(offset, nbytes))


def load_checkpoint(path: str) -> Checkpoint:
    """Rebuilds the model from the stored config and restores every tensor bitwise.

    Raises MigrationError on a foreign schema version and IntegrityError
    when the payload does not match its hash or directory.
    """
    manifest = read_manifest(path)
    payload_path = os.path.join(path, manifest["payload"]["file"])
    try:
        with open(payload_path, "rb") as f:
            payload = f.read()
    except OSError as e:
        raise ConfigurationError("Cannot read checkpoint payload {}: {}".format(payload_path, e.strerror or e))
    if hashlib.sha256(payload).hexdigest() != manifest["payload"]["sha256"]:
        raise IntegrityError("Checkpoint payload {} does not match its manifest hash".format(payload_path))
    _check_layout(manifest["tensors"], len(payload))

    config = RunConfig.from_dict(manifest["config"])
    graph = build_model(config)
    arrays: Dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        raw = payload[entry["offset"]:entry["offset"] + entry["nbytes"]]
        arrays[entry["name"]] = np.frombuffer(raw, dtype=DTYPE).astype(np.float64).reshape(entry["shape"])

    stored = {e["name"]: e for e in manifest["tensors"] if not e["name"].startswith("optim.")}
    if set(stored) != set(graph.tensors):
        raise IntegrityError("Checkpoint tensors do not match the model its config builds")
    for name, t in graph.tensors.items():
        if arrays[name].shape != t.shape:
            raise IntegrityError("Tensor '{}' has shape {} in the checkpoint but {} in the model".format(
                name, arrays[name].shape, t.shape))
        # In place, so views such as detached expert centers stay bound.
        t.data[...] = arrays[name]
        graph.set_trainable(name, not stored[name]["frozen"])

    state = None
    if manifest["optimizer"] is not None:
        hyper = manifest["optimizer"]
        state = OptimState(*(hyper[key] for key in OPTIM_HYPER), step=hyper["step"])
        for key, values in arrays.items():
            if key.startswith("optim.m."):
                name = key[len("optim.m."):]
                state.m[name] = values.copy()
                state.v[name] = arrays["optim.v." + name].copy()
    logging.info("Loaded checkpoint from " + path)
    return Checkpoint(graph, config, state, manifest)
