"""Checkpoint serialization.

A checkpoint is a JSON document:

    {format_version, problem_kind, hyperparameters,
     parameters: [{path, partition, shape, values}], adam_state?}

where `values` is base64 of the little-endian float64 array, row-major.
Serialization is canonical (sorted keys, fixed separators) so identical
models produce byte-identical files.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from .autodiff import ParamStore
from .optim import AdamState

FORMAT_VERSION = 1


def _encode_array(arr: np.ndarray) -> str:
    return base64.b64encode(arr.astype("<f8").tobytes()).decode("ascii")


def _decode_array(data: str, shape) -> np.ndarray:
    raw = np.frombuffer(base64.b64decode(data), dtype="<f8")
    return raw.reshape(shape).astype(np.float64)


def checkpoint_document(params: ParamStore, problem_kind: dict,
                        hyperparameters: dict,
                        adam_state: AdamState | None = None) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "problem_kind": problem_kind,
        "hyperparameters": hyperparameters,
        "parameters": [
            {
                "path": path,
                "partition": params.partition[path],
                "shape": list(params.tensors[path].shape),
                "values": _encode_array(params.tensors[path]),
            }
            for path in sorted(params.tensors)
        ],
    }
    if adam_state is not None:
        doc["adam_state"] = {
            "learning_rate": adam_state.learning_rate,
            "beta1": adam_state.beta1,
            "beta2": adam_state.beta2,
            "epsilon": adam_state.epsilon,
            "step_count": adam_state.step_count,
            "m": {p: _encode_array(a) for p, a in sorted(adam_state.m.items())},
            "v": {p: _encode_array(a) for p, a in sorted(adam_state.v.items())},
        }
    return doc


def save_checkpoint(path: str | Path, params: ParamStore, problem_kind: dict,
                    hyperparameters: dict,
                    adam_state: AdamState | None = None) -> None:
    doc = checkpoint_document(params, problem_kind, hyperparameters, adam_state)
    Path(path).write_text(
        json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")


def load_checkpoint(path: str | Path) -> dict:
    """Returns {params: ParamStore, problem_kind, hyperparameters,
    adam_state: AdamState | None}."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format in {path}")
    params = ParamStore()
    for entry in doc["parameters"]:
        params.add(entry["path"],
                   _decode_array(entry["values"], entry["shape"]),
                   entry["partition"])
    adam = None
    if "adam_state" in doc:
        raw = doc["adam_state"]
        adam = AdamState(raw["learning_rate"], raw["beta1"], raw["beta2"],
                         raw["epsilon"], raw["step_count"])
        for p, data in raw["m"].items():
            adam.m[p] = _decode_array(data, params.tensors[p].shape)
        for p, data in raw["v"].items():
            adam.v[p] = _decode_array(data, params.tensors[p].shape)
    return {
        "params": params,
        "problem_kind": doc["problem_kind"],
        "hyperparameters": doc["hyperparameters"],
        "adam_state": adam,
    }
