"""Byte-deterministic checkpoints: one JSON header line + raw little-endian float64.

npz/pickle containers embed timestamps, so identical parameters would hash
differently across runs; this format is reproducible byte for byte and costs
nothing to parse from other languages.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np
import torch

from .errors import ConfigurationError, ShapeMismatchError
from .mlp import Architecture, ParamVector
from .spline import SplinePath, build_spline

FORMAT = "densitypath-ckpt-1"


def _arch_dict(arch: Architecture) -> dict:
    return {"input_dim": arch.input_dim, "hidden_width": arch.hidden_width,
            "num_layers": arch.num_layers, "time_varying": arch.time_varying,
            "activation": arch.activation}


def _arch_from(d: dict) -> Architecture:
    return Architecture(input_dim=d["input_dim"], hidden_width=d["hidden_width"],
                        num_layers=d["num_layers"], time_varying=d["time_varying"],
                        activation=d.get("activation", "tanh"))


def _atomic_write(path: str, header: dict, payload: np.ndarray):
    blob = (json.dumps(header, sort_keys=True) + "\n").encode("utf-8")
    blob += np.ascontiguousarray(payload, dtype="<f8").tobytes()
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read(path: str):
    with open(path, "rb") as f:
        header_line = f.readline()
        payload = f.read()
    header = json.loads(header_line.decode("utf-8"))
    if header.get("format") != FORMAT:
        raise ConfigurationError(f"{path} is not a recognized checkpoint")
    data = np.frombuffer(payload, dtype="<f8").copy()
    return header, data


def save_params(path: str, params: ParamVector, tag: str = ""):
    header = {"format": FORMAT, "kind": "params", "tag": tag,
              "arch": _arch_dict(params.arch), "shape": [params.dim]}
    _atomic_write(path, header, params.values.detach().cpu().numpy())


def load_params(path: str):
    """Returns (ParamVector, tag)."""
    header, data = _read(path)
    if header.get("kind") != "params":
        raise ConfigurationError(f"{path} holds {header.get('kind')}, expected params")
    arch = _arch_from(header["arch"])
    if data.shape[0] != header["shape"][0]:
        raise ShapeMismatchError(f"payload length {data.shape[0]} != header {header['shape'][0]}")
    return ParamVector(torch.from_numpy(data), arch), header.get("tag", "")


def save_controls(path: str, spline: SplinePath, tag: str = ""):
    vals = spline.values.detach().cpu().numpy()
    header = {"format": FORMAT, "kind": "controls", "tag": tag,
              "arch": _arch_dict(spline.arch), "shape": list(vals.shape)}
    _atomic_write(path, header, vals.reshape(-1))


def load_controls(path: str):
    """Returns (SplinePath, tag)."""
    header, data = _read(path)
    if header.get("kind") != "controls":
        raise ConfigurationError(f"{path} holds {header.get('kind')}, expected controls")
    arch = _arch_from(header["arch"])
    rows, cols = header["shape"]
    if data.shape[0] != rows * cols:
        raise ShapeMismatchError("payload does not match header shape")
    vals = torch.from_numpy(data.reshape(rows, cols))
    control = [ParamVector(vals[i], arch) for i in range(rows)]
    return build_spline(control), header.get("tag", "")
