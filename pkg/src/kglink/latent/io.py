"""Binary container for latent models.

Layout: the magic ``KGLM``, a little-endian uint64 header length, a UTF-8
JSON header ``{kind, dims, seed, version, arrays}``, then each array as
row-major little-endian float64 in header order.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from .models import LatentModel, ModelConfig, param_shapes

MAGIC = b"KGLM"
VERSION = 1


def save_model(path, model: LatentModel) -> None:
    names = list(model.params)
    header = {
        "kind": model.kind,
        "dims": model.config.to_dict(),
        "num_entities": model.num_entities,
        "num_relations": model.num_relations,
        "seed": model.meta.get("seed"),
        "version": VERSION,
        "arrays": [{"name": n, "shape": list(model.params[n].shape)} for n in names],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(model.params[n], dtype="<f8").tobytes())


def load_model(path) -> LatentModel:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path}: not a model file")
        (size,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(size).decode("utf-8"))
        if header.get("version") != VERSION:
            raise ValueError(f"{path}: unsupported model version {header.get('version')}")
        cfg = ModelConfig(**header["dims"])
        if cfg.kind != header["kind"]:
            raise ValueError(f"{path}: kind mismatch in header")
        expected = param_shapes(cfg, header["num_entities"], header["num_relations"])
        params = {}
        for spec in header["arrays"]:
            name, shape = spec["name"], tuple(spec["shape"])
            if expected.get(name) != shape:
                raise ValueError(f"{path}: array {name} has shape {shape}, expected {expected.get(name)}")
            count = int(np.prod(shape))
            raw = fh.read(8 * count)
            if len(raw) != 8 * count:
                raise ValueError(f"{path}: truncated array {name}")
            params[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
        if set(params) != set(expected):
            raise ValueError(f"{path}: missing arrays {sorted(set(expected) - set(params))}")
    meta = {"seed": header.get("seed")}
    return LatentModel(cfg, params, header["num_entities"], header["num_relations"], meta)
