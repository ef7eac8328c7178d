"""Checkpoint container.

Layout: 8-byte magic ``GRCK0001``, 8-byte little-endian header length, UTF-8
JSON header, then the raw bytes of each array. The header records the model
config, pipeline stage tag, seed, and an ordered list of {name, shape}
entries; arrays are float64, row-major, in header order. Round-trips are
bit-exact.

Stage tags: ``init`` (fresh), ``m0`` (dense fine-tuned), ``m0rq`` (codebooks
installed after quantization), ``m1`` (seq2seq pretrained), ``m2`` (initial
rank fine-tune), ``m3`` (progressive), ``m4`` (self-negative fine-tune).
"""

import json
import os

import numpy as np

from genret.errors import ConfigurationError, DataFormatError
from genret.model.config import ModelConfig

MAGIC = b"GRCK0001"

STAGE_ORDER = ["init", "m0", "m0rq", "m1", "m2", "m3", "m4"]


def save_checkpoint(path, params: dict, cfg: ModelConfig, stage: str, seed: int) -> None:
    if stage not in STAGE_ORDER:
        raise ConfigurationError(f"unknown stage tag {stage!r}")
    names = sorted(params)
    header = {
        "config": cfg.to_dict(),
        "stage": stage,
        "seed": int(seed),
        "arrays": [{"name": n, "shape": list(params[n].shape)} for n in names],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(len(blob).to_bytes(8, "little"))
        f.write(blob)
        for n in names:
            arr = np.ascontiguousarray(params[n], dtype=np.float64)
            f.write(arr.tobytes())
    os.replace(tmp, path)


def load_checkpoint(path):
    """Returns (params, cfg, stage, seed)."""
    with open(path, "rb") as f:
        if f.read(8) != MAGIC:
            raise DataFormatError(f"{path}: not a checkpoint file (bad magic)")
        hlen = int.from_bytes(f.read(8), "little")
        header = json.loads(f.read(hlen).decode("utf-8"))
        params = {}
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            n_bytes = int(np.prod(shape)) * 8
            buf = f.read(n_bytes)
            if len(buf) != n_bytes:
                raise DataFormatError(f"{path}: truncated array {entry['name']!r}")
            params[entry["name"]] = np.frombuffer(buf, dtype=np.float64).reshape(shape).copy()
        if f.read(1):
            raise DataFormatError(f"{path}: trailing bytes after arrays")
    cfg = ModelConfig.from_dict(header["config"])
    return params, cfg, header["stage"], header["seed"]


def require_stage(actual: str, expected: str, path: str = "") -> None:
    """Enforce pipeline ordering: a stage refuses any checkpoint whose tag is
    not its expected predecessor."""
    if actual != expected:
        where = f" in {path}" if path else ""
        raise ConfigurationError(
            f"checkpoint{where} has stage {actual!r}, expected predecessor {expected!r}"
        )
