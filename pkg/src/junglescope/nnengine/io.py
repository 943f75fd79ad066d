"""Versioned binary model container and training-history CSV.

Layout: magic, little-endian uint32 header length, UTF-8 JSON header
(model spec, per-tensor name/shape/offset table, free-form metadata),
then one little-endian float32 blob holding all tensors back to back.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .config import ModelSpec
from .model import TrainedModel

MAGIC = b"JSCNN\x01"


def save_model(model: TrainedModel, path: str | Path) -> None:
    path = Path(path)
    tensors, blobs, offset = [], [], 0
    for name, arr in model.params.items():
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        tensors.append({"name": name, "shape": list(arr.shape),
                        "dtype": "<f4", "offset": offset, "nbytes": len(data)})
        blobs.append(data)
        offset += len(data)
    meta = dict(model.meta)
    if model.test_accuracy is not None:
        meta["test_accuracy"] = [float(a) for a in np.atleast_1d(model.test_accuracy)]
    if model.seed is not None:
        meta["seed"] = int(model.seed)
    header = json.dumps({
        "spec": model.spec.to_json_dict(),
        "tensors": tensors,
        "meta": meta,
    }, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(np.uint32(len(header)).newbyteorder("<").tobytes())
        f.write(header)
        for b in blobs:
            f.write(b)


def load_model(path: str | Path) -> TrainedModel:
    raw = Path(path).read_bytes()
    if raw[:len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a model container")
    hlen = int(np.frombuffer(raw[len(MAGIC):len(MAGIC) + 4], dtype="<u4")[0])
    body = len(MAGIC) + 4
    header = json.loads(raw[body:body + hlen].decode())
    blob = raw[body + hlen:]
    params = {}
    for t in header["tensors"]:
        arr = np.frombuffer(blob[t["offset"]:t["offset"] + t["nbytes"]], dtype="<f4")
        params[t["name"]] = arr.reshape(t["shape"]).astype(np.float32)
    meta = header.get("meta", {})
    model = TrainedModel(spec=ModelSpec.from_json_dict(header["spec"]), params=params,
                         seed=meta.get("seed"), meta=meta)
    if "test_accuracy" in meta:
        model.test_accuracy = np.array(meta["test_accuracy"])
    return model


def write_history_csv(history: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "train_acc", "val_acc", "loss"])
        for row in history:
            writer.writerow([row["epoch"], repr(row["train_accuracy"]),
                             repr(row["val_accuracy"]), repr(row["loss"])])
