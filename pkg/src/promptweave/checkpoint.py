"""Checkpoint container.

A checkpoint is an uncompressed ``.npz`` archive (one ``.npy`` member per
entry) holding:

* ``param/<name>``      float32 little-endian parameter arrays
* ``optim/m/<name>``, ``optim/v/<name>``, ``optim/step``   optional Adam state
* ``__format_version__``  int64 scalar
* ``__config__``          UTF-8 JSON of the ModelConfig (uint8 bytes)
* ``__trainable__``       UTF-8 JSON list of trainable parameter names
* ``__meta__``            UTF-8 JSON run metadata (stage, baseline, ...)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backbone import ModelConfig
from .numerics import Tensor
from .params import ParamStore

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    params: ParamStore
    config: ModelConfig
    meta: dict = field(default_factory=dict)
    optim: dict | None = None  # {"m": {name: arr}, "v": {...}, "step": int}


def _text(obj) -> np.ndarray:
    return np.frombuffer(json.dumps(obj, sort_keys=True).encode("utf-8"), dtype=np.uint8)


def _untext(arr: np.ndarray):
    return json.loads(arr.tobytes().decode("utf-8"))


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    entries: dict[str, np.ndarray] = {
        "__format_version__": np.asarray(FORMAT_VERSION, dtype="<i8"),
        "__config__": _text(ckpt.config.to_dict()),
        "__trainable__": _text(sorted(ckpt.params.trainable)),
        "__meta__": _text(ckpt.meta),
    }
    for name, t in ckpt.params.tensors.items():
        entries[f"param/{name}"] = np.ascontiguousarray(t.data, dtype="<f4")
    if ckpt.optim is not None:
        for name, arr in ckpt.optim["m"].items():
            entries[f"optim/m/{name}"] = np.ascontiguousarray(arr, dtype="<f4")
        for name, arr in ckpt.optim["v"].items():
            entries[f"optim/v/{name}"] = np.ascontiguousarray(arr, dtype="<f4")
        entries["optim/step"] = np.asarray(ckpt.optim["step"], dtype="<i8")
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(fh, **entries)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"{path}: not a checkpoint container ({exc})") from None
    with archive:
        keys = list(archive.keys())
        if "__format_version__" not in keys:
            raise CheckpointError(f"{path}: missing format version")
        version = int(archive["__format_version__"])
        if version != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        cfg = ModelConfig.from_dict(_untext(archive["__config__"]))
        trainable = _untext(archive["__trainable__"])
        meta = _untext(archive["__meta__"])
        store = ParamStore(trainable=())
        optim = None
        for k in keys:
            if k.startswith("param/"):
                name = k[len("param/"):]
                store.tensors[name] = Tensor(archive[k].astype(np.float32), name=name)
        store.trainable = set(trainable)
        if "optim/step" in keys:
            optim = {"m": {}, "v": {}, "step": int(archive["optim/step"])}
            for k in keys:
                if k.startswith("optim/m/"):
                    optim["m"][k[len("optim/m/"):]] = archive[k].astype(np.float32)
                elif k.startswith("optim/v/"):
                    optim["v"][k[len("optim/v/"):]] = archive[k].astype(np.float32)
    return Checkpoint(store, cfg, meta, optim)
