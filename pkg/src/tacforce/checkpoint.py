"""Versioned binary checkpoint container.

Layout: 4-byte magic, uint32 format version, uint64 header length, a
canonical JSON header (artifact kind, config record, array index), then the
raw little-endian array payloads in index order. Serialization is fully
deterministic, so load -> save round-trips bit-exactly.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .errors import ArtifactMismatch
from .model import ModelConfig, TactileCvae

MAGIC = b"TFCP"
FORMAT_VERSION = 1


def save_checkpoint(path: str | Path, kind: str, config: dict,
                    arrays: dict[str, np.ndarray]) -> None:
    index = []
    offset = 0
    payload = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        if arr.dtype.byteorder == ">":
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        data = arr.tobytes()
        index.append({
            "name": name,
            "dtype": arr.dtype.str,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(data),
        })
        payload.append(data)
        offset += len(data)
    header = json.dumps({"kind": kind, "config": config, "arrays": index},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for data in payload:
            fh.write(data)


def load_checkpoint(path: str | Path) -> tuple[str, dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ArtifactMismatch(f"{path}: not a checkpoint file (bad magic {magic!r})")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FORMAT_VERSION:
            raise ArtifactMismatch(
                f"{path}: checkpoint format_version {version} unsupported "
                f"(expected {FORMAT_VERSION})"
            )
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        blob = fh.read()
    arrays = {}
    for entry in header["arrays"]:
        start, stop = entry["offset"], entry["offset"] + entry["nbytes"]
        arr = np.frombuffer(blob[start:stop], dtype=np.dtype(entry["dtype"]))
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return header["kind"], header["config"], arrays


def save_model(path: str | Path, model: TactileCvae, extra: dict | None = None) -> None:
    config = {"model": model.config.to_dict(), "seed": model.seed}
    if extra:
        config["extra"] = extra
    arrays = {name: tensor.detach().cpu().numpy()
              for name, tensor in model.state_dict().items()}
    save_checkpoint(path, "tactile_cvae", config, arrays)


def load_model(path: str | Path) -> TactileCvae:
    kind, config, arrays = load_checkpoint(path)
    if kind != "tactile_cvae":
        raise ArtifactMismatch(f"{path}: checkpoint holds {kind!r}, expected a model")
    model = TactileCvae(ModelConfig.from_dict(config["model"]), seed=config.get("seed", 0))
    state = {name: torch.from_numpy(arr) for name, arr in arrays.items()}
    model.load_state_dict(state)
    model.eval()
    return model


def save_head(path: str | Path, head, source_id: str = "") -> None:
    config = {
        "grid": head.grid,
        "latent_dim": head.latent_dim,
        "channels": head.channels,
        "window": head.window,
        "seed": head.seed,
        "source": source_id,
    }
    arrays = {name: tensor.detach().cpu().numpy()
              for name, tensor in head.state_dict().items()}
    save_checkpoint(path, "force_head", config, arrays)


def load_head(path: str | Path):
    from .evaluate import ForceHead

    kind, config, arrays = load_checkpoint(path)
    if kind != "force_head":
        raise ArtifactMismatch(f"{path}: checkpoint holds {kind!r}, expected a force head")
    head = ForceHead(config["grid"], config["latent_dim"], channels=config["channels"],
                     window=config["window"], seed=config.get("seed", 0))
    head.load_state_dict({name: torch.from_numpy(arr) for name, arr in arrays.items()})
    head.eval()
    return head, config.get("source", "")
