"""Self-describing checkpoint container.

Layout: magic, 8-byte big-endian header length, canonical JSON header
(format version, model config, stage history, tensor directory), then the
raw little-endian tensor bytes in directory order.  Saving the same model
twice produces identical bytes, and save(load(x)) == x.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .net import ModelConfig, SequenceModel, build_model

MAGIC = b"MIXDIALCKPT"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable checkpoint or version mismatch."""


@dataclass
class Checkpoint:
    config: ModelConfig
    stage_history: list[dict]
    parameters: dict[str, torch.Tensor]
    optimizer_state: dict[str, torch.Tensor]

    def build(self) -> SequenceModel:
        model = build_model(self.config)
        with torch.no_grad():
            for name, param in model.named_parameters():
                param.copy_(self.parameters[name])
        model.stage_history = [dict(r) for r in self.stage_history]
        model.optimizer_state = {k: v.clone() for k, v in self.optimizer_state.items()}
        return model


def _tensor_bytes(tensor: torch.Tensor) -> bytes:
    array = tensor.detach().cpu().numpy()
    return np.ascontiguousarray(array).astype(array.dtype.newbyteorder("<")).tobytes()


def save_checkpoint(model: SequenceModel, path: str | Path,
                    provenance: dict | None = None) -> None:
    tensors: list[tuple[str, torch.Tensor]] = sorted(
        [(f"param/{n}", p) for n, p in model.named_parameters()]
        + [(f"opt/{n}", t) for n, t in model.optimizer_state.items()]
    )
    directory = []
    blobs = []
    offset = 0
    for name, tensor in tensors:
        blob = _tensor_bytes(tensor)
        directory.append({
            "name": name,
            "shape": list(tensor.shape),
            "dtype": str(tensor.detach().cpu().numpy().dtype),
            "offset": offset,
            "nbytes": len(blob),
        })
        blobs.append(blob)
        offset += len(blob)
    header = {
        "format_version": FORMAT_VERSION,
        "model_config": model.config.to_dict(),
        "stage_history": model.stage_history,
        "provenance": provenance or {},
        "tensors": directory,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header_bytes).to_bytes(8, "big"))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)


def read_header(path: str | Path) -> dict:
    with Path(path).open("rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        header_len = int.from_bytes(fh.read(8), "big")
        return json.loads(fh.read(header_len).decode("utf-8"))


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    with path.open("rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        header_len = int.from_bytes(fh.read(8), "big")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(
                f"{path}: format version {header.get('format_version')} "
                f"!= supported {FORMAT_VERSION}")
        payload = fh.read()
    parameters: dict[str, torch.Tensor] = {}
    optimizer: dict[str, torch.Tensor] = {}
    for entry in header["tensors"]:
        raw = payload[entry["offset"]: entry["offset"] + entry["nbytes"]]
        array = np.frombuffer(raw, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"]).copy()
        tensor = torch.from_numpy(array)
        name = entry["name"]
        if name.startswith("param/"):
            parameters[name.removeprefix("param/")] = tensor
        else:
            optimizer[name.removeprefix("opt/")] = tensor
    return Checkpoint(
        config=ModelConfig.from_dict(header["model_config"]),
        stage_history=header["stage_history"],
        parameters=parameters,
        optimizer_state=optimizer,
    )
