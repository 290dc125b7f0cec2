"""Versioned checkpoint files.

A checkpoint is an ``.npz`` archive holding one array per model parameter
(``param/<name>``), the observation normalizer statistics (``norm/<which>/<field>``)
and a JSON metadata string (``meta``) with the format tag, tensor dimensions,
architecture, curriculum state, iteration, run configuration and a SHA-256 digest
of every array. Writes go to a temporary file that is renamed into place.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import tempfile
import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from kinoloco.errors import CheckpointError

FORMAT_VERSION = "kinoloco-checkpoint/1"


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    normalizers: dict[str, dict[str, np.ndarray]]
    meta: dict

    @property
    def curriculum(self) -> dict:
        return self.meta["curriculum"]

    @property
    def iteration(self) -> int:
        return int(self.meta["iteration"])


def _digest(arrays: dict[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        h.update(name.encode())
        h.update(str(arr.dtype).encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(
    path: str | Path,
    model: torch.nn.Module,
    *,
    architecture: dict,
    curriculum: dict,
    iteration: int,
    normalizers: dict[str, dict[str, np.ndarray]] | None = None,
    config: dict | None = None,
    extra: dict | None = None,
) -> Path:
    arrays = {f"param/{k}": v.detach().cpu().numpy().copy() for k, v in model.state_dict().items()}
    for which, fields in (normalizers or {}).items():
        for name, value in fields.items():
            arrays[f"norm/{which}/{name}"] = np.asarray(value)
    meta = {
        "format": FORMAT_VERSION,
        "architecture": architecture,
        "curriculum": curriculum,
        "iteration": int(iteration),
        "config": config or {},
        "extra": extra or {},
        "digest": _digest(arrays),
    }
    buffer = io.BytesIO()
    np.savez(buffer, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)
    atomic_write_bytes(path, buffer.getvalue())
    return Path(path)


def load_checkpoint(path: str | Path, expect: dict | None = None) -> Checkpoint:
    """Read and verify a checkpoint; ``expect`` maps architecture keys to required values."""
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            contents = {k: data[k] for k in data.files}
    except FileNotFoundError as exc:
        raise CheckpointError(f"{path}: no such checkpoint") from exc
    except (zipfile.BadZipFile, OSError, ValueError, EOFError, KeyError) as exc:
        raise CheckpointError(f"{path}: unreadable or corrupt checkpoint ({exc})") from exc
    if "meta" not in contents:
        raise CheckpointError(f"{path}: missing metadata")
    try:
        meta = json.loads(str(contents.pop("meta")))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: metadata is not valid JSON") from exc
    if meta.get("format") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format {meta.get('format')!r}, expected {FORMAT_VERSION!r}")
    if _digest(contents) != meta.get("digest"):
        raise CheckpointError(f"{path}: content digest mismatch")
    for key, want in (expect or {}).items():
        have = meta["architecture"].get(key)
        if have != want:
            raise CheckpointError(f"{path}: shape mismatch for {key}: checkpoint has {have}, expected {want}")
    params = {k[len("param/"):]: v for k, v in contents.items() if k.startswith("param/")}
    normalizers: dict[str, dict[str, np.ndarray]] = {}
    for k, v in contents.items():
        if k.startswith("norm/"):
            _, which, name = k.split("/", 2)
            normalizers.setdefault(which, {})[name] = v
    return Checkpoint(params=params, normalizers=normalizers, meta=meta)


def load_into(model: torch.nn.Module, checkpoint: Checkpoint) -> None:
    """Copy parameters into ``model`` after checking names and shapes."""
    own = model.state_dict()
    if set(own) != set(checkpoint.params):
        raise CheckpointError(
            f"parameter names differ: missing {sorted(set(own) - set(checkpoint.params))}, "
            f"unexpected {sorted(set(checkpoint.params) - set(own))}"
        )
    for name, tensor in own.items():
        if tuple(tensor.shape) != checkpoint.params[name].shape:
            raise CheckpointError(
                f"shape mismatch for {name}: checkpoint {checkpoint.params[name].shape}, model {tuple(tensor.shape)}"
            )
    model.load_state_dict({k: torch.as_tensor(v) for k, v in checkpoint.params.items()})
