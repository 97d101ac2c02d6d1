"""Binary checkpoint format for models, running stats, and EMA shadows.

Layout, all little endian:

    bytes 0..3   magic b"RNP1"
    bytes 4..7   u32 header length in bytes
    header       UTF-8 JSON: format_version, model config echo, meta dict,
                 and a tensor directory of {name, dtype, shape, offset}
    payload      raw tensor bytes, concatenated in directory order,
                 offsets relative to the payload start

The directory covers trainable parameters, batch-norm running statistics,
and (when present) EMA shadow tensors under the "ema/" prefix.  Serializing
the same model twice yields identical bytes, so checkpoints can be compared
with a plain file hash.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import Model, ModelConfig, build_model

__all__ = ["CheckpointError", "save_checkpoint", "load_checkpoint",
           "read_header", "MAGIC", "FORMAT_VERSION"]

MAGIC = b"RNP1"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Raised when a checkpoint cannot be read or does not fit the model."""


def _model_tensors(model: Model) -> list[tuple[str, np.ndarray]]:
    tensors = [(name, p.value) for name, p in model.named_parameters()]
    tensors += [(name, b) for name, b in model.named_buffers()]
    return tensors


def save_checkpoint(path, model: Model, ema_shadows: dict[str, np.ndarray] | None = None,
                    meta: dict | None = None) -> Path:
    """Write the model (and optional EMA shadows, metadata) to ``path``."""
    path = Path(path)
    tensors = _model_tensors(model)
    if ema_shadows:
        tensors += [(f"ema/{name}", arr) for name, arr in ema_shadows.items()]
    directory = []
    offset = 0
    for name, arr in tensors:
        arr = np.ascontiguousarray(arr)
        directory.append({
            "name": name,
            "dtype": arr.dtype.str,
            "shape": list(arr.shape),
            "offset": offset,
        })
        offset += arr.nbytes
    header = {
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "meta": dict(meta or {}),
        "tensors": directory,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, arr in tensors:
            fh.write(np.ascontiguousarray(arr).tobytes())
    return path


def read_header(path) -> dict:
    """Parse and validate the JSON header without touching the payload."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != MAGIC:
                raise CheckpointError(
                    f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
            raw_len = fh.read(4)
            if len(raw_len) != 4:
                raise CheckpointError(f"{path}: truncated header length")
            (hlen,) = struct.unpack("<I", raw_len)
            blob = fh.read(hlen)
            if len(blob) != hlen:
                raise CheckpointError(f"{path}: truncated header")
    except OSError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    try:
        header = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: header is not valid JSON: {exc}") from exc
    for key in ("format_version", "config", "meta", "tensors"):
        if key not in header:
            raise CheckpointError(f"{path}: header missing {key!r}")
    if header["format_version"] != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported format version {header['format_version']}")
    return header


def load_checkpoint(path, config: ModelConfig | None = None, dtype=np.float32
                    ) -> tuple[Model, dict[str, np.ndarray], dict]:
    """Rebuild a model from ``path``.

    With ``config=None`` the model is rebuilt from the config echoed in the
    header; passing a config instead validates the stored tensors against
    it (shape mismatches name the offending tensor).  Returns the model,
    EMA shadows keyed by parameter name (empty dict when absent), and the
    stored metadata.
    """
    path = Path(path)
    header = read_header(path)
    with open(path, "rb") as fh:
        fh.seek(4)
        (hlen,) = struct.unpack("<I", fh.read(4))
        fh.seek(8 + hlen)
        payload = fh.read()

    if config is None:
        try:
            config = ModelConfig.from_dict(header["config"])
        except TypeError as exc:
            raise CheckpointError(f"{path}: bad config echo: {exc}") from exc
    model = build_model(config, rng=np.random.default_rng(0), dtype=dtype)

    stored: dict[str, dict] = {}
    for entry in header["tensors"]:
        stored[entry["name"]] = entry

    def fetch(entry) -> np.ndarray:
        dt = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        nbytes = dt.itemsize * int(np.prod(shape)) if shape else dt.itemsize
        start = entry["offset"]
        chunk = payload[start:start + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(
                f"{path}: payload truncated for tensor {entry['name']!r}")
        return np.frombuffer(chunk, dtype=dt).reshape(shape)

    for name, param in model.named_parameters():
        entry = stored.pop(name, None)
        if entry is None:
            raise CheckpointError(f"{path}: missing tensor {name!r}")
        arr = fetch(entry)
        if arr.shape != param.value.shape:
            raise CheckpointError(
                f"{path}: tensor {name!r} has shape {arr.shape}, model expects "
                f"{param.value.shape}")
        param.value = arr.astype(dtype, copy=True)
    for name, buf in model.named_buffers():
        entry = stored.pop(name, None)
        if entry is None:
            raise CheckpointError(f"{path}: missing tensor {name!r}")
        arr = fetch(entry)
        if arr.shape != buf.shape:
            raise CheckpointError(
                f"{path}: tensor {name!r} has shape {arr.shape}, model expects "
                f"{buf.shape}")
        model.set_buffer(name, arr.astype(dtype, copy=True))

    ema: dict[str, np.ndarray] = {}
    for name in list(stored):
        if name.startswith("ema/"):
            ema[name[4:]] = fetch(stored.pop(name)).astype(dtype, copy=True)
    if stored:
        raise CheckpointError(
            f"{path}: unexpected tensors {sorted(stored)[:3]}")
    return model, ema, header["meta"]
