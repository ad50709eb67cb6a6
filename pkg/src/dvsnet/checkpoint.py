"""Checkpoint container: a zip holding ``manifest.json`` and ``params.bin``.

``params.bin`` is the concatenation of every named tensor as little-endian
float32.  The manifest lists each tensor's name, shape, dtype, byte offset
and byte length, the architecture and training configs, the epoch, and a
64-bit BLAKE2b checksum of the blob.
"""
from __future__ import annotations

import hashlib
import io
import json
import zipfile
from pathlib import Path

import numpy as np

from .architectures import FAMILIES, ArchitectureConfig, Model, build_model
from .training import TrainingConfig

FORMAT_VERSION = 1
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


class CheckpointError(Exception):
    pass


class CheckpointIntegrityError(CheckpointError):
    """Blob truncated, checksum mismatch, or unreadable manifest."""


class CheckpointShapeError(CheckpointError):
    """Stored tensors do not fit the requested architecture."""


class UnknownFamilyError(CheckpointError):
    pass


def blob_checksum(blob: bytes) -> str:
    return hashlib.blake2b(blob, digest_size=8).hexdigest()


def _zip_write(zf: zipfile.ZipFile, name: str, data: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def save_checkpoint(model: Model, path, training: TrainingConfig | None = None,
                    epoch: int | None = None, extra: dict | None = None) -> Path:
    path = Path(path)
    entries, chunks, offset = [], [], 0
    for name, t in model.state_dict().items():
        raw = np.ascontiguousarray(t.data, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(t.shape), "dtype": "f32",
                        "offset": offset, "length": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    blob = b"".join(chunks)
    manifest = {
        "format_version": FORMAT_VERSION,
        "architecture": model.config.to_dict(),
        "training": training.to_dict() if training is not None else None,
        "epoch": epoch,
        "checksum": blob_checksum(blob),
        "blob_length": len(blob),
        "tensors": entries,
    }
    if extra:
        manifest["extra"] = extra
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        _zip_write(zf, "manifest.json", json.dumps(manifest, indent=2, sort_keys=True).encode("utf-8"))
        _zip_write(zf, "params.bin", blob)
    path.write_bytes(buf.getvalue())
    return path


def read_checkpoint(path) -> tuple[dict, bytes]:
    """Return ``(manifest, blob)`` after integrity checks."""
    try:
        with zipfile.ZipFile(path) as zf:
            manifest = json.loads(zf.read("manifest.json").decode("utf-8"))
            blob = zf.read("params.bin")
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError, UnicodeDecodeError, OSError) as err:
        if isinstance(err, FileNotFoundError):
            raise
        raise CheckpointIntegrityError(f"{path}: unreadable checkpoint ({err})") from None
    for key in ("architecture", "tensors", "checksum", "blob_length"):
        if key not in manifest:
            raise CheckpointIntegrityError(f"{path}: manifest lacks {key!r}")
    if len(blob) != manifest["blob_length"]:
        raise CheckpointIntegrityError(
            f"{path}: data blob has {len(blob)} bytes, manifest declares {manifest['blob_length']}")
    if blob_checksum(blob) != manifest["checksum"]:
        raise CheckpointIntegrityError(f"{path}: data blob checksum mismatch")
    return manifest, blob


def load_checkpoint(path, config: ArchitectureConfig | None = None) -> Model:
    """Rebuild the model stored at ``path``.

    With ``config`` given, the stored tensors are loaded into a model built
    from that config instead, and the first tensor that does not fit is named
    in the error.
    """
    manifest, blob = read_checkpoint(path)
    arch = manifest["architecture"]
    if arch.get("family") not in FAMILIES:
        raise UnknownFamilyError(f"{path}: unknown architecture family {arch.get('family')!r}")
    if config is None:
        try:
            config = ArchitectureConfig.from_dict(arch)
        except (TypeError, ValueError) as err:
            raise CheckpointIntegrityError(f"{path}: bad architecture config ({err})") from None
    model = build_model(config, seed=0)
    state = model.state_dict()
    stored = {e["name"]: e for e in manifest["tensors"]}
    for name, t in state.items():
        e = stored.get(name)
        if e is None:
            raise CheckpointShapeError(f"tensor {name!r} missing from checkpoint")
        if tuple(e["shape"]) != t.shape:
            raise CheckpointShapeError(
                f"tensor {name!r}: checkpoint shape {tuple(e['shape'])} != model shape {t.shape}")
        if e["dtype"] != "f32":
            raise CheckpointIntegrityError(f"tensor {name!r}: unsupported element type {e['dtype']!r}")
        end = e["offset"] + e["length"]
        if end > len(blob) or e["length"] != 4 * t.size:
            raise CheckpointIntegrityError(f"tensor {name!r}: byte range out of bounds")
        t.data = np.frombuffer(blob, dtype="<f4", count=t.size, offset=e["offset"]) \
            .astype(np.float32).reshape(t.shape)
    extra = set(stored) - set(state)
    if extra:
        raise CheckpointShapeError(f"checkpoint has tensors the model lacks: {sorted(extra)[0]!r}")
    model.eval()
    return model


def checkpoint_training_config(path) -> TrainingConfig | None:
    manifest, _ = read_checkpoint(path)
    t = manifest.get("training")
    return TrainingConfig.from_dict(t) if t else None
