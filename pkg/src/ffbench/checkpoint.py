"""Versioned binary checkpoint container.

Layout (all integers little-endian):

    bytes 0..3    magic b"FFCK"
    bytes 4..7    u32 format version (currently 1)
    bytes 8..15   u64 header length in bytes
    header        UTF-8 JSON, keys sorted, no whitespace
    payload       raw float64 little-endian arrays, C order, in exactly
                  the order listed by the header's array manifest

The header carries the full config echo, per-layer scalar state (Adam
step, covariance batch count), the array manifest (name + shape), and
the RNG position, so a load reproduces the run state bit for bit.
Identical runs produce byte-identical files: the JSON form is canonical
and float64 payloads are exact.
"""

import dataclasses
import json
import struct

import numpy as np

from .engine import FFConfig, LayerState, build_layers
from .errors import BadMagicError, DataFormatError, TruncatedFileError
from .goodness import GoodnessParams
from .tensor import Rng

__all__ = [
    "CHECKPOINT_MAGIC",
    "CHECKPOINT_VERSION",
    "config_to_dict",
    "config_from_dict",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_MAGIC = b"FFCK"
CHECKPOINT_VERSION = 1


def config_to_dict(cfg):
    """JSON-ready dict of every semantic config field."""
    out = dataclasses.asdict(cfg)
    out["layer_sizes"] = list(cfg.layer_sizes)
    if cfg.multipass_layers is not None:
        out["multipass_layers"] = list(cfg.multipass_layers)
    return out


def config_from_dict(data):
    data = dict(data)
    params = data.pop("goodness_params", None) or {}
    data["goodness_params"] = GoodnessParams(**params)
    data["layer_sizes"] = tuple(data["layer_sizes"])
    if data.get("multipass_layers") is not None:
        data["multipass_layers"] = tuple(data["multipass_layers"])
    return FFConfig(**data)


def _canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(path, cfg, layers, rng, input_dim, num_classes, extra=None):
    layer_entries = []
    payload_parts = []
    for layer in layers:
        arrays = layer.arrays()
        manifest = []
        for name in sorted(arrays):
            arr = np.ascontiguousarray(arrays[name], dtype="<f8")
            manifest.append({"name": name, "shape": list(arr.shape)})
            payload_parts.append(arr.tobytes())
        layer_entries.append({
            "in_dim": layer.in_dim,
            "out_dim": layer.out_dim,
            "scalars": layer.scalars(),
            "arrays": manifest,
        })
    header = {
        "config": config_to_dict(cfg),
        "input_dim": int(input_dim),
        "num_classes": int(num_classes),
        "layers": layer_entries,
        "rng": rng.get_state() if rng is not None else None,
        "extra": extra or {},
    }
    header_bytes = _canonical_json(header)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for part in payload_parts:
            fh.write(part)


def load_checkpoint(path):
    """(cfg, layers, rng, header dict); arrays restored bit for bit."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16:
        raise TruncatedFileError(f"{path}: shorter than the fixed 16-byte prefix")
    if raw[:4] != CHECKPOINT_MAGIC:
        raise BadMagicError(
            f"{path}: unexpected magic {raw[:4]!r}, wanted {CHECKPOINT_MAGIC!r}"
        )
    (version,) = struct.unpack("<I", raw[4:8])
    if version != CHECKPOINT_VERSION:
        raise DataFormatError(
            f"{path}: unsupported checkpoint version {version}"
        )
    (header_len,) = struct.unpack("<Q", raw[8:16])
    if len(raw) < 16 + header_len:
        raise TruncatedFileError(f"{path}: truncated header")
    header = json.loads(raw[16:16 + header_len].decode("utf-8"))
    cfg = config_from_dict(header["config"])

    layers = build_layers(header["input_dim"], cfg, Rng(0).child("init"))
    if len(layers) != len(header["layers"]):
        raise DataFormatError(
            f"{path}: header lists {len(header['layers'])} layers, "
            f"config builds {len(layers)}"
        )
    offset = 16 + header_len
    for layer, entry in zip(layers, header["layers"]):
        mapping = {}
        for item in entry["arrays"]:
            shape = tuple(item["shape"])
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            nbytes = count * 8
            if len(raw) < offset + nbytes:
                raise TruncatedFileError(
                    f"{path}: truncated payload at array {item['name']}"
                )
            arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
            mapping[item["name"]] = arr.reshape(shape)
            offset += nbytes
        layer.load_snapshot(mapping, entry["scalars"])
    if offset != len(raw):
        raise DataFormatError(
            f"{path}: {len(raw) - offset} trailing bytes after the payload"
        )

    rng = None
    if header.get("rng") is not None:
        rng = Rng(0)
        rng.set_state(header["rng"])
    return cfg, layers, rng, header
