"""Byte-exact dataset loaders and the label-embedding scheme.

Four on-disk formats are understood:

* IDX (big-endian): magic 0x00000803 for image tensors, 0x00000801 for
  label vectors, unsigned dimension counts, then raw uint8 payload.
* CIFAR-10 binary: 3073-byte records, one label byte followed by 3072
  pixel bytes (red plane, green plane, blue plane, row-major).
* STL-10 binary: 27648-byte image records (red, green, blue planes,
  each 96x96 stored column-major) plus a separate file of 1-indexed
  label bytes. Rows keep the raw record byte order.

Pixels are scaled by 1/255 into [0, 1] at load; nothing else is applied
by default (standardizing would distort the embedded label signal).
Loaders never download anything; files are looked up under the
directory named by the FF_DATA_DIR environment variable.
"""

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagicError,
    CountMismatchError,
    DataFormatError,
    LabelRangeError,
    TruncatedFileError,
)

__all__ = [
    "Dataset",
    "NormalizationSpec",
    "DATASET_NAMES",
    "load_idx",
    "write_idx",
    "load_cifar10",
    "write_cifar10_batch",
    "load_stl10",
    "write_stl10",
    "load_dataset",
    "embed_label",
    "make_negative",
    "embed_neutral",
]

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 3073
STL_IMAGE_BYTES = 27648

DATASET_NAMES = ("mnist", "fashionmnist", "cifar10", "stl10")

_STANDARD_FILES = {
    "mnist": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
              "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
    "fashionmnist": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                     "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
    "cifar10": None,  # special-cased: five train batches plus test_batch
    "stl10": ("train_X.bin", "train_y.bin", "test_X.bin", "test_y.bin"),
}


@dataclass(frozen=True)
class Dataset:
    name: str
    train_images: np.ndarray  # B x D, float64 in [0, 1]
    train_labels: np.ndarray  # B, int64 in [0, num_classes)
    test_images: np.ndarray
    test_labels: np.ndarray
    num_classes: int = 10

    @property
    def dim(self):
        return self.train_images.shape[1]


@dataclass(frozen=True)
class NormalizationSpec:
    """Optional per-feature standardization; unused by the default
    pipeline, which keeps inputs in [0, 1] so the embedded label slots
    stay at full intensity."""

    per_channel_mean: np.ndarray
    per_channel_std: np.ndarray

    def __post_init__(self):
        if (self.per_channel_std <= 0).any():
            raise ValueError("NormalizationSpec: std entries must be > 0")

    @classmethod
    def fit(cls, images, floor=1e-8):
        std = images.std(axis=0)
        return cls(images.mean(axis=0), np.maximum(std, floor))

    def apply(self, images):
        return (images - self.per_channel_mean) / self.per_channel_std


def _read_bytes(path):
    if str(path).endswith(".gz"):
        with gzip.open(path, "rb") as fh:
            return fh.read()
    with open(path, "rb") as fh:
        return fh.read()


def _find_file(directory, filename):
    """The file itself, or its .gz sibling."""
    plain = os.path.join(directory, filename)
    if os.path.exists(plain):
        return plain
    gz = plain + ".gz"
    if os.path.exists(gz):
        return gz
    return None


def _parse_idx(raw, expected_magic, path):
    if len(raw) < 4:
        raise TruncatedFileError(f"{path}: shorter than the 4-byte magic")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise BadMagicError(
            f"{path}: unexpected magic 0x{magic:08x}, "
            f"wanted 0x{expected_magic:08x}"
        )
    ndim = magic & 0xFF
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise TruncatedFileError(f"{path}: truncated dimension header")
    dims = struct.unpack(f">{ndim}I", raw[4:header_end])
    payload = int(np.prod(dims, dtype=np.int64)) if dims else 0
    if len(raw) < header_end + payload:
        raise TruncatedFileError(
            f"{path}: payload has {len(raw) - header_end} bytes, "
            f"header declares {payload}"
        )
    data = np.frombuffer(raw, dtype=np.uint8, count=payload, offset=header_end)
    return dims, data


def load_idx(images_path, labels_path):
    """(images B x D in [0,1], labels B) from an IDX pair."""
    img_dims, img_data = _parse_idx(
        _read_bytes(images_path), IDX_IMAGE_MAGIC, images_path
    )
    lab_dims, lab_data = _parse_idx(
        _read_bytes(labels_path), IDX_LABEL_MAGIC, labels_path
    )
    count = img_dims[0]
    if lab_dims[0] != count:
        raise CountMismatchError(
            f"{images_path} holds {count} images but {labels_path} holds "
            f"{lab_dims[0]} labels"
        )
    dim = int(np.prod(img_dims[1:], dtype=np.int64)) if count else 0
    images = img_data.reshape(count, dim).astype(np.float64) / 255.0
    labels = lab_data.astype(np.int64)
    return np.ascontiguousarray(images), labels


def write_idx(images_path, labels_path, images, labels, image_shape=(28, 28)):
    """Serialize to the IDX pair format; inverse of load_idx."""
    images = np.asarray(images)
    count = images.shape[0]
    pixels = np.clip(np.round(images * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, count, *image_shape))
        fh.write(pixels.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABEL_MAGIC, count))
        fh.write(np.asarray(labels, dtype=np.uint8).tobytes())


def load_cifar10(batch_paths):
    """(images B x 3072 in [0,1], labels B) from binary batch files."""
    all_images, all_labels = [], []
    for path in batch_paths:
        raw = _read_bytes(path)
        if len(raw) % CIFAR_RECORD_BYTES:
            raise DataFormatError(
                f"{path}: length {len(raw)} is not a multiple of "
                f"{CIFAR_RECORD_BYTES}-byte records"
            )
        records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        labels = records[:, 0].astype(np.int64)
        if labels.size and labels.max() > 9:
            raise LabelRangeError(
                f"{path}: label {labels.max()} outside [0, 9]"
            )
        all_labels.append(labels)
        all_images.append(records[:, 1:].astype(np.float64) / 255.0)
    return (
        np.ascontiguousarray(np.concatenate(all_images, axis=0)),
        np.concatenate(all_labels),
    )


def write_cifar10_batch(path, images, labels):
    images = np.asarray(images)
    pixels = np.clip(np.round(images * 255.0), 0, 255).astype(np.uint8)
    records = np.concatenate(
        [np.asarray(labels, dtype=np.uint8).reshape(-1, 1), pixels], axis=1
    )
    with open(path, "wb") as fh:
        fh.write(records.tobytes())


def load_stl10(images_path, labels_path):
    """(images B x 27648 in [0,1], labels B 0-indexed) from binary files."""
    raw = _read_bytes(images_path)
    if len(raw) % STL_IMAGE_BYTES:
        raise DataFormatError(
            f"{images_path}: length {len(raw)} is not a multiple of "
            f"{STL_IMAGE_BYTES}-byte records"
        )
    images = (
        np.frombuffer(raw, dtype=np.uint8)
        .reshape(-1, STL_IMAGE_BYTES)
        .astype(np.float64)
        / 255.0
    )
    raw_labels = np.frombuffer(_read_bytes(labels_path), dtype=np.uint8)
    if raw_labels.shape[0] != images.shape[0]:
        raise CountMismatchError(
            f"{images_path} holds {images.shape[0]} images but "
            f"{labels_path} holds {raw_labels.shape[0]} labels"
        )
    if raw_labels.size and (raw_labels.min() < 1 or raw_labels.max() > 10):
        raise LabelRangeError(
            f"{labels_path}: labels must be 1-indexed in [1, 10], "
            f"found range [{raw_labels.min()}, {raw_labels.max()}]"
        )
    return np.ascontiguousarray(images), raw_labels.astype(np.int64) - 1


def write_stl10(images_path, labels_path, images, labels):
    images = np.asarray(images)
    pixels = np.clip(np.round(images * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(pixels.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write((np.asarray(labels, dtype=np.uint8) + 1).tobytes())


def data_root(override=None):
    root = override or os.environ.get("FF_DATA_DIR")
    if not root:
        raise DataFormatError(
            "no data directory: set FF_DATA_DIR or pass data_dir explicitly"
        )
    return root


def load_dataset(name, data_dir=None):
    """Load one of the four supported datasets from FF_DATA_DIR/<name>/."""
    if name not in DATASET_NAMES:
        raise DataFormatError(
            f"unknown dataset {name!r}; expected one of {DATASET_NAMES}"
        )
    root = os.path.join(data_root(data_dir), name)
    if not os.path.isdir(root):
        raise DataFormatError(
            f"dataset directory {root} does not exist; download the files "
            f"first (see scripts/fetch_data.py) and point FF_DATA_DIR at them"
        )

    def need(filename):
        found = _find_file(root, filename)
        if found is None:
            raise DataFormatError(f"missing dataset file {root}/{filename}[.gz]")
        return found

    if name == "cifar10":
        train_parts = [need(f"data_batch_{i}.bin") for i in range(1, 6)]
        train_images, train_labels = load_cifar10(train_parts)
        test_images, test_labels = load_cifar10([need("test_batch.bin")])
    elif name == "stl10":
        train_images, train_labels = load_stl10(need("train_X.bin"), need("train_y.bin"))
        test_images, test_labels = load_stl10(need("test_X.bin"), need("test_y.bin"))
    else:
        files = _STANDARD_FILES[name]
        train_images, train_labels = load_idx(need(files[0]), need(files[1]))
        test_images, test_labels = load_idx(need(files[2]), need(files[3]))
    return Dataset(name, train_images, train_labels, test_images, test_labels)


def _check_rows(rows, num_classes):
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if rows.shape[1] < num_classes:
        raise ValueError(
            f"image dimension {rows.shape[1]} is smaller than "
            f"num_classes {num_classes}; nowhere to embed the label"
        )
    return rows


def embed_label(rows, labels, num_classes):
    """Overwrite the first num_classes entries with a one-hot at 1.0.

    Accepts a single row or a batch; `labels` may be a scalar or a vector.
    """
    rows = _check_rows(rows, num_classes)
    labels = np.broadcast_to(np.asarray(labels, dtype=np.int64), rows.shape[0])
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise LabelRangeError(
            f"label outside [0, {num_classes}): range "
            f"[{labels.min()}, {labels.max()}]"
        )
    out = rows.copy()
    out[:, :num_classes] = 0.0
    out[np.arange(rows.shape[0]), labels] = 1.0
    return out


def make_negative(rows, true_labels, num_classes, rng):
    """(rows with a uniformly random WRONG label embedded, wrong labels)."""
    if num_classes < 2:
        raise ValueError("make_negative needs at least 2 classes")
    rows = _check_rows(rows, num_classes)
    true_labels = np.broadcast_to(
        np.asarray(true_labels, dtype=np.int64), rows.shape[0]
    )
    offsets = rng.integers(1, num_classes, size=rows.shape[0])
    wrong = (true_labels + offsets) % num_classes
    return embed_label(rows, wrong, num_classes), wrong


def embed_neutral(rows, num_classes):
    """Set the label slots to the uniform value 1/num_classes."""
    rows = _check_rows(rows, num_classes)
    out = rows.copy()
    out[:, :num_classes] = 1.0 / num_classes
    return out
