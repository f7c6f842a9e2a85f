"""Reader and writer for the IDX image/label container (MNIST layout).

Byte layout, all integers big-endian unsigned 32-bit:

* images file: magic 0x00000803, count n, rows r, cols c, then n*r*c
  pixel bytes in row-major order;
* labels file: magic 0x00000801, count n, then n label bytes.

Pixels are scaled to [0, 1] by dividing by 255 on load; labels become
one-hot rows.  ``write_idx`` emits the identical layout so a load/write
round trip reproduces conforming files byte for byte.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC_IMAGES = 0x00000803
MAGIC_LABELS = 0x00000801


class IdxFormatError(ValueError):
    """Base class for malformed IDX input."""


class IdxMagicError(IdxFormatError):
    pass


class IdxTruncatedError(IdxFormatError):
    pass


class IdxCountMismatchError(IdxFormatError):
    pass


@dataclass(frozen=True)
class IdxInfo:
    kind: str  # "images" or "labels"
    magic: int
    count: int
    rows: int | None
    cols: int | None


def _read_header(data: bytes, path, n_fields: int) -> tuple[int, ...]:
    need = 4 * n_fields
    if len(data) < need:
        raise IdxTruncatedError(f"{path}: file shorter than its header")
    return struct.unpack(f">{n_fields}I", data[:need])


def inspect_idx(path) -> IdxInfo:
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise IdxTruncatedError(f"{path}: file shorter than its header")
    (magic,) = struct.unpack(">I", data[:4])
    if magic == MAGIC_IMAGES:
        _, count, rows, cols = _read_header(data, path, 4)
        if len(data) != 16 + count * rows * cols:
            raise IdxTruncatedError(
                f"{path}: expected {16 + count * rows * cols} bytes, "
                f"found {len(data)}")
        return IdxInfo("images", magic, count, rows, cols)
    if magic == MAGIC_LABELS:
        _, count = _read_header(data, path, 2)
        if len(data) != 8 + count:
            raise IdxTruncatedError(
                f"{path}: expected {8 + count} bytes, found {len(data)}")
        return IdxInfo("labels", magic, count, None, None)
    raise IdxMagicError(f"{path}: unrecognized magic number 0x{magic:08x}")


def read_idx_images(path) -> np.ndarray:
    """Raw pixel bytes as a (count, rows, cols) uint8 array."""
    data = Path(path).read_bytes()
    magic = struct.unpack(">I", data[:4])[0] if len(data) >= 4 else -1
    if magic != MAGIC_IMAGES:
        raise IdxMagicError(
            f"{path}: bad images magic 0x{magic:08x}, expected 0x{MAGIC_IMAGES:08x}")
    _, count, rows, cols = _read_header(data, path, 4)
    body = data[16:]
    if len(body) != count * rows * cols:
        raise IdxTruncatedError(
            f"{path}: expected {count * rows * cols} pixel bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(count, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    data = Path(path).read_bytes()
    magic = struct.unpack(">I", data[:4])[0] if len(data) >= 4 else -1
    if magic != MAGIC_LABELS:
        raise IdxMagicError(
            f"{path}: bad labels magic 0x{magic:08x}, expected 0x{MAGIC_LABELS:08x}")
    _, count = _read_header(data, path, 2)
    body = data[8:]
    if len(body) != count:
        raise IdxTruncatedError(
            f"{path}: expected {count} label bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).astype(np.int64)


def load_idx(images_path, labels_path, class_count: int | None = None):
    """Load an image/label pair into a one-hot classification dataset.

    Images are flattened row-major and scaled by 1/255.  When class_count
    is not given it is inferred as max(10, max label + 1).
    """
    from .datagen import ClassificationDataset, one_hot  # local: avoid cycle

    pixels = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if pixels.shape[0] != labels.shape[0]:
        raise IdxCountMismatchError(
            f"{images_path} holds {pixels.shape[0]} images but "
            f"{labels_path} holds {labels.shape[0]} labels")
    if class_count is None:
        class_count = max(10, int(labels.max()) + 1) if labels.size else 10
    features = pixels.reshape(pixels.shape[0], -1).astype(np.float64) / 255.0
    return ClassificationDataset(features, one_hot(labels, class_count))


def write_idx(images_path, labels_path, pixels: np.ndarray,
              labels: np.ndarray) -> None:
    """Emit a conforming image/label pair from uint8 pixels (n, rows, cols)."""
    pixels = np.asarray(pixels)
    labels = np.asarray(labels)
    if pixels.dtype != np.uint8 or pixels.ndim != 3:
        raise ValueError("pixels must be a (n, rows, cols) uint8 array")
    if labels.shape != (pixels.shape[0],):
        raise ValueError("labels length must match the image count")
    if labels.size and (labels.min() < 0 or labels.max() > 255):
        raise ValueError("labels must fit in one byte")
    n, rows, cols = pixels.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">4I", MAGIC_IMAGES, n, rows, cols))
        fh.write(pixels.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">2I", MAGIC_LABELS, n))
        fh.write(labels.astype(np.uint8).tobytes())
