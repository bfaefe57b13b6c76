"""Loader for the big-endian IDX image/label container format."""

from __future__ import annotations

import struct

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class IdxParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def _read_exact(fh, count: int, offset: int) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise IdxParseError(
            f"truncated file: wanted {count} bytes, got {len(data)}", offset)
    return data


def _read_u32(fh, offset: int) -> int:
    return struct.unpack(">I", _read_exact(fh, 4, offset))[0]


def load_idx_images(path) -> np.ndarray:
    """Parse an IDX image file into (n, rows*cols) float64 pixels in [0, 1]."""
    with open(path, "rb") as fh:
        magic = _read_u32(fh, 0)
        if magic != IMAGE_MAGIC:
            raise IdxParseError(
                f"bad image magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}", 0)
        n = _read_u32(fh, 4)
        rows = _read_u32(fh, 8)
        cols = _read_u32(fh, 12)
        payload = _read_exact(fh, n * rows * cols, 16)
    pixels = np.frombuffer(payload, dtype=np.uint8).astype(np.float64)
    return pixels.reshape(n, rows * cols) / 255.0


def load_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = _read_u32(fh, 0)
        if magic != LABEL_MAGIC:
            raise IdxParseError(
                f"bad label magic 0x{magic:08x}, expected 0x{LABEL_MAGIC:08x}", 0)
        n = _read_u32(fh, 4)
        payload = _read_exact(fh, n, 8)
    return np.frombuffer(payload, dtype=np.uint8).astype(np.int64)


def load_idx(images_path, labels_path):
    """Load a matched (features, labels) pair; counts must agree."""
    features = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if features.shape[0] != labels.shape[0]:
        raise IdxParseError(
            f"image count {features.shape[0]} != label count {labels.shape[0]}", 4)
    return features, labels
