"""Binary PPM (P6, 8-bit) read/write for 3 x H x W images in [0, 1]."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np


class PpmFormatError(ValueError):
    pass


def encode_ppm(image: np.ndarray) -> bytes:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise PpmFormatError(f"expected a 3 x H x W image, got shape {img.shape}")
    _, h, w = img.shape
    pixels = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    return f"P6\n{w} {h}\n255\n".encode() + pixels.transpose(1, 2, 0).tobytes()


def decode_ppm(blob: bytes) -> np.ndarray:
    header = re.match(rb"P6\s+(?:#[^\n]*\s+)*(\d+)\s+(\d+)\s+(\d+)\s", blob)
    if header is None:
        raise PpmFormatError("not a binary PPM (P6) file")
    w, h, maxval = (int(g) for g in header.groups())
    if maxval != 255:
        raise PpmFormatError(f"only 8-bit PPM is supported, got maxval {maxval}")
    body = blob[header.end():]
    if len(body) != w * h * 3:
        raise PpmFormatError(f"pixel payload is {len(body)} bytes, expected {w * h * 3}")
    pixels = np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3)
    return pixels.transpose(2, 0, 1).astype(np.float64) / 255.0


def write_ppm(path, image: np.ndarray) -> None:
    Path(path).write_bytes(encode_ppm(image))


def read_ppm(path) -> np.ndarray:
    return decode_ppm(Path(path).read_bytes())
