"""Small file and image I/O helpers."""

from __future__ import annotations

import io
import json
import os
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .core import Image
from .errors import InvalidInputError


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temp file and rename, so readers never see partial files."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode())


def write_json(path, payload) -> None:
    atomic_write_text(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")


def load_image(path) -> Image:
    """Load any Pillow-readable image as an RGB pixel grid."""
    try:
        with PILImage.open(path) as img:
            return Image(pixels=np.asarray(img.convert("RGB")))
    except (OSError, ValueError) as exc:
        raise InvalidInputError(f"cannot read image {path}: {exc}") from exc


def save_image(image: Image, path) -> None:
    buf = io.BytesIO()
    PILImage.fromarray(image.pixels, mode="RGB").save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


def encode_png(image: Image) -> bytes:
    buf = io.BytesIO()
    PILImage.fromarray(image.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def save_grayscale_png(values: np.ndarray, path) -> None:
    """Save an HxW array in [0, 1] as an 8-bit grayscale PNG (value*255, rounded)."""
    if values.ndim != 2:
        raise InvalidInputError("grayscale map must be 2-D")
    if np.any(values < 0) or np.any(values > 1):
        raise InvalidInputError("grayscale map values must lie in [0, 1]")
    data = np.rint(values * 255).astype(np.uint8)
    buf = io.BytesIO()
    PILImage.fromarray(data, mode="L").save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


def load_grayscale_png(path) -> np.ndarray:
    with PILImage.open(path) as img:
        return np.asarray(img.convert("L")).astype(np.float64) / 255.0
