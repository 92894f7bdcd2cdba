"""PNG/PPM image IO. Only these two formats are accepted so that byte-level
decode behaviour stays specifiable.
"""
from __future__ import annotations

import io

import numpy as np
from PIL import Image, UnidentifiedImageError

ACCEPTED_FORMATS = ("PNG", "PPM")


def decode_image_bytes(data: bytes) -> np.ndarray:
    """Image bytes -> float32 tensor [1, 3, H, W] with values in [0, 1]."""
    try:
        with Image.open(io.BytesIO(data)) as im:
            fmt = im.format
            if fmt not in ACCEPTED_FORMATS:
                raise ValueError(f"unsupported image format {fmt!r}; accepted: PNG, PPM")
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float32) / 255.0
    except UnidentifiedImageError as exc:
        raise ValueError(f"undecodable image: {exc}") from exc
    return arr.transpose(2, 0, 1)[None, :, :, :]


def encode_png(image: np.ndarray) -> bytes:
    """Float tensor [1, 3, H, W] in [0, 1] -> PNG bytes."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)[0]
    u8 = np.floor(arr * 255.0 + 0.5).astype(np.uint8).transpose(1, 2, 0)
    buf = io.BytesIO()
    Image.fromarray(u8, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def load_image(path) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_image_bytes(f.read())
