"""Image decode/encode using Pillow.

PNG and baseline JPEG are read as 8-bit samples and mapped to [0, 1]
floats by v / 255. Writing maps back with round-half-up after clamping.
"""

import io
import logging
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from synthtrace.constants import JPEG_SUBSAMPLING
from synthtrace.core import ImageBuffer
from synthtrace.errors import ImageDecodeError, ValidationError

log = logging.getLogger(__name__)


def _to_buffer(img: Image.Image) -> ImageBuffer:
    if img.mode in ("1", "L", "LA", "I;16", "I"):
        if img.mode.startswith("I"):
            raise ImageDecodeError(f"unsupported {img.mode} image: only 8 bits per channel")
        img = img.convert("L")
    elif img.mode != "RGB":
        img = img.convert("RGB")
    arr = np.asarray(img, dtype=np.uint8)
    return ImageBuffer(arr.astype(np.float64) / 255.0)


def load_image(path: Union[str, Path]) -> ImageBuffer:
    """Decode a PNG or JPEG file into an ImageBuffer.

    Raises:
        ImageDecodeError: file missing, unreadable, or not an 8-bit image.
    """
    try:
        with Image.open(path) as img:
            img.load()
            return _to_buffer(img)
    except FileNotFoundError:
        raise ImageDecodeError(f"image not found: {path}") from None
    except (UnidentifiedImageError, OSError) as e:
        raise ImageDecodeError(f"cannot decode {path}: {e}") from None


def decode_bytes(data: bytes) -> ImageBuffer:
    try:
        with Image.open(io.BytesIO(data)) as img:
            img.load()
            return _to_buffer(img)
    except (UnidentifiedImageError, OSError) as e:
        raise ImageDecodeError(f"cannot decode image bytes: {e}") from None


def to_uint8(image: ImageBuffer) -> np.ndarray:
    """H x W x C uint8 samples, clamped and rounded half-up."""
    return np.floor(np.clip(image.data, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def to_pil(image: ImageBuffer) -> Image.Image:
    arr = to_uint8(image)
    if image.channels == 1:
        return Image.fromarray(arr[:, :, 0])
    return Image.fromarray(arr)


def from_pil(img: Image.Image) -> ImageBuffer:
    return _to_buffer(img)


def save_png(image: ImageBuffer, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    to_pil(image).save(path, format="PNG")


def encode_jpeg(img: Image.Image, quality: int) -> bytes:
    """Baseline sequential JPEG with standard tables scaled by quality.

    Colour images use 4:2:0 chroma subsampling.
    """
    if not 1 <= quality <= 100:
        raise ValidationError(f"JPEG quality must be in [1, 100], got {quality}")
    buf = io.BytesIO()
    options = {"quality": int(quality), "optimize": False, "progressive": False}
    if img.mode == "RGB":
        options["subsampling"] = JPEG_SUBSAMPLING
    img.save(buf, format="JPEG", **options)
    return buf.getvalue()
