"""Noise residual extraction: R = X - f(X).

f is a denoising filter that estimates the scene content. Three kinds:

- gaussian: separable Gaussian blur with reflective borders (default).
- wavelet: single-level Haar transform, soft-thresholded detail bands.
- external: a precomputed denoised copy with the same file name,
  produced by any third-party denoiser.

Channels are filtered independently. Residuals are never clamped.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pywt
from scipy import ndimage

from synthtrace.constants import (
    DEFAULT_GAUSSIAN_SIGMA,
    DEFAULT_WAVELET_THRESHOLD,
    GAUSSIAN_TRUNCATE,
)
from synthtrace.core import ImageBuffer
from synthtrace.errors import ShapeError, ValidationError
from synthtrace.images import load_image

log = logging.getLogger(__name__)


class DenoiserKind(str, Enum):
    GAUSSIAN = "gaussian"
    WAVELET = "wavelet"
    EXTERNAL = "external"

    @classmethod
    def parse(cls, value: str) -> "DenoiserKind":
        if value == "wavelet_soft":
            return cls.WAVELET
        try:
            return cls(value)
        except ValueError:
            raise ValidationError(
                f"unknown denoiser '{value}'. Choose from: {[k.value for k in cls]}"
            ) from None


@dataclass(frozen=True)
class DenoiserConfig:
    kind: DenoiserKind = DenoiserKind.GAUSSIAN
    gaussian_sigma: float = DEFAULT_GAUSSIAN_SIGMA
    wavelet_threshold: float = DEFAULT_WAVELET_THRESHOLD
    external_dir: Optional[Path] = None

    def __post_init__(self) -> None:
        if not isinstance(self.kind, DenoiserKind):
            object.__setattr__(self, "kind", DenoiserKind.parse(self.kind))
        if not self.gaussian_sigma > 0:
            raise ValidationError(f"gaussian_sigma must be > 0, got {self.gaussian_sigma}")
        if not self.wavelet_threshold >= 0:
            raise ValidationError(
                f"wavelet_threshold must be >= 0, got {self.wavelet_threshold}"
            )
        if self.kind is DenoiserKind.EXTERNAL:
            if self.external_dir is None:
                raise ValidationError("external denoiser needs external_dir")
            object.__setattr__(self, "external_dir", Path(self.external_dir))


@dataclass(frozen=True, eq=False)
class NoiseResidual:
    """Signed residual samples with the shape of the source image."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3:
            raise ShapeError(f"expected H x W x C residual, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def gaussian_kernel1d(sigma: float, truncate: float = GAUSSIAN_TRUNCATE) -> np.ndarray:
    """Normalized 1-D Gaussian taps with radius ceil(truncate * sigma)."""
    radius = int(math.ceil(truncate * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (x / sigma) ** 2)
    return kernel / kernel.sum()


def _gaussian(data: np.ndarray, sigma: float) -> np.ndarray:
    kernel = gaussian_kernel1d(sigma)
    out = ndimage.correlate1d(data, kernel, axis=0, mode="reflect")
    return ndimage.correlate1d(out, kernel, axis=1, mode="reflect")


def _soft_shrink(coeffs: np.ndarray, threshold: float) -> np.ndarray:
    # Finite for zero coefficients at threshold 0
    return np.sign(coeffs) * np.maximum(np.abs(coeffs) - threshold, 0.0)


def _wavelet_soft(data: np.ndarray, threshold: float) -> np.ndarray:
    h, w, c = data.shape
    out = np.empty_like(data)
    for ch in range(c):
        approx, details = pywt.dwt2(data[:, :, ch], "haar", mode="symmetric")
        details = tuple(_soft_shrink(d, threshold) for d in details)
        out[:, :, ch] = pywt.idwt2((approx, details), "haar", mode="symmetric")[:h, :w]
    return out


def _load_external(name: str, config: DenoiserConfig, shape: tuple[int, ...]) -> ImageBuffer:
    path = config.external_dir / Path(name).name
    denoised = load_image(path)
    if denoised.shape != tuple(shape):
        raise ShapeError(
            f"external denoised image {path} has shape {denoised.shape}, expected {tuple(shape)}"
        )
    return denoised


def denoise(
    image: ImageBuffer, config: DenoiserConfig, name: Optional[str] = None,
) -> ImageBuffer:
    """Estimate the scene content f(X).

    Args:
        image: Input pixels.
        config: Denoiser selection and parameters.
        name: Source file name; required by the external kind to locate
            the denoised counterpart under config.external_dir.

    Returns:
        Denoised image of the same shape.
    """
    if config.kind is DenoiserKind.GAUSSIAN:
        return ImageBuffer(_gaussian(image.data, config.gaussian_sigma))
    if config.kind is DenoiserKind.WAVELET:
        return ImageBuffer(_wavelet_soft(image.data, config.wavelet_threshold))
    if name is None:
        raise ValidationError("external denoiser needs the source file name")
    return _load_external(name, config, image.shape)


def extract_residual(
    image: ImageBuffer, config: DenoiserConfig, name: Optional[str] = None,
) -> NoiseResidual:
    """Residual image - denoise(image), elementwise and unclamped."""
    return NoiseResidual(image.data - denoise(image, config, name).data)


def residual_for_file(
    path: Union[str, Path], config: DenoiserConfig, crop: int,
) -> NoiseResidual:
    """Central-crop one image file and return its residual.

    The external kind loads the denoised counterpart at full size and
    crops it with the same window as the source.
    """
    image = load_image(path)
    if config.kind is DenoiserKind.EXTERNAL:
        denoised = _load_external(Path(path).name, config, image.shape)
        return NoiseResidual(
            image.central_crop(crop).data - denoised.central_crop(crop).data
        )
    return extract_residual(image.central_crop(crop), config)
