"""Synthetic test corpus with a planted periodic fingerprint.

Real images are smooth filtered noise plus fine sensor-like noise.
Fake images are the same plus a point lattice of fixed period, the kind
of quasi-periodic trace that upsampling layers leave behind. Every image
is drawn from its own derive_item_rng stream.
"""

import logging
from pathlib import Path
from typing import Union

import numpy as np
from scipy import ndimage

from synthtrace.constants import MANIFEST_FILE_NAME
from synthtrace.core import (
    DatasetManifest,
    ImageBuffer,
    Label,
    ManifestEntry,
    derive_item_rng,
    write_manifest,
)
from synthtrace.errors import ValidationError
from synthtrace.images import save_png

log = logging.getLogger(__name__)

DEFAULT_GENERATOR = "planted_grid"
DEFAULT_PERIOD = 8
DEFAULT_GRID_AMPLITUDE = 0.05
DEFAULT_NOISE_SIGMA = 0.02
BACKGROUND_SIGMA = 4.0
BACKGROUND_AMPLITUDE = 0.1


def planted_grid(size: int, period: int = DEFAULT_PERIOD, amplitude: float = DEFAULT_GRID_AMPLITUDE) -> np.ndarray:
    """size x size lattice: amplitude where row and column are multiples of period."""
    on = (np.arange(size) % period) == 0
    return amplitude * np.outer(on, on).astype(np.float64)


def smooth_background(rng: np.random.Generator, size: int, channels: int = 1) -> np.ndarray:
    """Low-pass random field around 0.5 with a fixed standard deviation."""
    field = rng.standard_normal((size, size, channels))
    field = ndimage.gaussian_filter(field, sigma=(BACKGROUND_SIGMA, BACKGROUND_SIGMA, 0), mode="wrap")
    field *= BACKGROUND_AMPLITUDE / max(float(field.std()), 1e-12)
    return 0.5 + field


def corpus_image(
    rng: np.random.Generator,
    size: int,
    fake: bool,
    channels: int = 1,
    period: int = DEFAULT_PERIOD,
    grid_amplitude: float = DEFAULT_GRID_AMPLITUDE,
    noise_sigma: float = DEFAULT_NOISE_SIGMA,
) -> ImageBuffer:
    data = smooth_background(rng, size, channels)
    data += noise_sigma * rng.standard_normal(data.shape)
    if fake:
        data += planted_grid(size, period, grid_amplitude)[:, :, np.newaxis]
    return ImageBuffer(np.clip(data, 0.0, 1.0))


def generate_corpus(
    n_real: int,
    n_fake: int,
    size: int = 256,
    seed: int = 0,
    **kwargs,
) -> list[tuple[ImageBuffer, Label]]:
    """In-memory corpus: n_real real images followed by n_fake fakes."""
    if n_real < 0 or n_fake < 0 or size < 16:
        raise ValidationError("corpus needs non-negative counts and size >= 16")
    generator = kwargs.pop("generator", DEFAULT_GENERATOR)
    items = []
    for i in range(n_real + n_fake):
        fake = i >= n_real
        image = corpus_image(derive_item_rng(seed, i), size, fake, **kwargs)
        items.append((image, Label.synthetic(generator) if fake else Label.real()))
    return items


def write_corpus(
    out_dir: Union[str, Path],
    n_real: int,
    n_fake: int,
    size: int = 256,
    seed: int = 0,
    **kwargs,
) -> DatasetManifest:
    """Write the corpus as PNG files plus manifest.csv into out_dir."""
    out_dir = Path(out_dir)
    entries = []
    for i, (image, label) in enumerate(generate_corpus(n_real, n_fake, size, seed, **kwargs)):
        name = f"{'fake' if label.is_synthetic else 'real'}_{i:05d}.png"
        save_png(image, out_dir / name)
        entries.append(ManifestEntry(name, label))
    manifest = DatasetManifest(tuple(entries), out_dir)
    write_manifest(manifest, out_dir / MANIFEST_FILE_NAME)
    log.info("Wrote %d real and %d synthetic images to %s", n_real, n_fake, out_dir)
    return manifest
