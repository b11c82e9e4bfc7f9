"""Artificial fingerprint estimation and spectral analysis.

The fingerprint of a generator is estimated by averaging the noise
residuals of many of its images: the scene-dependent part cancels while
the quasi-periodic generation pattern survives. Its Fourier amplitude
spectrum shows that pattern as isolated peaks.

Accumulation is a sequential fold in manifest order (floating-point
summation order is fixed); residuals themselves are extracted in parallel.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Union

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage

from synthtrace.constants import (
    DC_EXCLUSION_RADIUS,
    DEFAULT_NEIGHBORHOOD,
    DEFAULT_PROMINENCE,
    GRID_COLUMNS,
    PEAK_FLOOR_RATIO,
    PEAK_SUMMARY_HEADER,
    PEAKS_HEADER,
    SPECTRUM_SCALES,
)
from synthtrace.core import DatasetManifest, ImageClass, format_score
from synthtrace.errors import ShapeError, ValidationError
from synthtrace.residual import DenoiserConfig, NoiseResidual, residual_for_file
from synthtrace.workers import parallel_map

log = logging.getLogger(__name__)

REAL_GROUP = ImageClass.REAL.value
_CHUNK_PER_THREAD = 4


@dataclass(frozen=True, eq=False)
class FingerprintEstimate:
    """Running sum of residuals and their count N."""

    sum: Optional[np.ndarray] = None
    count: int = 0

    @classmethod
    def empty(cls) -> "FingerprintEstimate":
        return cls()

    @property
    def shape(self) -> Optional[tuple[int, int, int]]:
        return None if self.sum is None else self.sum.shape

    def estimate(self) -> np.ndarray:
        """The average residual sum / N."""
        if self.count < 1 or self.sum is None:
            raise ValidationError("fingerprint has no accumulated residuals")
        return self.sum / self.count


def accumulate(acc: FingerprintEstimate, residual: NoiseResidual) -> FingerprintEstimate:
    """Add one residual to the running sum.

    Raises:
        ShapeError: residual shape differs from the ones already accumulated.
    """
    if acc.sum is None:
        return FingerprintEstimate(residual.data.copy(), 1)
    if residual.shape != acc.shape:
        raise ShapeError(f"residual shape {residual.shape} does not match {acc.shape}")
    return FingerprintEstimate(acc.sum + residual.data, acc.count + 1)


def estimate_fingerprint(
    manifest: DatasetManifest,
    denoiser: DenoiserConfig,
    crop: int,
    threads: int = 1,
) -> FingerprintEstimate:
    """Average the central-crop residuals of every manifest image.

    Residuals are computed in parallel in bounded chunks and folded in
    manifest order, so the result is bit-identical for any thread count.

    Raises:
        ValidationError: an image is smaller than crop x crop (path named).
        ImageDecodeError: an image cannot be decoded.
    """
    paths = [manifest.resolve(e.path) for e in manifest]
    if not paths:
        raise ValidationError("cannot estimate a fingerprint from an empty manifest")

    def _residual(path: Path) -> NoiseResidual:
        try:
            return residual_for_file(path, denoiser, crop)
        except ValidationError as e:
            raise ValidationError(f"{path}: {e}") from None

    acc = FingerprintEstimate.empty()
    chunk = max(1, threads * _CHUNK_PER_THREAD)
    for start in range(0, len(paths), chunk):
        for residual in parallel_map(_residual, paths[start:start + chunk], threads):
            acc = accumulate(acc, residual)
        log.debug("Accumulated %d/%d residuals.", acc.count, len(paths))
    log.info("Fingerprint estimated from %d residuals at %dx%d.", acc.count, crop, crop)
    return acc


def estimate_fingerprints_by_generator(
    manifest: DatasetManifest,
    denoiser: DenoiserConfig,
    crop: int,
    threads: int = 1,
) -> dict[str, FingerprintEstimate]:
    """One fingerprint per generator tag, plus one for the real images."""
    groups: dict[str, DatasetManifest] = {}
    for generator in manifest.generators():
        groups[generator] = manifest.subset(e.path for e in manifest.fakes_of(generator))
    reals = manifest.reals()
    if reals:
        groups[REAL_GROUP] = manifest.subset(e.path for e in reals)
    result = {}
    for name, group in groups.items():
        log.info("Estimating fingerprint of '%s' (%d images).", name, len(group))
        result[name] = estimate_fingerprint(group, denoiser, crop, threads)
    return result


@dataclass(frozen=True, eq=False)
class AmplitudeSpectrum:
    """Non-negative Fourier magnitudes with DC at the center (fftshift layout)."""

    values: np.ndarray
    scale: str = "linear"

    def __post_init__(self) -> None:
        if self.scale not in SPECTRUM_SCALES:
            raise ValidationError(f"unknown spectrum scale '{self.scale}'")
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeError(f"spectrum must be 2-D, got shape {values.shape}")
        object.__setattr__(self, "values", values)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def center(self) -> tuple[int, int]:
        return self.height // 2, self.width // 2

    def at(self, u: int, v: int) -> float:
        """Magnitude at signed bin offset (u, v) from DC."""
        cy, cx = self.center
        return float(self.values[(cy + u) % self.height, (cx + v) % self.width])

    def scaled(self, factor: float) -> "AmplitudeSpectrum":
        return AmplitudeSpectrum(self.values * factor, self.scale)


def plane_spectrum(
    plane: np.ndarray, scale: str = "linear", subtract_mean: bool = True,
) -> AmplitudeSpectrum:
    """Amplitude spectrum of one 2-D plane (unnormalized DFT convention)."""
    if scale not in SPECTRUM_SCALES:
        raise ValidationError(f"unknown spectrum scale '{scale}'")
    plane = np.asarray(plane, dtype=np.float64)
    if subtract_mean:
        plane = plane - plane.mean()
    magnitude = np.abs(np.fft.fftshift(np.fft.fft2(plane)))
    if scale == "log1p":
        magnitude = np.log1p(magnitude)
    return AmplitudeSpectrum(magnitude, scale)


def amplitude_spectrum(
    f: FingerprintEstimate, scale: str = "linear", subtract_mean: bool = True,
) -> AmplitudeSpectrum:
    """Spectrum of the fingerprint after averaging its channels."""
    return plane_spectrum(f.estimate().mean(axis=2), scale, subtract_mean)


@dataclass(frozen=True)
class SpectralPeak:
    u: int
    v: int
    magnitude: float
    prominence: float


def _sort_prominence(value: float) -> float:
    # 12 significant digits; ties from rounding fall through to (u, v)
    return float(f"{value:.12g}")


def detect_peaks(
    s: AmplitudeSpectrum,
    prominence_threshold: float = DEFAULT_PROMINENCE,
    neighborhood: int = DEFAULT_NEIGHBORHOOD,
) -> list[SpectralPeak]:
    """Find isolated spectral peaks.

    A bin is a peak when it is the strict maximum of its neighborhood
    (wrapping around, the spectrum is periodic), lies outside the 3x3
    zone around DC, and magnitude / neighborhood median reaches the
    threshold. Bins below a tiny fraction of the spectrum maximum count
    as background, which keeps the test a pure ratio.

    Returns:
        Peaks sorted by prominence, highest first.
    """
    if not prominence_threshold > 1:
        raise ValidationError(f"prominence threshold must be > 1, got {prominence_threshold}")
    if neighborhood < 3 or neighborhood % 2 == 0:
        raise ValidationError(f"neighborhood must be odd and >= 3, got {neighborhood}")

    values = s.values
    top = float(values.max())
    if top <= 0:
        return []
    floor = PEAK_FLOOR_RATIO * top

    footprint = np.ones((neighborhood, neighborhood), dtype=bool)
    footprint[neighborhood // 2, neighborhood // 2] = False
    neighbor_max = ndimage.maximum_filter(values, footprint=footprint, mode="wrap")
    local_median = ndimage.median_filter(values, size=neighborhood, mode="wrap")
    prominence = values / np.maximum(local_median, floor)

    keep = (values > neighbor_max) & (values > floor) & (prominence >= prominence_threshold)
    cy, cx = s.center
    r = DC_EXCLUSION_RADIUS
    keep[cy - r:cy + r + 1, cx - r:cx + r + 1] = False

    peaks = [
        SpectralPeak(int(row - cy), int(col - cx), float(values[row, col]), float(prominence[row, col]))
        for row, col in zip(*np.nonzero(keep))
    ]
    peaks.sort(key=lambda p: (-_sort_prominence(p.prominence), p.u, p.v))
    return peaks


def _normalized_uint8(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        return np.zeros(values.shape, dtype=np.uint8)
    return np.floor((values - lo) / (hi - lo) * 255.0 + 0.5).astype(np.uint8)


def render_spectrum(s: AmplitudeSpectrum, path: Union[str, Path]) -> None:
    """Write the spectrum as a min-max normalized grayscale PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(_normalized_uint8(s.values)).save(path, format="PNG")
    log.debug("Wrote spectrum %dx%d to %s", s.height, s.width, path)


def render_spectrum_grid(
    spectra: Mapping[str, AmplitudeSpectrum],
    path: Union[str, Path],
    columns: int = GRID_COLUMNS,
) -> None:
    """Labelled mosaic with one independently normalized panel per model."""
    if not spectra:
        raise ValidationError("no spectra to render")
    label_h, gap = 14, 4
    panel_h = max(s.height for s in spectra.values())
    panel_w = max(s.width for s in spectra.values())
    columns = max(1, min(columns, len(spectra)))
    rows = -(-len(spectra) // columns)
    canvas = Image.new(
        "L",
        (columns * (panel_w + gap) + gap, rows * (panel_h + label_h + gap) + gap),
        color=0,
    )
    draw = ImageDraw.Draw(canvas)
    for i, (name, s) in enumerate(spectra.items()):
        x = gap + (i % columns) * (panel_w + gap)
        y = gap + (i // columns) * (panel_h + label_h + gap)
        draw.text((x, y), name, fill=255)
        canvas.paste(Image.fromarray(_normalized_uint8(s.values)), (x, y + label_h))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    canvas.save(path, format="PNG")


def write_peaks_csv(peaks: list[SpectralPeak], path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(PEAKS_HEADER)
        for p in peaks:
            writer.writerow([p.u, p.v, format_score(p.magnitude), format_score(p.prominence)])


@dataclass(frozen=True)
class PeakSummary:
    n_peaks: int
    max_prominence: float


def peak_summary(peaks: list[SpectralPeak]) -> PeakSummary:
    """How strong the periodic artifacts of one fingerprint are."""
    return PeakSummary(len(peaks), max((p.prominence for p in peaks), default=0.0))


def write_peak_summary_csv(
    rows: Mapping[str, tuple[int, PeakSummary]], path: Union[str, Path],
) -> None:
    """rows maps group name -> (number of images, summary)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(PEAK_SUMMARY_HEADER)
        for name, (n_images, summary) in rows.items():
            writer.writerow([name, n_images, summary.n_peaks, format_score(summary.max_prominence)])
