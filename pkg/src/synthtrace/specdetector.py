"""Frequency-analysis detector: radial spectrum features + logistic regression.

Features are the azimuthally averaged log power spectrum of a central
crop (never resized, resampling would erase the high-frequency traces
this detector looks for). The classifier is an L2-regularized logistic
regression trained by deterministic full-batch gradient descent.
"""

import functools
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import expit

from synthtrace.constants import (
    DEFAULT_BINS,
    DEFAULT_ITERATIONS,
    DEFAULT_L2,
    DEFAULT_LEARNING_RATE,
    MODEL_MAGIC,
    MODEL_VERSION,
)
from synthtrace.core import DatasetManifest, ImageBuffer, Label, ScoreSet
from synthtrace.errors import ModelFormatError, TrainingError, ValidationError
from synthtrace.images import load_image
from synthtrace.workers import parallel_map

log = logging.getLogger(__name__)

DETECTOR_NAME = "spec"


@dataclass(frozen=True, eq=False)
class SpectralFeatures:
    """Unit-sum radial profile of K bins."""

    profile: np.ndarray

    def __post_init__(self) -> None:
        profile = np.asarray(self.profile, dtype=np.float64).ravel()
        profile.setflags(write=False)
        object.__setattr__(self, "profile", profile)

    @property
    def bins(self) -> int:
        return self.profile.size


@functools.lru_cache(maxsize=16)
def _radial_bins(crop: int, bins: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-pixel bin index, validity mask and pixel count per bin.

    Bins have equal width from radius 1 (one bin above DC) to Nyquist.
    """
    nyquist = crop / 2.0
    if bins < 1 or nyquist <= 1:
        raise ValidationError(f"cannot build {bins} radial bins for crop {crop}")
    if bins > crop // 2:
        raise ValidationError(
            f"{bins} bins is too many for crop {crop} (at most {crop // 2})"
        )
    offsets = np.arange(crop) - crop // 2
    radius = np.hypot(offsets[:, None], offsets[None, :])
    width = (nyquist - 1.0) / bins
    index = np.minimum(np.floor((radius - 1.0) / width).astype(np.int64), bins - 1)
    valid = (radius >= 1.0) & (radius <= nyquist)
    counts = np.bincount(index[valid], minlength=bins)
    if not counts.all():
        raise ValidationError(f"{bins} bins leave an empty radius ring for crop {crop}")
    return index, valid, counts


def spectral_features(
    image: ImageBuffer, crop: int, bins: int = DEFAULT_BINS,
) -> SpectralFeatures:
    """Radial log power profile of the central crop.

    Steps: channel mean, central crop, mean removal, windowless 2-D FFT
    power, azimuthal average into equal-width radius bins, log1p,
    normalization to unit sum.

    Raises:
        ValidationError: image smaller than crop x crop.
    """
    plane = image.central_crop(crop).grayscale()
    plane = plane - plane.mean()
    power = np.abs(np.fft.fftshift(np.fft.fft2(plane))) ** 2
    index, valid, counts = _radial_bins(crop, bins)
    sums = np.bincount(index[valid], weights=power[valid], minlength=bins)
    profile = np.log1p(sums / counts)
    total = profile.sum()
    if total <= 0:
        return SpectralFeatures(np.full(bins, 1.0 / bins))
    return SpectralFeatures(profile / total)


def features_for_manifest(
    manifest: DatasetManifest, crop: int, bins: int = DEFAULT_BINS, threads: int = 1,
) -> list[SpectralFeatures]:
    """Features of every manifest image, in manifest order."""

    def _one(path: str) -> SpectralFeatures:
        try:
            return spectral_features(load_image(manifest.resolve(path)), crop, bins)
        except ValidationError as e:
            raise ValidationError(f"{path}: {e}") from None

    feats = parallel_map(_one, manifest.paths, threads)
    log.info("Extracted %d-bin features from %d images.", bins, len(feats))
    return feats


@dataclass(frozen=True)
class TrainingMeta:
    iterations: int
    l2_lambda: float
    final_loss: float
    learning_rate: float = DEFAULT_LEARNING_RATE
    crop: Optional[int] = None
    seed: Optional[int] = None
    loss_history: tuple[float, ...] = field(default=(), compare=False, repr=False)


@dataclass(frozen=True, eq=False)
class LogRegModel:
    """score(x) = sigmoid(w . x + b) on raw (unstandardized) features."""

    weights: np.ndarray
    bias: float
    meta: TrainingMeta

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights, dtype=np.float64).ravel()
        if not np.all(np.isfinite(weights)) or not math.isfinite(self.bias):
            raise ValidationError("model weights and bias must be finite")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def bins(self) -> int:
        return self.weights.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LogRegModel):
            return NotImplemented
        return (
            np.array_equal(self.weights, other.weights)
            and self.bias == other.bias
            and self.meta == other.meta
        )

    __hash__ = None  # type: ignore[assignment]


def _as_matrix(features: Sequence[Union[SpectralFeatures, np.ndarray]]) -> np.ndarray:
    rows = [np.asarray(getattr(f, "profile", f), dtype=np.float64).ravel() for f in features]
    if not rows:
        raise ValidationError("no training features")
    k = rows[0].size
    for i, row in enumerate(rows):
        if row.size != k:
            raise ValidationError(f"feature {i} has {row.size} bins, expected {k}")
    return np.vstack(rows)


def logistic_loss_and_grad(
    w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float,
) -> tuple[float, np.ndarray, float]:
    """Mean logistic loss + (l2 / 2) * |w|^2 and its gradient.

    Returns:
        (loss, dloss/dw, dloss/db). The bias is not regularized.
    """
    z = X @ w + b
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * np.dot(w, w))
    residual = expit(z) - y
    grad_w = X.T @ residual / X.shape[0] + l2 * w
    grad_b = float(np.mean(residual))
    return loss, grad_w, grad_b


def train(
    features: Sequence[Union[SpectralFeatures, np.ndarray]],
    labels: Sequence[Label],
    l2_lambda: float = DEFAULT_L2,
    iterations: int = DEFAULT_ITERATIONS,
    learning_rate: float = DEFAULT_LEARNING_RATE,
    standardize: bool = True,
    crop: Optional[int] = None,
    seed: Optional[int] = None,
) -> LogRegModel:
    """Fit the classifier by full-batch gradient descent from zero weights.

    With standardize=True the features are z-scored for optimization and
    the transform is folded back into the returned weights and bias.

    Raises:
        ValidationError: fewer than 2 examples of a class, ragged features.
        TrainingError: the loss became non-finite.
    """
    X = _as_matrix(features)
    if len(labels) != X.shape[0]:
        raise ValidationError(f"{X.shape[0]} feature rows but {len(labels)} labels")
    y = np.array([1.0 if lab.is_synthetic else 0.0 for lab in labels])
    n_fake = int(y.sum())
    n_real = y.size - n_fake
    if n_fake < 2 or n_real < 2:
        raise ValidationError(
            f"need at least 2 examples of each class, got {n_real} real / {n_fake} synthetic"
        )
    if iterations < 1 or not learning_rate > 0 or not l2_lambda >= 0:
        raise ValidationError("iterations >= 1, learning_rate > 0 and l2 >= 0 required")

    mu = np.zeros(X.shape[1])
    sd = np.ones(X.shape[1])
    if standardize:
        mu = X.mean(axis=0)
        sd = X.std(axis=0)
        sd[sd == 0] = 1.0
    Z = (X - mu) / sd

    w = np.zeros(X.shape[1])
    b = 0.0
    history: list[float] = []
    for it in range(iterations):
        loss, grad_w, grad_b = logistic_loss_and_grad(w, b, Z, y, l2_lambda)
        if not math.isfinite(loss):
            raise TrainingError(f"loss diverged at iteration {it}; lower the learning rate")
        history.append(loss)
        w = w - learning_rate * grad_w
        b = b - learning_rate * grad_b
    final_loss, _, _ = logistic_loss_and_grad(w, b, Z, y, l2_lambda)
    if not math.isfinite(final_loss):
        raise TrainingError("loss diverged at the last iteration; lower the learning rate")
    log.info(
        "Trained on %d real / %d synthetic, %d iterations, final loss %.6f.",
        n_real, n_fake, iterations, final_loss,
    )

    weights = w / sd
    bias = b - float(np.dot(weights, mu))
    meta = TrainingMeta(
        iterations, float(l2_lambda), final_loss, float(learning_rate),
        crop, seed, tuple(history),
    )
    return LogRegModel(weights, bias, meta)


def score_features(model: LogRegModel, features: Union[SpectralFeatures, np.ndarray]) -> float:
    x = np.asarray(getattr(features, "profile", features), dtype=np.float64).ravel()
    if x.size != model.bins:
        raise ValidationError(f"features have {x.size} bins but the model expects {model.bins}")
    return float(expit(float(np.dot(model.weights, x)) + model.bias))


def score(model: LogRegModel, image: ImageBuffer, crop: int) -> float:
    """Probability-like score in (0, 1); higher = more likely synthetic."""
    return score_features(model, spectral_features(image, crop, model.bins))


def score_manifest(
    model: LogRegModel, manifest: DatasetManifest, crop: int, threads: int = 1,
) -> ScoreSet:
    feats = features_for_manifest(manifest, crop, model.bins, threads)
    return ScoreSet(
        tuple((p, score_features(model, f)) for p, f in zip(manifest.paths, feats)),
        DETECTOR_NAME,
    )


def save_model(model: LogRegModel, path: Union[str, Path]) -> None:
    meta = asdict(model.meta)
    meta.pop("loss_history")
    doc = {
        "magic": MODEL_MAGIC,
        "version": MODEL_VERSION,
        "bins": model.bins,
        "weights": [float(v) for v in model.weights],
        "bias": model.bias,
        "meta": meta,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2)
    log.debug("Saved model to %s", path)


def load_model(path: Union[str, Path]) -> LogRegModel:
    """Load a model file written by save_model.

    Raises:
        ModelFormatError: wrong magic/version, corrupt or inconsistent content.
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except FileNotFoundError:
        raise ModelFormatError(f"model file not found: {path}") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ModelFormatError(f"corrupt model file {path}: {e}") from None
    if not isinstance(doc, dict) or doc.get("magic") != MODEL_MAGIC:
        raise ModelFormatError(f"{path} is not a {MODEL_MAGIC} model")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(
            f"{path} has model version {doc.get('version')}, expected {MODEL_VERSION}"
        )
    try:
        weights = np.array(doc["weights"], dtype=np.float64)
        if weights.ndim != 1 or weights.size != int(doc["bins"]):
            raise ModelFormatError(f"{path}: weights do not match bins={doc['bins']}")
        meta = TrainingMeta(**doc["meta"])
        return LogRegModel(weights, float(doc["bias"]), meta)
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"corrupt model file {path}: {e}") from None
