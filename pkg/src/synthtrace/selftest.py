"""Embedded invariant checks behind the `selftest` subcommand.

Each check builds its own small fixture and compares against an
independent oracle, so it runs without any data on disk.
"""

import logging
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from synthtrace.core import ImageBuffer, Label, derive_item_rng
from synthtrace.evaluation import platt_fit, roc_auc
from synthtrace.fingerprint import detect_peaks, plane_spectrum
from synthtrace.residual import DenoiserConfig, extract_residual

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def pairwise_auc(real: np.ndarray, fake: np.ndarray) -> float:
    """Brute-force Mann-Whitney AUC over all (fake, real) pairs."""
    diff = fake[:, None] - real[None, :]
    return float(((diff > 0) + 0.5 * (diff == 0)).mean())


def _check_auc_oracle() -> str:
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(200):
        real = rng.integers(0, 10, rng.integers(1, 21)) / 10.0
        fake = rng.integers(0, 10, rng.integers(1, 21)) / 10.0
        worst = max(worst, abs(roc_auc(real, fake) - pairwise_auc(real, fake)))
    if worst > 1e-12:
        raise AssertionError(f"rank AUC deviates from pairwise AUC by {worst:.3g}")
    return f"200 tied instances, max deviation {worst:.1e}"


def _check_fft_cosine() -> str:
    x = np.arange(64)
    plane = np.tile(np.cos(2 * np.pi * x / 8), (64, 1))
    s = plane_spectrum(plane)
    expected = 64 * 64 / 2
    for v in (8, -8):
        if abs(s.at(0, v) - expected) > 1e-6 * expected:
            raise AssertionError(f"bin (0,{v}) = {s.at(0, v)}, expected {expected}")
    peaks = {(p.u, p.v) for p in detect_peaks(s, 5.0, 9)}
    if peaks != {(0, 8), (0, -8)}:
        raise AssertionError(f"detected peaks {sorted(peaks)}")
    return "cos(2*pi*x/8) on 64x64 gives two bins of 2048"


def _check_platt_symmetry() -> str:
    scores = [0.1, 0.2, 0.8, 0.9]
    labels = [Label.real(), Label.real(), Label.synthetic("g"), Label.synthetic("g")]
    swapped = [Label.synthetic("g"), Label.synthetic("g"), Label.real(), Label.real()]
    p = platt_fit(scores, labels)
    q = platt_fit(scores, swapped)
    if not p.a < 0:
        raise AssertionError(f"slope a={p.a} should be negative")
    if abs(p.a + q.a) > 1e-6 or abs(p.b + q.b) > 1e-6:
        raise AssertionError(f"({p.a}, {p.b}) vs swapped ({q.a}, {q.b})")
    return f"a={p.a:.4f}, b={p.b:.4f}, swap negates both"


def _check_rng_determinism() -> str:
    first = derive_item_rng(42, 7).random(10)
    again = derive_item_rng(42, 7).random(10)
    other = derive_item_rng(42, 8).random(10)
    if not np.array_equal(first, again) or np.array_equal(first, other):
        raise AssertionError("per-item streams are not a pure function of (seed, index)")
    return "streams reproducible and distinct"


def _check_constant_residual() -> str:
    image = ImageBuffer(np.full((32, 32, 3), 0.5))
    residual = extract_residual(image, DenoiserConfig())
    worst = float(np.abs(residual.data).max())
    if worst > 1e-12:
        raise AssertionError(f"residual of a constant image reaches {worst:.3g}")
    return "constant image has zero residual"


CHECKS: list[tuple[str, Callable[[], str]]] = [
    ("auc-oracle", _check_auc_oracle),
    ("fft-cosine", _check_fft_cosine),
    ("platt-symmetry", _check_platt_symmetry),
    ("rng-determinism", _check_rng_determinism),
    ("constant-residual", _check_constant_residual),
]


def run_selftest() -> list[CheckResult]:
    results = []
    for name, check in CHECKS:
        start = time.perf_counter()
        try:
            detail, passed = check(), True
        except Exception as e:
            detail, passed = str(e), False
            log.debug("Self-test %s failed.", name, exc_info=True)
        results.append(CheckResult(name, passed, detail, time.perf_counter() - start))
    return results
