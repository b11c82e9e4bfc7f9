"""Shared fixtures: small images, manifests and score files on tmp_path."""

from pathlib import Path
from typing import Sequence

import numpy as np
import pytest

from synthtrace.core import DatasetManifest, ImageBuffer, Label, ManifestEntry, ScoreSet, write_manifest, write_scores
from synthtrace.images import save_png
from synthtrace.logger import reset_logging


@pytest.fixture(autouse=True)
def _fresh_logging():
    yield
    reset_logging()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def random_image(rng: np.random.Generator, height: int, width: int, channels: int = 1) -> ImageBuffer:
    """Random image whose samples survive 8-bit quantization exactly."""
    return ImageBuffer(rng.integers(0, 256, (height, width, channels)) / 255.0)


@pytest.fixture
def image_dir(tmp_path: Path, rng: np.random.Generator):
    """Factory writing named random PNGs into tmp_path/images."""

    def _make(names: Sequence[str], size: int = 64, channels: int = 1) -> list[Path]:
        paths = []
        for name in names:
            path = tmp_path / "images" / name
            save_png(random_image(rng, size, size, channels), path)
            paths.append(path)
        return paths

    return _make


def make_manifest(real: Sequence[str], fakes: dict[str, Sequence[str]], root: Path = Path(".")) -> DatasetManifest:
    entries = [ManifestEntry(p, Label.real()) for p in real]
    for generator, paths in fakes.items():
        entries.extend(ManifestEntry(p, Label.synthetic(generator)) for p in paths)
    return DatasetManifest(tuple(entries), root)


@pytest.fixture
def manifest_file(tmp_path: Path):
    """Factory writing a manifest CSV and returning its path."""

    def _make(manifest: DatasetManifest, name: str = "manifest.csv") -> Path:
        path = tmp_path / name
        write_manifest(manifest, path)
        return path

    return _make


@pytest.fixture
def scores_file(tmp_path: Path):
    """Factory writing a score CSV from a {path: score} mapping."""

    def _make(scores: dict[str, float], name: str = "scores.csv") -> Path:
        path = tmp_path / name
        write_scores(ScoreSet(tuple(scores.items()), Path(name).stem), path)
        return path

    return _make
