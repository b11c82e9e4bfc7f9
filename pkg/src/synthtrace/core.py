"""Shared domain types, dataset manifests, score files and seeded randomness.

Every other module builds on the types defined here:

- ImageBuffer: H x W x C float64 pixels, the universal image carrier.
- Label / DatasetManifest: real/synthetic labels with generator tags, in file order.
- ScoreSet: per-image detector scores, higher = more likely synthetic.
- derive_item_rng: per-item random streams that do not depend on
  execution order, so parallel runs reproduce sequential ones.
"""

import codecs
import csv
import io
import logging
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Optional, Union

import numpy as np

from synthtrace.constants import MANIFEST_HEADER, REAL_GENERATOR, SCORES_HEADER
from synthtrace.errors import ManifestError, ScoreFileError, ShapeError, ValidationError

log = logging.getLogger(__name__)

PathLike = Union[str, Path]

# Plain decimal with optional exponent; no underscores, inf or nan
_NUMBER = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")

_SEED_MASK = (1 << 64) - 1


class ImageClass(str, Enum):
    """Ground-truth class of an image."""
    REAL = "real"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class Label:
    """Class plus generator tag; real images always carry generator 'none'."""

    image_class: ImageClass
    generator: str = REAL_GENERATOR

    def __post_init__(self) -> None:
        if self.image_class is ImageClass.REAL and self.generator != REAL_GENERATOR:
            raise ValidationError(
                f"real images must have generator '{REAL_GENERATOR}', got '{self.generator}'"
            )
        if self.image_class is ImageClass.SYNTHETIC and self.generator in ("", REAL_GENERATOR):
            raise ValidationError("synthetic images need a generator name")

    @classmethod
    def real(cls) -> "Label":
        return cls(ImageClass.REAL)

    @classmethod
    def synthetic(cls, generator: str) -> "Label":
        return cls(ImageClass.SYNTHETIC, generator)

    @property
    def is_synthetic(self) -> bool:
        return self.image_class is ImageClass.SYNTHETIC


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """Row-major H x W x C pixel array.

    Decoded images hold samples in [0, 1]. Arithmetic on buffers does not
    clamp; callers that need the range back use clamped().
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ShapeError(f"expected H x W x {{1,3}} pixels, got shape {np.shape(self.data)}")
        if arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ShapeError("image is empty")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("image contains non-finite samples")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def clamped(self) -> "ImageBuffer":
        return ImageBuffer(np.clip(self.data, 0.0, 1.0))

    def grayscale(self) -> np.ndarray:
        """Single plane as the mean of the channels."""
        return self.data.mean(axis=2)

    def central_crop(self, side: int) -> "ImageBuffer":
        """Return the central side x side window; never resamples."""
        if side < 1:
            raise ValidationError(f"crop side must be positive, got {side}")
        if self.height < side or self.width < side:
            raise ValidationError(
                f"image of {self.height}x{self.width} is smaller than crop {side}x{side}"
            )
        y0 = (self.height - side) // 2
        x0 = (self.width - side) // 2
        return ImageBuffer(self.data[y0:y0 + side, x0:x0 + side, :])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: Label


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered listing of images; entry order anchors averaging and seeding."""

    entries: tuple[ManifestEntry, ...]
    root: Path = field(default_factory=Path)

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        object.__setattr__(self, "root", Path(self.root))
        seen: set[str] = set()
        for entry in self.entries:
            if entry.path in seen:
                raise ManifestError(f"duplicate path in manifest: {entry.path}")
            seen.add(entry.path)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[ManifestEntry]:
        return iter(self.entries)

    @property
    def paths(self) -> list[str]:
        return [e.path for e in self.entries]

    def resolve(self, path: str) -> Path:
        """Absolute or root-relative location of a manifest path."""
        p = Path(path)
        return p if p.is_absolute() else self.root / p

    def generators(self) -> list[str]:
        """Sorted generator names of the synthetic entries."""
        return sorted({e.label.generator for e in self.entries if e.label.is_synthetic})

    def reals(self) -> list[ManifestEntry]:
        return [e for e in self.entries if not e.label.is_synthetic]

    def fakes_of(self, generator: str) -> list[ManifestEntry]:
        return [
            e for e in self.entries
            if e.label.is_synthetic and e.label.generator == generator
        ]

    def subset(self, paths: Iterable[str]) -> "DatasetManifest":
        """Entries whose path is in paths, in manifest order."""
        wanted = set(paths)
        return DatasetManifest(
            tuple(e for e in self.entries if e.path in wanted), self.root,
        )


@dataclass(frozen=True)
class ScoreSet:
    """Per-image detector outputs. Higher always means more likely synthetic."""

    records: tuple[tuple[str, float], ...]
    detector_name: str = "detector"

    def __post_init__(self) -> None:
        records = tuple((str(p), float(s)) for p, s in self.records)
        seen: set[str] = set()
        for path, score in records:
            if not math.isfinite(score):
                raise ScoreFileError(f"non-finite score for {path}: {score}")
            if path in seen:
                raise ScoreFileError(f"duplicate path in scores: {path}")
            seen.add(path)
        object.__setattr__(self, "records", records)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def paths(self) -> list[str]:
        return [p for p, _ in self.records]

    @property
    def values(self) -> np.ndarray:
        return np.array([s for _, s in self.records], dtype=np.float64)

    def as_dict(self) -> dict[str, float]:
        return dict(self.records)

    def scores_for(self, paths: Iterable[str]) -> np.ndarray:
        """Scores of the given paths, in that order.

        Raises:
            ValidationError: listing every path that has no score.
        """
        lookup = self.as_dict()
        paths = list(paths)
        missing = [p for p in paths if p not in lookup]
        if missing:
            raise ValidationError(
                f"{len(missing)} path(s) have no score in '{self.detector_name}': "
                + ", ".join(missing[:10]) + (" ..." if len(missing) > 10 else "")
            )
        return np.array([lookup[p] for p in paths], dtype=np.float64)


def _read_rows(path: Path, header: tuple[str, ...], error: type) -> Iterator[tuple[int, list[str]]]:
    """Yield (line_number, fields) for data rows after checking the header.

    Surrounding whitespace is trimmed from every field.
    """
    if not path.is_file():
        raise error(f"file not found: {path}")
    raw = path.read_bytes()
    if raw.startswith(codecs.BOM_UTF8):
        raw = raw[len(codecs.BOM_UTF8):]
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        line = raw.count(b"\n", 0, e.start) + 1
        raise error(f"{path}:{line}: not valid UTF-8 (byte 0x{raw[e.start]:02x})") from None

    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        first = next(reader, None)
        if first is None:
            raise error(f"{path}: missing header {','.join(header)}")
        if tuple(c.strip() for c in first) != header:
            raise error(
                f"{path}:{reader.line_num}: expected header {','.join(header)}, got {','.join(first)}"
            )
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise error(
                    f"{path}:{reader.line_num}: expected {len(header)} fields, got {len(row)}"
                )
            yield reader.line_num, [c.strip() for c in row]
    except csv.Error as e:
        raise error(f"{path}:{reader.line_num}: {e}") from None


def load_manifest(path: PathLike) -> DatasetManifest:
    """Load a `path,class,generator` manifest CSV.

    Relative image paths resolve against the manifest's directory.

    Raises:
        ManifestError: missing file, malformed row, duplicate path, unknown class.
    """
    path = Path(path)
    entries: list[ManifestEntry] = []
    seen: dict[str, int] = {}
    for line, (image_path, cls, generator) in _read_rows(path, MANIFEST_HEADER, ManifestError):
        if not image_path:
            raise ManifestError(f"{path}:{line}: empty image path")
        try:
            image_class = ImageClass(cls)
        except ValueError:
            raise ManifestError(
                f"{path}:{line}: unknown class '{cls}' (expected real or synthetic)"
            ) from None
        if image_path in seen:
            raise ManifestError(
                f"{path}:{line}: duplicate path '{image_path}' (first on line {seen[image_path]})"
            )
        seen[image_path] = line
        try:
            label = Label(image_class, generator or REAL_GENERATOR)
        except ValidationError as e:
            raise ManifestError(f"{path}:{line}: {e}") from None
        entries.append(ManifestEntry(image_path, label))
    log.debug("Loaded %d manifest entries from %s", len(entries), path)
    return DatasetManifest(tuple(entries), path.parent)


def write_manifest(manifest: DatasetManifest, path: PathLike) -> None:
    """Write a manifest CSV with paths as stored in the manifest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for entry in manifest:
            writer.writerow([entry.path, entry.label.image_class.value, entry.label.generator])


def load_scores(path: PathLike, detector_name: Optional[str] = None) -> ScoreSet:
    """Load a `path,score` CSV; the detector name defaults to the file stem.

    Raises:
        ScoreFileError: non-numeric or non-finite score, duplicate path, bad header.
    """
    path = Path(path)
    records: list[tuple[str, float]] = []
    seen: dict[str, int] = {}
    for line, (image_path, raw) in _read_rows(path, SCORES_HEADER, ScoreFileError):
        if not _NUMBER.fullmatch(raw):
            raise ScoreFileError(f"{path}:{line}: score '{raw}' is not a number")
        score = float(raw)
        if not math.isfinite(score):
            raise ScoreFileError(f"{path}:{line}: score '{raw}' is not finite")
        if image_path in seen:
            raise ScoreFileError(
                f"{path}:{line}: duplicate path '{image_path}' (first on line {seen[image_path]})"
            )
        seen[image_path] = line
        records.append((image_path, score))
    log.debug("Loaded %d scores from %s", len(records), path)
    return ScoreSet(tuple(records), detector_name or path.stem)


def format_score(score: float) -> str:
    """Shortest decimal string that parses back to the same float."""
    return np.format_float_positional(score, unique=True, trim="-")


def write_scores(scores: ScoreSet, path: PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SCORES_HEADER)
        for image_path, score in scores.records:
            writer.writerow([image_path, format_score(score)])


def item_seed(global_seed: int, item_index: int) -> int:
    """64-bit seed of one item, a pure function of (global_seed, item_index)."""
    if item_index < 0:
        raise ValidationError(f"item index must be non-negative, got {item_index}")
    seq = np.random.SeedSequence(entropy=global_seed & _SEED_MASK, spawn_key=(item_index,))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def derive_item_rng(global_seed: int, item_index: int) -> np.random.Generator:
    """Independent random stream for one item.

    No global state is read or written, so the stream of item k is the
    same whether items run sequentially, in parallel, or out of order.
    """
    return np.random.Generator(np.random.PCG64(item_seed(global_seed, item_index)))
