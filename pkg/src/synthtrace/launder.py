"""Social-network laundering simulation.

Each image goes through: a random large square crop at a random position,
a bilinear resize to target_side x target_side, and a JPEG round trip at
a random quality factor. Random draws come from the per-entry stream
derive_item_rng(global_seed, index), so outputs do not depend on the
order or parallelism of processing.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from synthtrace.constants import (
    DEFAULT_MIN_CROP_FRAC,
    DEFAULT_QF_MAX,
    DEFAULT_QF_MIN,
    DEFAULT_SEED,
    DEFAULT_TARGET_SIDE,
    MANIFEST_FILE_NAME,
    MIN_LAUNDER_SIDE,
    RECORDS_FILE_NAME,
    RECORDS_HEADER,
)
from synthtrace.core import (
    DatasetManifest,
    ImageBuffer,
    ManifestEntry,
    derive_item_rng,
    write_manifest,
)
from synthtrace.errors import ValidationError
from synthtrace.images import decode_bytes, encode_jpeg, load_image, to_pil
from synthtrace.workers import parallel_collect

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LaunderParams:
    target_side: int = DEFAULT_TARGET_SIDE
    qf_min: int = DEFAULT_QF_MIN
    qf_max: int = DEFAULT_QF_MAX
    min_crop_frac: float = DEFAULT_MIN_CROP_FRAC
    global_seed: int = DEFAULT_SEED

    def __post_init__(self) -> None:
        if not 1 <= self.qf_min <= self.qf_max <= 100:
            raise ValidationError(
                f"need 1 <= qf_min <= qf_max <= 100, got {self.qf_min}..{self.qf_max}"
            )
        if not 0 < self.min_crop_frac <= 1:
            raise ValidationError(f"min_crop_frac must be in (0, 1], got {self.min_crop_frac}")
        if self.target_side < MIN_LAUNDER_SIDE:
            raise ValidationError(
                f"target_side must be >= {MIN_LAUNDER_SIDE}, got {self.target_side}"
            )


@dataclass(frozen=True)
class LaunderWindow:
    crop_x: int
    crop_y: int
    crop_side: int
    qf: int


@dataclass(frozen=True)
class LaunderRecord:
    """Audit trail of one laundering."""
    source_path: str
    crop_x: int
    crop_y: int
    crop_side: int
    qf: int
    output_path: str = ""


def draw_launder_window(
    rng: np.random.Generator, height: int, width: int, params: LaunderParams,
) -> LaunderWindow:
    """Draw crop side, position and quality factor, always in that order.

    The side is uniform over the integers
    [max(ceil(min_crop_frac * m), min(target_side, m)), m] with m = min(H, W).
    Images smaller than target_side get the full central square instead
    (the draws are still consumed so the stream stays aligned).
    """
    m = min(height, width)
    if m < MIN_LAUNDER_SIDE:
        raise ValidationError(
            f"image of {height}x{width} is smaller than {MIN_LAUNDER_SIDE}x{MIN_LAUNDER_SIDE}"
        )
    lo = max(math.ceil(params.min_crop_frac * m), min(params.target_side, m))
    side = int(rng.integers(lo, m, endpoint=True))
    y = int(rng.integers(0, height - side, endpoint=True))
    x = int(rng.integers(0, width - side, endpoint=True))
    qf = int(rng.integers(params.qf_min, params.qf_max, endpoint=True))
    if m < params.target_side:
        x, y = (width - side) // 2, (height - side) // 2
    return LaunderWindow(x, y, side, qf)


def launder_to_jpeg(
    image: ImageBuffer, rng: np.random.Generator, params: LaunderParams,
) -> tuple[bytes, LaunderWindow]:
    """Crop, resize and JPEG-encode one image; returns the encoded bytes."""
    window = draw_launder_window(rng, image.height, image.width, params)
    x, y, side = window.crop_x, window.crop_y, window.crop_side
    cropped = to_pil(image).crop((x, y, x + side, y + side))
    resized = cropped.resize(
        (params.target_side, params.target_side), Image.Resampling.BILINEAR,
    )
    return encode_jpeg(resized, window.qf), window


def launder_image(
    image: ImageBuffer,
    rng: np.random.Generator,
    params: LaunderParams,
    source_path: str = "",
) -> tuple[ImageBuffer, LaunderRecord]:
    """Launder one image and return the decoded result with its record."""
    data, w = launder_to_jpeg(image, rng, params)
    record = LaunderRecord(source_path, w.crop_x, w.crop_y, w.crop_side, w.qf)
    return decode_bytes(data), record


@dataclass(frozen=True)
class LaunderOutcome:
    """Result of laundering a manifest; failures are (path, message) pairs."""
    manifest: DatasetManifest
    records: tuple[LaunderRecord, ...]
    failures: tuple[tuple[str, str], ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.failures


def output_name(index: int, source_path: str) -> str:
    return f"{index:06d}_{Path(source_path).stem}.jpg"


def launder_manifest(
    m: DatasetManifest,
    p: LaunderParams,
    out_dir: Union[str, Path],
    threads: int = 1,
    records_csv: Union[str, Path, None] = None,
) -> LaunderOutcome:
    """Launder every manifest entry into out_dir.

    Writes one JPEG per entry, the laundered manifest (labels unchanged,
    manifest order kept) and the records CSV. Failing images are logged
    and reported in the outcome; the others are kept.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    indexed = list(enumerate(m.entries))

    def _task(pair: tuple[int, ManifestEntry]) -> LaunderRecord:
        index, entry = pair
        image = load_image(m.resolve(entry.path))
        data, w = launder_to_jpeg(image, derive_item_rng(p.global_seed, index), p)
        name = output_name(index, entry.path)
        (out_dir / name).write_bytes(data)
        log.debug("Laundered %s -> %s (side %d, qf %d)", entry.path, name, w.crop_side, w.qf)
        return LaunderRecord(entry.path, w.crop_x, w.crop_y, w.crop_side, w.qf, name)

    outcomes = parallel_collect(_task, indexed, threads)

    records: list[LaunderRecord] = []
    entries: list[ManifestEntry] = []
    failures: list[tuple[str, str]] = []
    for outcome in outcomes:
        entry = m.entries[outcome.index]
        if outcome.ok:
            records.append(outcome.value)
            entries.append(ManifestEntry(outcome.value.output_path, entry.label))
        else:
            log.error("Failed to launder %s: %s", entry.path, outcome.error)
            failures.append((entry.path, str(outcome.error)))

    laundered = DatasetManifest(tuple(entries), out_dir)
    write_manifest(laundered, out_dir / MANIFEST_FILE_NAME)
    write_records_csv(records, records_csv or out_dir / RECORDS_FILE_NAME)
    log.info(
        "Laundered %d/%d images into %s (%d failed).",
        len(records), len(m), out_dir, len(failures),
    )
    return LaunderOutcome(laundered, tuple(records), tuple(failures))


def write_records_csv(records: list[LaunderRecord], path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(RECORDS_HEADER)
        for r in records:
            writer.writerow([r.source_path, r.crop_x, r.crop_y, r.crop_side, r.qf, r.output_path])


def load_records_csv(path: Union[str, Path]) -> list[LaunderRecord]:
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != RECORDS_HEADER:
            raise ValidationError(f"{path}: expected header {','.join(RECORDS_HEADER)}")
        records = []
        for row in reader:
            if not row:
                continue
            try:
                records.append(LaunderRecord(
                    row[0], int(row[1]), int(row[2]), int(row[3]), int(row[4]), row[5],
                ))
            except (IndexError, ValueError):
                raise ValidationError(f"{path}:{reader.line_num}: malformed record") from None
        return records
