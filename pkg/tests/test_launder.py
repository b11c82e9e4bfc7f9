import numpy as np
import pytest
from scipy.stats import chisquare

from conftest import make_manifest, random_image
from synthtrace.core import DatasetManifest, derive_item_rng, load_manifest
from synthtrace.corpus import write_corpus
from synthtrace.errors import ValidationError
from synthtrace.fingerprint import amplitude_spectrum, detect_peaks, estimate_fingerprint
from synthtrace.launder import (
    LaunderParams,
    draw_launder_window,
    launder_image,
    launder_manifest,
    launder_to_jpeg,
    load_records_csv,
    output_name,
)
from synthtrace.residual import DenoiserConfig

DEFAULT = LaunderParams()


def test_output_is_exactly_target_side(rng):
    out, record = launder_image(random_image(rng, 512, 512, 3), derive_item_rng(0, 0), DEFAULT)
    assert out.shape == (200, 200, 3)
    assert 320 <= record.crop_side <= 512
    assert 65 <= record.qf <= 100


def test_non_square_and_grayscale(rng):
    out, record = launder_image(random_image(rng, 300, 450), derive_item_rng(3, 1), DEFAULT)
    assert out.shape == (200, 200, 1)
    assert record.crop_side <= 300
    assert record.crop_x + record.crop_side <= 450
    assert record.crop_y + record.crop_side <= 300


def test_same_seed_and_index_are_byte_identical(rng):
    img = random_image(rng, 256, 256, 3)
    a, _ = launder_to_jpeg(img, derive_item_rng(9, 4), DEFAULT)
    b, _ = launder_to_jpeg(img, derive_item_rng(9, 4), DEFAULT)
    assert a == b


def test_small_image_uses_full_central_square(rng):
    out, record = launder_image(random_image(rng, 100, 120), derive_item_rng(0, 0), DEFAULT)
    assert out.shape == (200, 200, 1)
    assert (record.crop_side, record.crop_x, record.crop_y) == (100, 10, 0)


def test_tiny_image_rejected(rng):
    with pytest.raises(ValidationError):
        launder_image(random_image(rng, 10, 40), derive_item_rng(0, 0), DEFAULT)


def test_window_distribution():
    windows = [draw_launder_window(derive_item_rng(77, i), 512, 512, DEFAULT) for i in range(10_000)]
    qfs = np.array([w.qf for w in windows])
    sides = np.array([w.crop_side for w in windows])
    counts = np.bincount(qfs - 65, minlength=36)
    assert counts.size == 36
    assert chisquare(counts).pvalue > 0.001
    assert sides.min() == 320 and sides.max() == 512
    assert all(w.crop_x + w.crop_side <= 512 and w.crop_y + w.crop_side <= 512 for w in windows)


def test_many_launderings_keep_size(rng):
    img = random_image(rng, 256, 256, 3)
    for i in range(50):
        out, _ = launder_image(img, derive_item_rng(1, i), DEFAULT)
        assert out.shape == (200, 200, 3)


@pytest.mark.parametrize(
    "kwargs",
    [{"qf_min": 90, "qf_max": 80}, {"qf_max": 101}, {"min_crop_frac": 0.0}, {"target_side": 8}],
)
def test_param_validation(kwargs):
    with pytest.raises(ValidationError):
        LaunderParams(**kwargs)


class TestManifest:
    def _manifest(self, tmp_path, image_dir, names=("a.png", "b.png", "c.png")):
        image_dir(list(names), size=220, channels=3)
        paths = [f"images/{n}" for n in names]
        return make_manifest(paths[:1], {"gan": paths[1:]}, tmp_path)

    def test_outputs_and_labels(self, tmp_path, image_dir):
        m = self._manifest(tmp_path, image_dir)
        outcome = launder_manifest(m, DEFAULT, tmp_path / "out")
        assert outcome.ok
        assert outcome.manifest.paths == ["000000_a.jpg", "000001_b.jpg", "000002_c.jpg"]
        assert [e.label for e in outcome.manifest] == [e.label for e in m]
        for name in outcome.manifest.paths:
            assert (tmp_path / "out" / name).is_file()
        reloaded = load_manifest(tmp_path / "out" / "manifest.csv")
        assert reloaded == outcome.manifest
        assert load_records_csv(tmp_path / "out" / "records.csv") == list(outcome.records)

    def test_rerun_same_seed_is_identical(self, tmp_path, image_dir):
        m = self._manifest(tmp_path, image_dir)
        launder_manifest(m, DEFAULT, tmp_path / "one")
        launder_manifest(m, DEFAULT, tmp_path / "two")
        assert (tmp_path / "one" / "records.csv").read_bytes() == (tmp_path / "two" / "records.csv").read_bytes()
        assert (tmp_path / "one" / "000001_b.jpg").read_bytes() == (tmp_path / "two" / "000001_b.jpg").read_bytes()

    def test_other_seed_differs(self, tmp_path, image_dir):
        m = self._manifest(tmp_path, image_dir)
        first = launder_manifest(m, LaunderParams(global_seed=0), tmp_path / "one")
        second = launder_manifest(m, LaunderParams(global_seed=1), tmp_path / "two")
        assert first.records != second.records

    def test_threads_match_sequential(self, tmp_path, image_dir):
        names = tuple(f"img{i}.png" for i in range(8))
        m = self._manifest(tmp_path, image_dir, names)
        launder_manifest(m, DEFAULT, tmp_path / "seq", threads=1)
        launder_manifest(m, DEFAULT, tmp_path / "par", threads=4)
        for i, name in enumerate(names):
            out = output_name(i, name)
            assert (tmp_path / "seq" / out).read_bytes() == (tmp_path / "par" / out).read_bytes()
        assert (tmp_path / "seq" / "records.csv").read_bytes() == (tmp_path / "par" / "records.csv").read_bytes()

    def test_partial_failure_keeps_others(self, tmp_path, image_dir):
        m = self._manifest(tmp_path, image_dir)
        (tmp_path / "images" / "b.png").write_bytes(b"corrupt")
        outcome = launder_manifest(m, DEFAULT, tmp_path / "out", records_csv=tmp_path / "rec.csv")
        assert not outcome.ok
        assert [path for path, _ in outcome.failures] == ["images/b.png"]
        assert outcome.manifest.paths == ["000000_a.jpg", "000002_c.jpg"]
        assert len(load_records_csv(tmp_path / "rec.csv")) == 2


def _planted_prominence(m: DatasetManifest, crop: int, period: int = 8) -> float:
    step = crop // period
    peaks = detect_peaks(amplitude_spectrum(estimate_fingerprint(m, DenoiserConfig(), crop, threads=2)))
    on_lattice = [p.prominence for p in peaks if p.u % step == 0 and p.v % step == 0]
    return max(on_lattice, default=0.0)


def test_laundering_weakens_planted_peaks(tmp_path):
    corpus = write_corpus(tmp_path / "corpus", n_real=0, n_fake=30, size=256, seed=4)
    outcome = launder_manifest(corpus, LaunderParams(global_seed=4), tmp_path / "laundered", threads=2)
    assert outcome.ok
    before = _planted_prominence(corpus, 128)
    after = _planted_prominence(outcome.manifest, 128)
    assert before >= 5.0
    assert after < before
