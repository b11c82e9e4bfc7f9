from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import pytest

from conftest import make_manifest
from synthtrace.core import (
    DatasetManifest,
    ImageBuffer,
    ImageClass,
    Label,
    ScoreSet,
    derive_item_rng,
    format_score,
    item_seed,
    load_manifest,
    load_scores,
    write_manifest,
    write_scores,
)
from synthtrace.errors import ManifestError, ScoreFileError, ShapeError, ValidationError


def _write(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


class TestManifest:
    def test_rows_kept_in_file_order(self, tmp_path):
        path = _write(tmp_path / "m.csv", "path,class,generator\nr.png,real,none\nb.png,synthetic,gan\na.png,synthetic,dm\n")
        m = load_manifest(path)
        assert m.paths == ["r.png", "b.png", "a.png"]
        assert [e.label.image_class for e in m] == [ImageClass.REAL, ImageClass.SYNTHETIC, ImageClass.SYNTHETIC]
        assert m.generators() == ["dm", "gan"]
        assert m.root == tmp_path

    def test_unknown_class_names_line(self, tmp_path):
        path = _write(tmp_path / "m.csv", "path,class,generator\nr.png,real,none\nb.png,fake,gan\n")
        with pytest.raises(ManifestError, match=r"m\.csv:3: unknown class 'fake'"):
            load_manifest(path)

    def test_header_only_is_empty(self, tmp_path):
        m = load_manifest(_write(tmp_path / "m.csv", "path,class,generator\n"))
        assert len(m) == 0

    def test_real_with_generator_rejected(self, tmp_path):
        path = _write(tmp_path / "m.csv", "path,class,generator\nr.png,real,gan\n")
        with pytest.raises(ManifestError, match=":2:"):
            load_manifest(path)

    def test_duplicate_path_rejected(self, tmp_path):
        path = _write(tmp_path / "m.csv", "path,class,generator\nr.png,real,none\nr.png,real,none\n")
        with pytest.raises(ManifestError, match="duplicate"):
            load_manifest(path)

    def test_bad_header(self, tmp_path):
        with pytest.raises(ManifestError, match="expected header"):
            load_manifest(_write(tmp_path / "m.csv", "file,label\nr.png,real\n"))

    def test_non_utf8_names_line(self, tmp_path):
        (tmp_path / "m.csv").write_bytes(b"path,class,generator\n\xff\xfe.png,real,\n")
        with pytest.raises(ManifestError, match=r"m\.csv:2: not valid UTF-8 \(byte 0xff\)"):
            load_manifest(tmp_path / "m.csv")

    def test_utf8_bom_accepted(self, tmp_path):
        (tmp_path / "m.csv").write_bytes(b"\xef\xbb\xbfpath,class,generator\nr.png,real,none\n")
        assert load_manifest(tmp_path / "m.csv").paths == ["r.png"]

    def test_missing_file(self, tmp_path):
        with pytest.raises(ManifestError, match="not found"):
            load_manifest(tmp_path / "absent.csv")

    def test_round_trip(self, tmp_path):
        m = make_manifest(["r1.png", "sub/r2.png"], {"gan": ["f1.png"], "dm": ["f2.png"]}, tmp_path)
        write_manifest(m, tmp_path / "out.csv")
        assert load_manifest(tmp_path / "out.csv") == m

    def test_subset_keeps_manifest_order(self):
        m = make_manifest(["a", "b", "c"], {"g": ["d"]})
        assert m.subset(["d", "a"]).paths == ["a", "d"]

    def test_resolve(self, tmp_path):
        m = make_manifest(["a.png"], {}, tmp_path)
        assert m.resolve("a.png") == tmp_path / "a.png"
        assert m.resolve(str(tmp_path / "x.png")) == tmp_path / "x.png"


class TestScores:
    def test_single_record(self, tmp_path):
        s = load_scores(_write(tmp_path / "freq.csv", "path,score\na.png,0.9\n"))
        assert s.records == (("a.png", 0.9),)
        assert s.detector_name == "freq"

    @pytest.mark.parametrize("value", ["nan", "inf", "abc", "1_000", "0x1p-2", "1e999", "-"])
    def test_invalid_score(self, tmp_path, value):
        with pytest.raises(ScoreFileError, match=":2:"):
            load_scores(_write(tmp_path / "s.csv", f"path,score\na.png,{value}\n"))

    @pytest.mark.parametrize("value, expected", [("1e-3", 0.001), (".5", 0.5), ("+0.25", 0.25), ("1.", 1.0), ("-2E+1", -20.0)])
    def test_plain_number_forms(self, tmp_path, value, expected):
        s = load_scores(_write(tmp_path / "s.csv", f"path,score\na.png,{value}\n"))
        assert s.values[0] == expected

    def test_non_utf8_names_line(self, tmp_path):
        (tmp_path / "s.csv").write_bytes(b"path,score\na.png,0.1\n\xff.png,0.2\n")
        with pytest.raises(ScoreFileError, match=r"s\.csv:3: not valid UTF-8"):
            load_scores(tmp_path / "s.csv")

    def test_many_rows_keep_order(self, tmp_path):
        rng = np.random.default_rng(0)
        values = rng.random(5000)
        lines = "".join(f"img_{i}.png,{format_score(v)}\n" for i, v in enumerate(values))
        s = load_scores(_write(tmp_path / "s.csv", "path,score\n" + lines))
        assert len(s) == 5000
        assert s.paths[:3] == ["img_0.png", "img_1.png", "img_2.png"]
        np.testing.assert_array_equal(s.values, values)

    def test_round_trip_is_exact(self, tmp_path):
        s = ScoreSet((("a", 1 / 3), ("b", 1e-17), ("c", 0.1 + 0.2)), "det")
        write_scores(s, tmp_path / "det.csv")
        assert load_scores(tmp_path / "det.csv") == s

    def test_scores_for_lists_missing(self):
        s = ScoreSet((("a", 0.1),))
        with pytest.raises(ValidationError, match="b, c"):
            s.scores_for(["a", "b", "c"])

    def test_duplicate_rejected(self, tmp_path):
        with pytest.raises(ScoreFileError, match="duplicate"):
            load_scores(_write(tmp_path / "s.csv", "path,score\na,0.1\na,0.2\n"))


class TestLabelsAndImages:
    def test_label_invariants(self):
        assert Label.real().generator == "none"
        assert Label.synthetic("gan").is_synthetic
        with pytest.raises(ValidationError):
            Label(ImageClass.REAL, "gan")
        with pytest.raises(ValidationError):
            Label.synthetic("none")

    def test_two_dimensional_input_gets_channel_axis(self):
        img = ImageBuffer(np.zeros((4, 5)))
        assert img.shape == (4, 5, 1)
        assert not img.data.flags.writeable

    @pytest.mark.parametrize("shape", [(4, 4, 2), (0, 4, 1), (4,)])
    def test_bad_shapes(self, shape):
        with pytest.raises(ShapeError):
            ImageBuffer(np.zeros(shape))

    def test_non_finite_rejected(self):
        data = np.zeros((3, 3))
        data[1, 1] = np.nan
        with pytest.raises(ValidationError):
            ImageBuffer(data)

    def test_central_crop(self):
        img = ImageBuffer(np.arange(36, dtype=float).reshape(6, 6))
        np.testing.assert_array_equal(img.central_crop(2).data[:, :, 0], [[14, 15], [20, 21]])
        with pytest.raises(ValidationError, match="smaller than crop"):
            img.central_crop(7)

    def test_clamped_and_equality(self):
        img = ImageBuffer(np.array([[-0.5, 1.5]]))
        assert img.clamped() == ImageBuffer(np.array([[0.0, 1.0]]))
        assert img != img.clamped()


class TestSeededStreams:
    def test_same_seed_and_index_repeat(self):
        np.testing.assert_array_equal(derive_item_rng(42, 0).random(10), derive_item_rng(42, 0).random(10))

    def test_indices_give_distinct_streams(self):
        firsts = {tuple(derive_item_rng(42, i).random(10)) for i in range(1000)}
        assert len(firsts) == 1000

    def test_seeds_give_distinct_streams(self):
        assert item_seed(42, 3) != item_seed(43, 3)

    def test_order_independent(self):
        sequential = derive_item_rng(42, 7).random(10)
        with ThreadPoolExecutor(max_workers=4) as pool:
            draws = list(pool.map(lambda i: derive_item_rng(42, i).random(10), reversed(range(16))))
        np.testing.assert_array_equal(draws[16 - 1 - 7], sequential)

    def test_negative_seed_accepted(self):
        assert item_seed(-1, 0) == item_seed((1 << 64) - 1, 0)

    def test_negative_index_rejected(self):
        with pytest.raises(ValidationError):
            derive_item_rng(0, -1)
