import json
from pathlib import Path

import pytest

from conftest import make_manifest
from synthtrace.cli import dispatch
from synthtrace.core import load_scores
from synthtrace.corpus import write_corpus
from synthtrace.evaluation import load_calibration


def run(capsys, *args) -> tuple[int, str, str]:
    code = dispatch(["--log-level", "quiet", *map(str, args)] if args else [])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def eval_fixture(manifest_file, scores_file):
    manifest = make_manifest(["r0", "r1"], {"gan": ["g0", "g1"], "dm": ["d0"]})
    scores = {"r0": 0.1, "r1": 0.6, "g0": 0.9, "g1": 0.8, "d0": 0.55}
    return manifest_file(manifest), scores_file(scores, "freq.csv")


class TestUsage:
    def test_no_arguments(self, capsys):
        code, out, err = run(capsys)
        assert code == 1
        assert "usage:" in err and out == ""

    def test_unknown_subcommand(self, capsys):
        code, _, err = run(capsys, "frobnicate")
        assert code == 1
        assert "usage:" in err and "invalid choice" in err

    def test_unknown_flag(self, capsys, eval_fixture):
        manifest, scores = eval_fixture
        code, _, err = run(capsys, "eval", "--manifest", manifest, "--scores", scores, "--colour", "red")
        assert code == 1
        assert "unrecognized arguments" in err

    def test_missing_required(self, capsys):
        code, _, err = run(capsys, "eval", "--out", "json")
        assert code == 1
        assert "--manifest, --scores" in err

    def test_bad_thread_count(self, capsys):
        code, _, _ = run(capsys, "--threads", "0", "selftest")
        assert code == 1

    def test_version(self, capsys):
        assert dispatch(["--version"]) == 0
        assert "synthtrace" in capsys.readouterr().out


def test_selftest(capsys):
    code, out, _ = run(capsys, "selftest")
    assert code == 0
    assert "5/5 checks passed" in out
    assert "PASS  auc-oracle" in out


class TestEval:
    def test_json_report_on_stdout(self, capsys, eval_fixture):
        manifest, scores = eval_fixture
        code, out, _ = run(capsys, "--seed", 9, "eval", "--manifest", manifest, "--scores", scores, "--out", "json")
        assert code == 0
        doc = json.loads(out)
        assert doc["detector"] == "freq"
        assert [r["generator"] for r in doc["rows"]] == ["dm", "gan"]
        assert doc["rows"][1]["auc_pct"] == 100.0
        assert doc["seed"] == 9

    def test_markdown_comparison(self, capsys, eval_fixture, scores_file):
        manifest, scores = eval_fixture
        other = scores_file({"r0": 0.9, "r1": 0.1, "g0": 0.2, "g1": 0.7, "d0": 0.3}, "cnn.csv")
        code, out, _ = run(capsys, "eval", "--manifest", manifest, "--scores", scores, other)
        assert code == 0
        assert out.splitlines()[0] == "| Acc./AUC% | freq | cnn |"
        assert "| AVG |" in out

    def test_report_file(self, capsys, tmp_path, eval_fixture):
        manifest, scores = eval_fixture
        code, out, _ = run(capsys, "eval", "--manifest", manifest, "--scores", scores, "--report-file", tmp_path / "r.md")
        assert code == 0 and out == ""
        assert "| gan |" in (tmp_path / "r.md").read_text(encoding="utf-8")

    def test_config_file_and_flag_override(self, capsys, tmp_path, eval_fixture):
        manifest, scores = eval_fixture
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"threshold": 0.95, "out": "json", "seed": 11}), encoding="utf-8")
        _, out, _ = run(capsys, "eval", "--config", config, "--manifest", manifest, "--scores", scores)
        doc = json.loads(out)
        assert doc["threshold"] == 0.95 and doc["seed"] == 11
        _, out, _ = run(capsys, "eval", "--config", config, "--manifest", manifest, "--scores", scores, "--threshold", 0.5)
        assert json.loads(out)["threshold"] == 0.5

    def test_config_supplies_required_options(self, capsys, tmp_path, eval_fixture):
        manifest, scores = eval_fixture
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"manifest": str(manifest), "scores": [str(scores)], "out": "json"}), encoding="utf-8")
        code, out, _ = run(capsys, "eval", "--config", config)
        assert code == 0
        assert json.loads(out)["detector"] == "freq"

    def test_missing_scores_is_validation_error(self, capsys, manifest_file, scores_file):
        manifest = manifest_file(make_manifest(["r0"], {"gan": ["g0"]}))
        scores = scores_file({"r0": 0.1})
        code, _, err = run(capsys, "eval", "--manifest", manifest, "--scores", scores)
        assert code == 1
        assert "g0" in err

    def test_non_utf8_manifest_is_validation_error(self, capsys, tmp_path, scores_file):
        (tmp_path / "m.csv").write_bytes(b"path,class,generator\nr0,real,none\n\xff.png,synthetic,gan\n")
        code, _, err = run(capsys, "eval", "--manifest", tmp_path / "m.csv", "--scores", scores_file({"r0": 0.1}))
        assert code == 1
        assert "m.csv:3: not valid UTF-8" in err


def test_fuse(capsys, tmp_path, scores_file):
    a = scores_file({"x": 0.2, "y": 0.4}, "a.csv")
    b = scores_file({"x": 0.8, "y": 0.6}, "b.csv")
    code, _, _ = run(capsys, "fuse", "--scores", a, b, "--out", tmp_path / "fused.csv")
    assert code == 0
    assert load_scores(tmp_path / "fused.csv").as_dict() == {"x": 0.5, "y": 0.5}


@pytest.fixture
def corpus(tmp_path) -> Path:
    write_corpus(tmp_path / "corpus", n_real=8, n_fake=8, size=64, seed=1)
    return tmp_path / "corpus"


def test_detector_pipeline(capsys, tmp_path, corpus):
    manifest = corpus / "manifest.csv"
    model = tmp_path / "model.json"
    assert run(capsys, "train", "--manifest", manifest, "--crop", 64, "--bins", 16, "--iters", 50, "--out-model", model)[0] == 0
    first = model.read_bytes()
    assert run(capsys, "train", "--manifest", manifest, "--crop", 64, "--bins", 16, "--iters", 50, "--out-model", model)[0] == 0
    assert model.read_bytes() == first

    scores = tmp_path / "freq.csv"
    assert run(capsys, "score", "--manifest", manifest, "--model", model, "--out-scores", scores)[0] == 0
    assert len(load_scores(scores)) == 16

    cal, rest = corpus / "cal.csv", corpus / "rest.csv"
    assert run(capsys, "--seed", 2, "split", "--manifest", manifest, "--out-calibration", cal, "--out-remainder", rest)[0] == 0

    params = tmp_path / "platt.json"
    code, _, _ = run(
        capsys, "calibrate", "--scores", scores, "--manifest", cal, "--per-generator",
        "--out-params", params, "--apply-to", scores,
    )
    assert code == 0
    assert set(load_calibration(params)) == {"pooled", "planted_grid"}
    assert len(load_scores(tmp_path / "freq_calibrated.csv")) == 16

    code, out, _ = run(capsys, "eval", "--manifest", rest, "--scores", scores, "--calibration", params, "--out", "json")
    assert code == 0
    assert json.loads(out)["detector"] == "freq+platt"


def test_score_rejects_bad_model(capsys, tmp_path, corpus):
    (tmp_path / "model.json").write_text("{}", encoding="utf-8")
    code, _, err = run(capsys, "score", "--manifest", corpus / "manifest.csv", "--model", tmp_path / "model.json",
                       "--out-scores", tmp_path / "s.csv")
    assert code == 1
    assert "not a" in err


class TestLaunder:
    def test_threads_and_reruns_are_identical(self, capsys, tmp_path, corpus):
        manifest = corpus / "manifest.csv"
        for name, threads in (("a", 1), ("b", 3), ("c", 1)):
            code, _, _ = run(capsys, "--threads", threads, "--seed", 5, "launder", "--manifest", manifest, "--out-dir", tmp_path / name)
            assert code == 0
        records = [(tmp_path / n / "records.csv").read_bytes() for n in "abc"]
        assert records[0] == records[1] == records[2]
        assert (tmp_path / "a" / "000003_real_00003.jpg").read_bytes() == (tmp_path / "b" / "000003_real_00003.jpg").read_bytes()

    def test_partial_failure_exit_code(self, capsys, tmp_path, corpus):
        (corpus / "fake_00010.png").write_bytes(b"broken")
        code, _, err = run(capsys, "launder", "--manifest", corpus / "manifest.csv", "--out-dir", tmp_path / "out")
        assert code == 2
        assert "fake_00010.png" in err
        assert len((tmp_path / "out" / "manifest.csv").read_text().splitlines()) == 16


class TestFingerprint:
    def test_spectrum_and_peaks(self, capsys, tmp_path, corpus):
        code, _, _ = run(
            capsys, "fingerprint", "--manifest", corpus / "manifest.csv", "--crop", 64,
            "--out-spectrum", tmp_path / "spectrum.png", "--out-peaks", tmp_path / "peaks.csv",
        )
        assert code == 0
        assert (tmp_path / "spectrum.png").is_file()
        assert (tmp_path / "peaks.csv").read_text().startswith("u,v,magnitude,prominence")

    def test_peaks_to_stdout(self, capsys, corpus):
        code, out, _ = run(capsys, "fingerprint", "--manifest", corpus / "manifest.csv", "--crop", 64, "--denoiser", "wavelet")
        assert code == 0
        assert out.splitlines()[0] == "u,v,magnitude,prominence"

    def test_by_generator(self, capsys, tmp_path, corpus):
        code, out, _ = run(
            capsys, "fingerprint", "--manifest", corpus / "manifest.csv", "--crop", 64, "--by-generator",
            "--out-spectrum", tmp_path / "grid.png",
        )
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "generator,n_images,n_peaks,max_prominence"
        assert [line.split(",")[:2] for line in lines[1:]] == [["planted_grid", "8"], ["real", "8"]]
        assert (tmp_path / "grid.png").is_file()

    def test_crop_larger_than_images(self, capsys, corpus):
        code, _, err = run(capsys, "fingerprint", "--manifest", corpus / "manifest.csv", "--crop", 128)
        assert code == 1
        assert "smaller than crop" in err
