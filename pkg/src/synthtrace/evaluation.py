"""Detector evaluation: AUC, thresholded accuracy, fusion, Platt calibration.

Score polarity is fixed toolkit-wide: higher = more likely synthetic.
Reports have one row per generator, each computed against the full
shared set of real images, plus an AVG row that is the unweighted mean
of the generator rows.
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata

from synthtrace.constants import (
    ACCURACY_MODES,
    DEFAULT_CALIBRATION_PER_CLASS,
    DEFAULT_THRESHOLD,
    PLATT_GRADIENT_TOL,
    PLATT_HESSIAN_RIDGE,
    PLATT_MAX_ITERATIONS,
    PLATT_MIN_STEP,
    POOLED_KEY,
)
from synthtrace.core import DatasetManifest, Label, ScoreSet, derive_item_rng
from synthtrace.errors import ValidationError

log = logging.getLogger(__name__)


def _scores(values: Sequence[float], what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValidationError(f"{what} scores are empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{what} scores contain non-finite values")
    return arr


def roc_auc(real_scores: Sequence[float], fake_scores: Sequence[float]) -> float:
    """Area under the ROC curve, Mann-Whitney form.

    Equals the fraction of (fake, real) pairs where the fake scores higher,
    ties counting one half. Computed from mid-ranks in O(n log n).
    """
    real = _scores(real_scores, "real")
    fake = _scores(fake_scores, "fake")
    ranks = rankdata(np.concatenate([real, fake]), method="average")
    n_fake = fake.size
    u = ranks[real.size:].sum() - n_fake * (n_fake + 1) / 2.0
    return float(u / (n_fake * real.size))


def accuracy_at_threshold(
    real_scores: Sequence[float],
    fake_scores: Sequence[float],
    threshold: float = DEFAULT_THRESHOLD,
    mode: str = "balanced",
) -> float:
    """Accuracy with fake predicted iff score > threshold.

    A score equal to the threshold is classified real. mode 'balanced'
    averages TPR and TNR; 'raw' pools all images.
    """
    if mode not in ACCURACY_MODES:
        raise ValidationError(f"unknown accuracy mode '{mode}'")
    real = _scores(real_scores, "real")
    fake = _scores(fake_scores, "fake")
    true_pos = int(np.count_nonzero(fake > threshold))
    true_neg = int(np.count_nonzero(real <= threshold))
    if mode == "raw":
        return (true_pos + true_neg) / (fake.size + real.size)
    return 0.5 * (true_pos / fake.size + true_neg / real.size)


def fuse_scores(score_sets: Sequence[ScoreSet]) -> ScoreSet:
    """Per-image unweighted mean of several detectors' scores.

    Raises:
        ValidationError: fewer than two sets, or path sets that differ
            (the symmetric difference is listed).
    """
    if len(score_sets) < 2:
        raise ValidationError("fusion needs at least two score sets")
    reference = set(score_sets[0].paths)
    for other in score_sets[1:]:
        diff = reference.symmetric_difference(other.paths)
        if diff:
            shown = sorted(diff)
            raise ValidationError(
                f"'{score_sets[0].detector_name}' and '{other.detector_name}' score different "
                f"images ({len(diff)}): " + ", ".join(shown[:10]) + (" ..." if len(diff) > 10 else "")
            )
    paths = score_sets[0].paths
    total = np.zeros(len(paths))
    for s in score_sets:
        total = total + s.scores_for(paths)
    fused = total / len(score_sets)
    name = "+".join(s.detector_name for s in score_sets)
    return ScoreSet(tuple(zip(paths, fused.tolist())), name)


@dataclass(frozen=True)
class CalibrationParams:
    """p(s) = 1 / (1 + exp(a * s + b)).

    a < 0 keeps the score order (higher score, higher probability).
    """
    a: float
    b: float
    converged: bool = True
    iterations: int = 0

    @property
    def preserves_order(self) -> bool:
        return self.a < 0

    def probability(self, scores: np.ndarray) -> np.ndarray:
        return expit(-(self.a * np.asarray(scores, dtype=np.float64) + self.b))

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "converged": self.converged, "iterations": self.iterations}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "CalibrationParams":
        try:
            return cls(
                float(doc["a"]), float(doc["b"]),
                bool(doc.get("converged", True)), int(doc.get("iterations", 0)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"malformed calibration parameters: {e}") from None


def _platt_objective(a: float, b: float, s: np.ndarray, t: np.ndarray) -> float:
    f = a * s + b
    return float(np.sum(np.logaddexp(0.0, f) - (1.0 - t) * f))


def platt_fit(scores: Sequence[float], labels: Sequence[Label]) -> CalibrationParams:
    """Maximum-likelihood sigmoid fit with prior-corrected targets.

    Targets are (N+ + 1)/(N+ + 2) for synthetic and 1/(N- + 2) for real.
    Newton iterations with backtracking start from
    (a, b) = (0, ln((N- + 1)/(N+ + 1))) and stop when the gradient norm
    drops below 1e-10 or after 100 iterations. On non-convergence the
    last (best) iterate is returned with converged=False.

    Raises:
        ValidationError: fewer than 2 scores of a class.
    """
    s = _scores(scores, "calibration")
    if len(labels) != s.size:
        raise ValidationError(f"{s.size} scores but {len(labels)} labels")
    positive = np.array([lab.is_synthetic for lab in labels])
    n_pos = int(positive.sum())
    n_neg = s.size - n_pos
    if n_pos < 2 or n_neg < 2:
        raise ValidationError(
            f"calibration needs at least 2 images per class, got {n_neg} real / {n_pos} synthetic"
        )
    t = np.where(positive, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))

    a, b = 0.0, math.log((n_neg + 1.0) / (n_pos + 1.0))
    objective = _platt_objective(a, b, s, t)
    converged = False
    iterations = 0
    for iterations in range(PLATT_MAX_ITERATIONS + 1):
        p = expit(-(a * s + b))
        d = t - p
        grad = np.array([float(np.dot(d, s)), float(d.sum())])
        if float(np.linalg.norm(grad)) < PLATT_GRADIENT_TOL:
            converged = True
            break
        if iterations == PLATT_MAX_ITERATIONS:
            break
        w = p * (1.0 - p)
        hessian = np.array([
            [float(np.dot(w, s * s)) + PLATT_HESSIAN_RIDGE, float(np.dot(w, s))],
            [float(np.dot(w, s)), float(w.sum()) + PLATT_HESSIAN_RIDGE],
        ])
        step = -np.linalg.solve(hessian, grad)
        slope = float(np.dot(grad, step))
        lam = 1.0
        while lam >= PLATT_MIN_STEP:
            new_a, new_b = a + lam * step[0], b + lam * step[1]
            new_objective = _platt_objective(new_a, new_b, s, t)
            if new_objective < objective + 1e-4 * lam * slope:
                break
            lam /= 2.0
        else:
            log.debug("Platt line search stalled at iteration %d.", iterations)
            break
        a, b, objective = float(new_a), float(new_b), new_objective
    if not converged:
        log.warning(
            "Platt fit did not converge after %d iterations; using best iterate a=%.6g b=%.6g.",
            iterations, a, b,
        )
    if a >= 0:
        log.warning("Platt slope a=%.6g is not negative: calibration inverts score order.", a)
    return CalibrationParams(a, b, converged, iterations)


def platt_apply(params: CalibrationParams, s: ScoreSet) -> ScoreSet:
    """Map every score through the fitted sigmoid, keeping record order."""
    calibrated = params.probability(s.values)
    return ScoreSet(tuple(zip(s.paths, calibrated.tolist())), f"{s.detector_name}+platt")


def fit_calibration(
    manifest: DatasetManifest, scores: ScoreSet, per_generator: bool = False,
) -> dict[str, CalibrationParams]:
    """Platt parameters from a calibration manifest.

    Always contains the pooled fit under 'pooled'. With per_generator,
    each generator also gets a fit on its own fakes plus all calibration
    reals (real images carry no generator tag).
    """
    labels = [e.label for e in manifest]
    result = {POOLED_KEY: platt_fit(scores.scores_for(manifest.paths), labels)}
    if per_generator:
        reals = manifest.reals()
        for generator in manifest.generators():
            entries = reals + manifest.fakes_of(generator)
            result[generator] = platt_fit(
                scores.scores_for([e.path for e in entries]), [e.label for e in entries],
            )
    return result


def save_calibration(
    params: Mapping[str, CalibrationParams], path: Union[str, Path], seed: Optional[int] = None,
) -> None:
    doc = dict(params[POOLED_KEY].to_dict())
    per_generator = {k: v.to_dict() for k, v in params.items() if k != POOLED_KEY}
    if per_generator:
        doc["per_generator"] = per_generator
    if seed is not None:
        doc["seed"] = seed
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2)


def load_calibration(path: Union[str, Path]) -> dict[str, CalibrationParams]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ValidationError(f"corrupt calibration file {path}: {e}") from None
    if not isinstance(doc, dict):
        raise ValidationError(f"calibration file {path} is not a JSON object")
    result = {POOLED_KEY: CalibrationParams.from_dict(doc)}
    for generator, sub in (doc.get("per_generator") or {}).items():
        result[generator] = CalibrationParams.from_dict(sub)
    return result


@dataclass(frozen=True)
class CalibrationSplit:
    calibration: DatasetManifest
    remainder: DatasetManifest


def split_calibration(
    manifest: DatasetManifest,
    per_class: int = DEFAULT_CALIBRATION_PER_CLASS,
    seed: int = 0,
) -> CalibrationSplit:
    """Hold out per_class fakes of each generator and per_class reals per generator.

    Selection for generator number g (in sorted order) uses
    derive_item_rng(seed, g); the chosen reals are removed from the pool
    before the next generator draws.
    """
    if per_class < 1:
        raise ValidationError(f"per_class must be >= 1, got {per_class}")
    chosen: list[str] = []
    pool = [e.path for e in manifest.reals()]
    for g, generator in enumerate(manifest.generators()):
        rng = derive_item_rng(seed, g)
        fakes = [e.path for e in manifest.fakes_of(generator)]
        if len(fakes) < per_class or len(pool) < per_class:
            raise ValidationError(
                f"not enough images to hold out {per_class} per class for '{generator}'"
            )
        chosen.extend(fakes[i] for i in sorted(rng.choice(len(fakes), per_class, replace=False)))
        picked = {int(i) for i in rng.choice(len(pool), per_class, replace=False)}
        chosen.extend(pool[i] for i in sorted(picked))
        pool = [p for i, p in enumerate(pool) if i not in picked]
    held_out = set(chosen)
    calibration = manifest.subset(held_out)
    remainder = manifest.subset(p for p in manifest.paths if p not in held_out)
    log.info("Held out %d calibration images, %d remain.", len(calibration), len(remainder))
    return CalibrationSplit(calibration, remainder)


@dataclass(frozen=True)
class GeneratorResult:
    generator: str
    accuracy_pct: float
    auc_pct: float
    n_fake: int
    n_real: int

    def cell(self) -> str:
        return format_cell(self.accuracy_pct, self.auc_pct)


@dataclass(frozen=True)
class EvalReport:
    detector_name: str
    rows: tuple[GeneratorResult, ...]
    avg_accuracy_pct: float
    avg_auc_pct: float
    threshold: float = DEFAULT_THRESHOLD
    accuracy_mode: str = "balanced"
    seed: Optional[int] = None

    def avg_cell(self) -> str:
        return format_cell(self.avg_accuracy_pct, self.avg_auc_pct)

    def to_dict(self) -> dict:
        doc = {
            "detector": self.detector_name,
            "rows": [
                {
                    "generator": r.generator,
                    "acc_pct": r.accuracy_pct,
                    "auc_pct": r.auc_pct,
                    "n_fake": r.n_fake,
                    "n_real": r.n_real,
                }
                for r in self.rows
            ],
            "avg": {"acc_pct": self.avg_accuracy_pct, "auc_pct": self.avg_auc_pct},
            "threshold": self.threshold,
            "accuracy": self.accuracy_mode,
        }
        if self.seed is not None:
            doc["seed"] = self.seed
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_markdown(self) -> str:
        return render_comparison([self])


def format_cell(accuracy_pct: float, auc_pct: float) -> str:
    """'Acc./AUC%' cell with one decimal each, e.g. '99.9/100.0'."""
    return f"{accuracy_pct:.1f}/{auc_pct:.1f}"


def _row(
    generator: str, real: np.ndarray, fake: np.ndarray, threshold: float, accuracy: str,
) -> GeneratorResult:
    return GeneratorResult(
        generator,
        100.0 * accuracy_at_threshold(real, fake, threshold, accuracy),
        100.0 * roc_auc(real, fake),
        fake.size,
        real.size,
    )


def _report(
    name: str, rows: list[GeneratorResult], threshold: float, accuracy: str, seed: Optional[int],
) -> EvalReport:
    avg_acc = float(np.mean([r.accuracy_pct for r in rows]))
    avg_auc = float(np.mean([r.auc_pct for r in rows]))
    return EvalReport(name, tuple(rows), avg_acc, avg_auc, threshold, accuracy, seed)


def _check_report_inputs(manifest: DatasetManifest, scores: ScoreSet) -> None:
    if not manifest.reals():
        raise ValidationError("manifest has no real images")
    if not manifest.generators():
        raise ValidationError("manifest has no synthetic images")
    scores.scores_for(manifest.paths)  # lists every missing path


def build_report(
    manifest: DatasetManifest,
    scores: ScoreSet,
    threshold: float = DEFAULT_THRESHOLD,
    accuracy: str = "balanced",
    seed: Optional[int] = None,
) -> EvalReport:
    """Per-generator Acc./AUC rows against the shared real set, plus AVG.

    Raises:
        ValidationError: missing scores (paths listed), no real images,
            no synthetic images.
    """
    _check_report_inputs(manifest, scores)
    real = scores.scores_for(e.path for e in manifest.reals())
    rows = [
        _row(g, real, scores.scores_for(e.path for e in manifest.fakes_of(g)), threshold, accuracy)
        for g in manifest.generators()
    ]
    return _report(scores.detector_name, rows, threshold, accuracy, seed)


def build_calibrated_report(
    manifest: DatasetManifest,
    scores: ScoreSet,
    params_by_generator: Mapping[str, CalibrationParams],
    threshold: float = DEFAULT_THRESHOLD,
    accuracy: str = "balanced",
    seed: Optional[int] = None,
) -> EvalReport:
    """Like build_report, with each row calibrated by its generator's params.

    Generators without their own entry use the pooled params.
    """
    _check_report_inputs(manifest, scores)
    real = scores.scores_for(e.path for e in manifest.reals())
    rows = []
    for g in manifest.generators():
        params = params_by_generator.get(g) or params_by_generator[POOLED_KEY]
        fake = scores.scores_for(e.path for e in manifest.fakes_of(g))
        rows.append(_row(g, params.probability(real), params.probability(fake), threshold, accuracy))
    return _report(f"{scores.detector_name}+platt", rows, threshold, accuracy, seed)


def render_comparison(reports: Sequence[EvalReport]) -> str:
    """Markdown table with one 'Acc./AUC%' column per report."""
    if not reports:
        raise ValidationError("no reports to render")
    generators = sorted({r.generator for report in reports for r in report.rows})
    cells = [{r.generator: r.cell() for r in report.rows} for report in reports]
    lines = [
        "| Acc./AUC% | " + " | ".join(r.detector_name for r in reports) + " |",
        "|---|" + "---|" * len(reports),
    ]
    for g in generators:
        lines.append(f"| {g} | " + " | ".join(c.get(g, "-") for c in cells) + " |")
    lines.append("| AVG | " + " | ".join(r.avg_cell() for r in reports) + " |")
    return "\n".join(lines) + "\n"
