"""synthtrace command-line entry point.

One binary, several composable subcommands:

  fingerprint -> residual averaging, spectrum rendering, peak listing
  launder     -> crop / resize / JPEG laundering of a manifest
  train/score -> frequency-analysis detector
  eval/fuse/calibrate/split -> metrics, score fusion, Platt calibration
  selftest    -> embedded invariant checks

Exit codes: 0 success, 1 validation error, 2 partial failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Callable, NoReturn, Optional, Sequence

from synthtrace import __version__
from synthtrace.config import GlobalConfig, load_config, whitelist_from_parsers
from synthtrace.constants import (
    ACCURACY_MODES,
    APP_NAME,
    DEFAULT_BINS,
    DEFAULT_CALIBRATION_PER_CLASS,
    DEFAULT_CROP,
    DEFAULT_GAUSSIAN_SIGMA,
    DEFAULT_ITERATIONS,
    DEFAULT_L2,
    DEFAULT_LEARNING_RATE,
    DEFAULT_LOG_LEVEL,
    DEFAULT_MIN_CROP_FRAC,
    DEFAULT_NEIGHBORHOOD,
    DEFAULT_PROMINENCE,
    DEFAULT_QF_MAX,
    DEFAULT_QF_MIN,
    DEFAULT_SEED,
    DEFAULT_SPECTRUM_SCALE,
    DEFAULT_TARGET_SIDE,
    DEFAULT_THRESHOLD,
    DEFAULT_WAVELET_THRESHOLD,
    DENOISER_KINDS,
    EXIT_OK,
    EXIT_PARTIAL,
    EXIT_VALIDATION,
    LOG_LEVELS,
    PEAKS_HEADER,
    POOLED_KEY,
    REPORT_FORMATS,
    SPECTRUM_SCALES,
)
from synthtrace.core import format_score, load_manifest, load_scores, write_manifest, write_scores
from synthtrace.errors import SynthTraceError, ValidationError
from synthtrace.evaluation import (
    build_calibrated_report,
    build_report,
    fit_calibration,
    fuse_scores,
    load_calibration,
    platt_apply,
    render_comparison,
    save_calibration,
    split_calibration,
)
from synthtrace.fingerprint import (
    amplitude_spectrum,
    detect_peaks,
    estimate_fingerprint,
    estimate_fingerprints_by_generator,
    peak_summary,
    render_spectrum,
    render_spectrum_grid,
    write_peak_summary_csv,
    write_peaks_csv,
)
from synthtrace.launder import LaunderParams, launder_manifest
from synthtrace.logger import setup_logging
from synthtrace.residual import DenoiserConfig
from synthtrace.selftest import run_selftest
from synthtrace.specdetector import features_for_manifest, load_model, save_model, score_manifest, train
from synthtrace.workers import default_threads

log = logging.getLogger(__name__)

GLOBAL_KEYS = ("seed", "threads", "log_level", "log_file")

REQUIRED: dict[str, tuple[str, ...]] = {
    "fingerprint": ("manifest",),
    "launder": ("manifest", "out_dir"),
    "train": ("manifest", "out_model"),
    "score": ("manifest", "model", "out_scores"),
    "eval": ("manifest", "scores"),
    "fuse": ("scores", "out"),
    "calibrate": ("scores", "manifest"),
    "split": ("manifest", "out_calibration", "out_remainder"),
    "selftest": (),
}


class UsageError(ValidationError):
    """Bad command line; usage has already been printed."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _positive_int(value: str) -> int:
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {number}")
    return number


def _global_options() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    group = common.add_argument_group("global options")
    group.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                       help=f"global random seed (default: {DEFAULT_SEED})")
    group.add_argument("--threads", type=_positive_int, default=argparse.SUPPRESS,
                       help="worker threads (default: $SYNTHTRACE_THREADS or all cores)")
    group.add_argument("--log-level", choices=LOG_LEVELS, default=argparse.SUPPRESS,
                       help=f"console verbosity (default: {DEFAULT_LOG_LEVEL})")
    group.add_argument("--log-file", type=Path, default=argparse.SUPPRESS,
                       help="also write a rotating debug log here")
    group.add_argument("--config", type=Path, default=argparse.SUPPRESS,
                       help="JSON file mirroring the flags; flags override it")
    return common


def _add_fingerprint(sub: argparse._SubParsersAction, common: argparse.ArgumentParser) -> argparse.ArgumentParser:
    p = sub.add_parser("fingerprint", parents=[common], help="estimate and analyze fingerprints")
    p.add_argument("--manifest", type=Path)
    p.add_argument("--denoiser", choices=DENOISER_KINDS, default="gaussian")
    p.add_argument("--sigma", type=float, default=DEFAULT_GAUSSIAN_SIGMA)
    p.add_argument("--wavelet-threshold", type=float, default=DEFAULT_WAVELET_THRESHOLD)
    p.add_argument("--external-dir", type=Path)
    p.add_argument("--crop", type=_positive_int, default=DEFAULT_CROP)
    p.add_argument("--scale", choices=SPECTRUM_SCALES, default=DEFAULT_SPECTRUM_SCALE,
                   help="rendering scale; peaks are always found on linear magnitudes")
    p.add_argument("--prominence", type=float, default=DEFAULT_PROMINENCE)
    p.add_argument("--neighborhood", type=int, default=DEFAULT_NEIGHBORHOOD)
    p.add_argument("--out-spectrum", type=Path)
    p.add_argument("--out-peaks", type=Path)
    p.add_argument("--by-generator", action="store_true",
                   help="one fingerprint per generator; spectrum becomes a panel grid")
    p.add_argument("--out-summary", type=Path, help="per-generator peak summary CSV")
    return p


def _add_launder(sub: argparse._SubParsersAction, common: argparse.ArgumentParser) -> argparse.ArgumentParser:
    p = sub.add_parser("launder", parents=[common], help="simulate social-network laundering")
    p.add_argument("--manifest", type=Path)
    p.add_argument("--out-dir", type=Path)
    p.add_argument("--target-side", type=int, default=DEFAULT_TARGET_SIDE)
    p.add_argument("--qf-min", type=int, default=DEFAULT_QF_MIN)
    p.add_argument("--qf-max", type=int, default=DEFAULT_QF_MAX)
    p.add_argument("--min-crop-frac", type=float, default=DEFAULT_MIN_CROP_FRAC)
    p.add_argument("--records-csv", type=Path)
    return p


def _add_train(sub: argparse._SubParsersAction, common: argparse.ArgumentParser) -> argparse.ArgumentParser:
    p = sub.add_parser("train", parents=[common], help="train the frequency-analysis detector")
    p.add_argument("--manifest", type=Path)
    p.add_argument("--crop", type=_positive_int, default=DEFAULT_CROP)
    p.add_argument("--bins", type=_positive_int, default=DEFAULT_BINS)
    p.add_argument("--l2", type=float, default=DEFAULT_L2)
    p.add_argument("--iters", type=_positive_int, default=DEFAULT_ITERATIONS)
    p.add_argument("--lr", type=float, default=DEFAULT_LEARNING_RATE)
    p.add_argument("--out-model", type=Path)
    return p


def _add_score(sub: argparse._SubParsersAction, common: argparse.ArgumentParser) -> argparse.ArgumentParser:
    p = sub.add_parser("score", parents=[common], help="score images with a trained detector")
    p.add_argument("--manifest", type=Path)
    p.add_argument("--model", type=Path)
    p.add_argument("--crop", type=_positive_int, help="default: the crop used in training")
    p.add_argument("--out-scores", type=Path)
    return p


def _add_eval(sub: argparse._SubParsersAction, common: argparse.ArgumentParser) -> argparse.ArgumentParser:
    p = sub.add_parser("eval", parents=[common], help="per-generator Acc./AUC report")
    p.add_argument("--manifest", type=Path)
    p.add_argument("--scores", type=Path, nargs="+",
                   help="one score CSV, or several for a side-by-side table")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--accuracy", choices=ACCURACY_MODES, default="balanced")
    p.add_argument("--out", choices=REPORT_FORMATS, default="markdown")
    p.add_argument("--calibration", type=Path, help="Platt parameters JSON from `calibrate`")
    p.add_argument("--report-file", type=Path, help="write the report here instead of stdout")
    return p


def _add_fuse(sub: argparse._SubParsersAction, common: argparse.ArgumentParser) -> argparse.ArgumentParser:
    p = sub.add_parser("fuse", parents=[common], help="average several detectors' scores")
    p.add_argument("--scores", type=Path, nargs="+")
    p.add_argument("--out", type=Path)
    return p


def _add_calibrate(sub: argparse._SubParsersAction, common: argparse.ArgumentParser) -> argparse.ArgumentParser:
    p = sub.add_parser("calibrate", parents=[common], help="Platt-scale detector scores")
    p.add_argument("--scores", type=Path)
    p.add_argument("--manifest", type=Path, help="calibration subset")
    p.add_argument("--out-params", type=Path)
    p.add_argument("--apply-to", type=Path, help="score CSV to calibrate with the pooled fit")
    p.add_argument("--out-scores", type=Path,
                   help="destination for --apply-to (default: <name>_calibrated.csv)")
    p.add_argument("--per-generator", action="store_true",
                   help="also fit one sigmoid per generator")
    return p


def _add_split(sub: argparse._SubParsersAction, common: argparse.ArgumentParser) -> argparse.ArgumentParser:
    p = sub.add_parser("split", parents=[common], help="hold out a small calibration subset")
    p.add_argument("--manifest", type=Path)
    p.add_argument("--per-class", type=_positive_int, default=DEFAULT_CALIBRATION_PER_CLASS)
    p.add_argument("--out-calibration", type=Path)
    p.add_argument("--out-remainder", type=Path)
    return p


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    common = _global_options()
    parser = _Parser(
        prog=APP_NAME,
        description="Synthetic-image forensics: fingerprints, laundering, detector benchmarking.",
        parents=[common],
    )
    parser.add_argument("--version", action="version", version=f"{APP_NAME} {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    subparsers = {
        "fingerprint": _add_fingerprint(sub, common),
        "launder": _add_launder(sub, common),
        "train": _add_train(sub, common),
        "score": _add_score(sub, common),
        "eval": _add_eval(sub, common),
        "fuse": _add_fuse(sub, common),
        "calibrate": _add_calibrate(sub, common),
        "split": _add_split(sub, common),
        "selftest": sub.add_parser("selftest", parents=[common], help="run embedded invariant checks"),
    }
    return parser, subparsers


def _parse(argv: Sequence[str]) -> tuple[argparse.Namespace, GlobalConfig]:
    parser, subparsers = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.error("a subcommand is required")
    sub = subparsers[args.command]

    file_cfg: dict = {}
    if getattr(args, "config", None) is not None:
        file_cfg = load_config(args.config, whitelist_from_parsers(sub))
        sub.set_defaults(**{k: v for k, v in file_cfg.items() if k not in GLOBAL_KEYS})
        args = parser.parse_args(argv)

    missing = [
        "--" + dest.replace("_", "-")
        for dest in REQUIRED[args.command]
        if getattr(args, dest, None) in (None, [])
    ]
    if missing:
        sub.error("the following arguments are required: " + ", ".join(missing))

    def _global(key: str, default):
        return getattr(args, key, file_cfg.get(key, default))

    cfg = GlobalConfig(
        seed=_global("seed", DEFAULT_SEED),
        threads=_global("threads", None) or default_threads(),
        log_level=_global("log_level", DEFAULT_LOG_LEVEL),
        log_file=_global("log_file", None),
    )
    return args, cfg


def _cmd_fingerprint(args: argparse.Namespace, cfg: GlobalConfig) -> int:
    manifest = load_manifest(args.manifest)
    denoiser = DenoiserConfig(
        args.denoiser, args.sigma, args.wavelet_threshold, args.external_dir,
    )
    if args.by_generator:
        fingerprints = estimate_fingerprints_by_generator(manifest, denoiser, args.crop, cfg.threads)
        rows = {}
        for name, fp in fingerprints.items():
            peaks = detect_peaks(amplitude_spectrum(fp), args.prominence, args.neighborhood)
            rows[name] = (fp.count, peak_summary(peaks))
        if args.out_spectrum:
            render_spectrum_grid(
                {name: amplitude_spectrum(fp, args.scale) for name, fp in fingerprints.items()},
                args.out_spectrum,
            )
        if args.out_summary:
            write_peak_summary_csv(rows, args.out_summary)
        else:
            print("generator,n_images,n_peaks,max_prominence")
            for name, (n, summary) in rows.items():
                print(f"{name},{n},{summary.n_peaks},{format_score(summary.max_prominence)}")
        return EXIT_OK

    fp = estimate_fingerprint(manifest, denoiser, args.crop, cfg.threads)
    peaks = detect_peaks(amplitude_spectrum(fp), args.prominence, args.neighborhood)
    log.info("Found %d spectral peaks.", len(peaks))
    if args.out_spectrum:
        render_spectrum(amplitude_spectrum(fp, args.scale), args.out_spectrum)
    if args.out_peaks:
        write_peaks_csv(peaks, args.out_peaks)
    elif not args.out_spectrum:
        print(",".join(PEAKS_HEADER))
        for p in peaks:
            print(f"{p.u},{p.v},{format_score(p.magnitude)},{format_score(p.prominence)}")
    return EXIT_OK


def _cmd_launder(args: argparse.Namespace, cfg: GlobalConfig) -> int:
    params = LaunderParams(
        args.target_side, args.qf_min, args.qf_max, args.min_crop_frac, cfg.seed,
    )
    outcome = launder_manifest(
        load_manifest(args.manifest), params, args.out_dir, cfg.threads, args.records_csv,
    )
    if not outcome.ok:
        for path, message in outcome.failures:
            print(f"failed: {path}: {message}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _cmd_train(args: argparse.Namespace, cfg: GlobalConfig) -> int:
    manifest = load_manifest(args.manifest)
    features = features_for_manifest(manifest, args.crop, args.bins, cfg.threads)
    model = train(
        features, [e.label for e in manifest], args.l2, args.iters, args.lr,
        crop=args.crop, seed=cfg.seed,
    )
    save_model(model, args.out_model)
    log.info("Model written to %s", args.out_model)
    return EXIT_OK


def _cmd_score(args: argparse.Namespace, cfg: GlobalConfig) -> int:
    model = load_model(args.model)
    crop = args.crop or model.meta.crop or DEFAULT_CROP
    scores = score_manifest(model, load_manifest(args.manifest), crop, cfg.threads)
    write_scores(scores, args.out_scores)
    log.info("Wrote %d scores to %s", len(scores), args.out_scores)
    return EXIT_OK


def _cmd_eval(args: argparse.Namespace, cfg: GlobalConfig) -> int:
    manifest = load_manifest(args.manifest)
    params = load_calibration(args.calibration) if args.calibration else None
    reports = []
    for path in args.scores:
        scores = load_scores(path)
        if params is None:
            reports.append(build_report(manifest, scores, args.threshold, args.accuracy, cfg.seed))
        else:
            reports.append(build_calibrated_report(
                manifest, scores, params, args.threshold, args.accuracy, cfg.seed,
            ))
    if args.out == "json":
        docs = [r.to_dict() for r in reports]
        text = json.dumps(docs[0] if len(docs) == 1 else docs, indent=2) + "\n"
    else:
        text = render_comparison(reports) + f"\nthreshold {args.threshold}, {args.accuracy} accuracy, seed {cfg.seed}\n"
    if args.report_file:
        args.report_file.parent.mkdir(parents=True, exist_ok=True)
        args.report_file.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_fuse(args: argparse.Namespace, cfg: GlobalConfig) -> int:
    fused = fuse_scores([load_scores(p) for p in args.scores])
    write_scores(fused, args.out)
    log.info("Fused %d score files into %s", len(args.scores), args.out)
    return EXIT_OK


def _cmd_calibrate(args: argparse.Namespace, cfg: GlobalConfig) -> int:
    params = fit_calibration(load_manifest(args.manifest), load_scores(args.scores), args.per_generator)
    if args.out_params:
        save_calibration(params, args.out_params, cfg.seed)
    else:
        print(json.dumps({k: v.to_dict() for k, v in params.items()}, indent=2))
    if args.apply_to:
        target = args.out_scores or args.apply_to.with_name(f"{args.apply_to.stem}_calibrated.csv")
        write_scores(platt_apply(params[POOLED_KEY], load_scores(args.apply_to)), target)
        log.info("Calibrated scores written to %s", target)
    return EXIT_OK


def _cmd_split(args: argparse.Namespace, cfg: GlobalConfig) -> int:
    split = split_calibration(load_manifest(args.manifest), args.per_class, cfg.seed)
    write_manifest(split.calibration, args.out_calibration)
    write_manifest(split.remainder, args.out_remainder)
    return EXIT_OK


def _cmd_selftest(args: argparse.Namespace, cfg: GlobalConfig) -> int:
    results = run_selftest()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<18} {r.detail} ({r.seconds:.2f}s)")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_VALIDATION


HANDLERS: dict[str, Callable[[argparse.Namespace, GlobalConfig], int]] = {
    "fingerprint": _cmd_fingerprint,
    "launder": _cmd_launder,
    "train": _cmd_train,
    "score": _cmd_score,
    "eval": _cmd_eval,
    "fuse": _cmd_fuse,
    "calibrate": _cmd_calibrate,
    "split": _cmd_split,
    "selftest": _cmd_selftest,
}


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """Parse argv, run the subcommand and return its exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        build_parser()[0].print_help(sys.stderr)
        return EXIT_VALIDATION
    try:
        args, cfg = _parse(argv)
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_VALIDATION
    except ValidationError as e:
        print(f"{APP_NAME}: error: {e}", file=sys.stderr)
        return EXIT_VALIDATION

    setup_logging(cfg.log_level, cfg.log_file)
    log.info("%s v%s %s | seed %d | threads %d", APP_NAME, __version__, args.command, cfg.seed, cfg.threads)
    try:
        return HANDLERS[args.command](args, cfg)
    except (SynthTraceError, OSError) as e:
        log.debug("Command failed.", exc_info=True)
        log.error("%s", e)
        return EXIT_VALIDATION
    except KeyboardInterrupt:
        log.info("Interrupted by user.")
        return EXIT_VALIDATION
    except Exception as e:
        log.critical("Unhandled exception: %s", e, exc_info=True)
        return EXIT_VALIDATION


def main() -> None:
    """Console-script entry point."""
    sys.exit(dispatch())
