"""Command-line entry point.

Every stage reads and writes files so a pipeline can be resumed from any
point::

    echodiet simulate scene.json script.json sim/
    echodiet process sim/audio.mspc proc/
    echodiet dataset data.msds --session p1 proc/diff.msep sim/truth.csv
    echodiet train data.msds runs/ --holdout all
    echodiet report runs/predictions_p1.csv sim/truth.csv report.json

Each command writes ``manifest.json`` (SHA-256 of inputs and outputs) into
its output directory. Exit codes: 0 success, 2 usage/config or unreadable
input, 3 inconsistent data, 4 training divergence.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from . import labels as L
from .analytics import SegmentConfig, build_report, to_frame_timeline
from .errors import ConfigError, EchoDietError, FormatError, TrainingError

log = logging.getLogger("echodiet")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4

DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "deterministic": True,
    "window_s": 2.0,
    "overlap": 0.5,
    "range_bins": 150,
    "epochs": 30,
    "batch_size": 128,
    "lr0": 1e-2,
    "gamma": 2.0,
    "augment": True,
    "n_mics": 2,
    "profile_mode": "envelope",
    "segment_s": 270,
    "sweep_windows": [1.0, 2.0, 3.0],
    "sweep_ranges_cm": [30.0, 50.0, 80.0, 100.0],
}


class UsageError(ConfigError):
    pass


# -- helpers --------------------------------------------------------------------

def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, config: dict, inputs, outputs) -> Path:
    """Manifest keyed by file name; no paths or timestamps, so reruns match byte for byte."""
    from .formats import write_json

    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "inputs": {Path(p).name: sha256(p) for p in inputs},
        "outputs": {Path(p).name: sha256(p) for p in outputs},
    }
    path = out_dir / "manifest.json"
    write_json(path, manifest)
    return path


def resolve(args, file_cfg: dict, keys) -> dict:
    """Flag > config file > built-in default."""
    out = {}
    for k in keys:
        flag = getattr(args, k, None)
        if flag is not None:
            out[k], src = flag, "flag"
        elif k in file_cfg:
            out[k], src = file_cfg[k], "config"
        else:
            out[k], src = DEFAULTS[k], "default"
        log.info("config %s = %r (%s)", k, out[k], src)
    return out


def _need_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"input not found: {p}")
    return p


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _positive_bins(n) -> int:
    n = int(n)
    if n < 1:
        raise UsageError(f"--range-bins must be a positive integer, got {n}")
    return n


def _setup_torch(cfg):
    from .classifier.train import configure_torch

    configure_torch(cfg["threads"], cfg["deterministic"])


def write_predictions(path, preds):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["start_time_s", *[f"p_{c}" for c in L.CLASSES], "label"])
    for p in preds:
        w.writerow([f"{p.start_time_s:.6f}", *[f"{v:.9f}" for v in p.probs], p.label])
    Path(path).write_text(buf.getvalue())


def read_predictions(path):
    from .classifier.train import Prediction

    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0][0] != "start_time_s" or len(rows[0]) != L.N_CLASSES + 2:
        raise FormatError(f"{path}: not a predictions CSV")
    out = []
    try:
        for row in rows[1:]:
            probs = np.array([float(v) for v in row[1:-1]])
            out.append(Prediction(float(row[0]), probs, L.to_name(row[-1])))
    except (ValueError, IndexError) as e:
        raise FormatError(f"{path}: malformed row ({e})") from None
    return out


# -- commands --------------------------------------------------------------------

def cmd_simulate(args, file_cfg):
    from .channel_sim import ActivityScript, Scene, render_scene
    from .formats import read_json, write_audio, write_timeline

    cfg = resolve(args, file_cfg, ["n_mics"])
    scene_path, script_path = _need_file(args.scene), _need_file(args.script)
    scene = Scene.from_dict(read_json(scene_path))
    if args.seed is not None:
        scene.seed = int(args.seed)
    script = ActivityScript.from_dict(read_json(script_path))
    out = _out_dir(args.out_dir)
    stream, truth = render_scene(scene, script, n_mics=int(cfg["n_mics"]))
    audio, truth_csv = out / "audio.mspc", out / "truth.csv"
    write_audio(audio, stream)
    write_timeline(truth_csv, truth)
    cfg["seed"] = scene.seed
    write_manifest(out, "simulate", cfg, [scene_path, script_path], [audio, truth_csv])
    return {"audio": str(audio), "truth": str(truth_csv), "seconds": stream.duration_s,
            "channels": stream.n_channels}


def cmd_process(args, file_cfg):
    from .formats import read_audio, write_profile
    from .signal_core import SensingConfig, compute_echo_profile, differentiate

    cfg = resolve(args, file_cfg, ["range_bins", "profile_mode"])
    n_bins = _positive_bins(cfg["range_bins"])
    src = _need_file(args.audio)
    stream = read_audio(src)
    sensing = SensingConfig(sample_rate=int(stream.sample_rate)).with_options(
        profile_mode=cfg["profile_mode"])
    if n_bins > sensing.range_bins_full:
        raise UsageError(f"--range-bins must not exceed {sensing.range_bins_full}")
    echo = compute_echo_profile(stream, sensing, n_bins=n_bins)
    diff = differentiate(echo, sensing.differential_mode)
    out = _out_dir(args.out_dir)
    echo_path, diff_path = out / "echo.msep", out / "diff.msep"
    write_profile(echo_path, echo)
    write_profile(diff_path, diff)
    write_manifest(out, "process", cfg, [src], [echo_path, diff_path])
    return {"echo": str(echo_path), "differential": str(diff_path),
            "shape": list(diff.data.shape)}


def _session_samples(sessions, window_s, overlap, n_bins):
    """Windows from ``(group, diff, truth)`` triples.

    Sessions of one group are laid end to end in time so start times stay
    unique within the group.
    """
    from .dataset import assign_labels, slice_windows
    from .formats import read_profile, read_timeline

    samples, clock = [], {}
    for group, diff_path, truth_path in sessions:
        diff = read_profile(_need_file(diff_path))
        truth = read_timeline(_need_file(truth_path))
        if n_bins > diff.n_range_bins:
            raise UsageError(f"{diff_path} has {diff.n_range_bins} range bins, {n_bins} requested")
        offset = clock.get(group, 0.0)
        got = assign_labels(slice_windows(diff, window_s, overlap, n_bins), truth, window_s, group)
        for s in got:
            s.start_time_s += offset
        samples.extend(got)
        clock[group] = offset + len(truth)
    return samples


def cmd_dataset(args, file_cfg):
    from .formats import write_dataset

    cfg = resolve(args, file_cfg, ["window_s", "overlap", "range_bins"])
    n_bins = _positive_bins(cfg["range_bins"])
    if not args.session:
        raise UsageError("at least one --session GROUP DIFF TRUTH is required")
    samples = _session_samples(args.session, float(cfg["window_s"]), float(cfg["overlap"]), n_bins)
    if not samples:
        raise EchoDietError("no complete window fits in the given sessions")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(out, samples)
    inputs = [p for _, d, t in args.session for p in (d, t)]
    write_manifest(out.parent, "dataset", cfg, inputs, [out])
    counts = {c: sum(s.label == c for s in samples) for c in L.CLASSES}
    return {"dataset": str(out), "n_windows": len(samples),
            "shape": list(samples[0].tensor.shape), "class_counts": counts}


def _train_cfg(cfg):
    from .classifier import TrainConfig

    return TrainConfig(lr0=float(cfg["lr0"]), epochs=int(cfg["epochs"]),
                       batch_size=int(cfg["batch_size"]), gamma=float(cfg["gamma"]),
                       seed=int(cfg["seed"]), threads=int(cfg["threads"]))


def _fit_and_score(samples, holdout, cfg, out: Path | None, on_epoch=None):
    """Train on all groups but ``holdout``, evaluate on it, optionally persist."""
    from .classifier import ModelConfig, predict, save_checkpoint, train
    from .classifier.train import log_lines
    from .dataset import AugmentConfig, augment, split
    from .metrics import confusion, macro_f1
    from .plots import confusion_figure

    tr, te = split(samples, holdout)
    if not tr:
        raise EchoDietError(f"holding out {holdout!r} leaves no training data")
    if cfg["augment"]:
        tr = augment(tr, AugmentConfig(seed=int(cfg["seed"])))
    result = train(tr, ModelConfig(input_shape=tr[0].tensor.shape), _train_cfg(cfg),
                   on_epoch=on_epoch)
    preds = predict(result.model, te)
    cm = confusion([s.label for s in te], [p.label for p in preds])
    report = macro_f1(cm)
    files = []
    if out is not None:
        files = [out / f"model_{holdout}.msmd", out / f"trainlog_{holdout}.jsonl",
                 out / f"predictions_{holdout}.csv", out / f"metrics_{holdout}.json",
                 out / f"confusion_{holdout}.png", out / f"confusion_{holdout}.csv"]
        save_checkpoint(files[0], result.model, {"holdout": holdout, "best_epoch": result.best_epoch,
                                                 "alpha": result.alpha})
        files[1].write_text(log_lines(result.log))
        write_predictions(files[2], preds)
        from .formats import write_json

        write_json(files[3], {"holdout": holdout, "n_test": len(te), "best_epoch": result.best_epoch,
                              **report.to_dict(), "confusion": cm.counts.tolist()})
        confusion_figure(cm, files[4], files[5])
    return report, cm, files


def cmd_train(args, file_cfg):
    from .dataset import groups_of
    from .formats import read_dataset, write_json
    from .metrics import ConfusionMatrix, macro_f1
    from .plots import confusion_figure

    cfg = resolve(args, file_cfg, ["seed", "threads", "deterministic", "epochs", "batch_size",
                                   "lr0", "gamma", "augment"])
    _setup_torch(cfg)
    src = _need_file(args.dataset)
    samples = read_dataset(src)
    groups = groups_of(samples)
    holdouts = groups if args.holdout == "all" else [args.holdout]
    for h in holdouts:
        if h not in groups:
            raise UsageError(f"unknown holdout {h!r}; dataset has {groups}")
    if len(groups) < 2:
        raise UsageError("leave-one-out needs at least two groups")
    out = _out_dir(args.out_dir)
    pooled = np.zeros((L.N_CLASSES, L.N_CLASSES), dtype=np.int64)
    files, folds = [], {}
    for h in holdouts:
        report, cm, written = _fit_and_score(samples, h, cfg, out)
        pooled += cm.counts
        folds[h] = report.macro_f1
        files += written
    summary = {"folds": folds, **macro_f1(ConfusionMatrix(pooled)).to_dict(),
               "confusion": pooled.tolist()}
    write_json(out / "metrics.json", summary)
    confusion_figure(ConfusionMatrix(pooled), out / "confusion.png", out / "confusion.csv")
    files += [out / "metrics.json", out / "confusion.png", out / "confusion.csv"]
    write_manifest(out, "train", cfg, [src], files)
    return {"out_dir": str(out), "folds": folds, "macro_f1": summary["macro_f1"]}


def cmd_evaluate(args, file_cfg):
    from .classifier import load_checkpoint, predict
    from .formats import read_dataset, write_json
    from .metrics import confusion, macro_f1
    from .plots import confusion_figure

    cfg = resolve(args, file_cfg, ["threads", "deterministic"])
    _setup_torch(cfg)
    ckpt, src = _need_file(args.checkpoint), _need_file(args.dataset)
    model, extra = load_checkpoint(ckpt)
    samples = read_dataset(src)
    if args.holdout:
        samples = [s for s in samples if s.group == args.holdout]
        if not samples:
            raise UsageError(f"no windows for group {args.holdout!r}")
    preds = predict(model, samples)
    cm = confusion([s.label for s in samples], [p.label for p in preds])
    report = macro_f1(cm)
    out = _out_dir(args.out_dir)
    files = [out / "predictions.csv", out / "metrics.json", out / "confusion.png",
             out / "confusion.csv"]
    write_predictions(files[0], preds)
    write_json(files[1], {**report.to_dict(), "confusion": cm.counts.tolist(),
                          "n_test": len(samples), "checkpoint": extra})
    confusion_figure(cm, files[2], files[3])
    write_manifest(out, "evaluate", cfg, [ckpt, src], files)
    return {"macro_f1": report.macro_f1, "n_test": len(samples)}


def cmd_report(args, file_cfg):
    from .formats import read_timeline, write_json

    cfg = resolve(args, file_cfg, ["segment_s"])
    preds = read_predictions(_need_file(args.predictions))
    truth = read_timeline(_need_file(args.truth))
    window_s = int(round(args.window_s))
    pred_tl = to_frame_timeline(preds, window_s=window_s)
    if len(pred_tl) < len(truth):
        raise EchoDietError(f"predictions cover {len(pred_tl)} s but the truth has {len(truth)} s")
    seg = SegmentConfig(segment_len_s=int(cfg["segment_s"]))
    report = build_report(pred_tl.labels[: len(truth)], truth.labels, seg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_json(out, {"segment_len_s": seg.segment_len_s, "intake_threshold": seg.intake_threshold,
                     **report.to_dict()})
    return {"report": str(out), "segments": len(report.segments), "fnr": report.fnr,
            "fpr": report.fpr}


def cmd_sweep(args, file_cfg):
    from .dataset import groups_of
    from .formats import write_json
    from .metrics import ConfusionMatrix, macro_f1
    from .plots import sweep_figure
    from .signal_core import SensingConfig

    cfg = resolve(args, file_cfg, ["seed", "threads", "deterministic", "epochs", "batch_size",
                                   "lr0", "gamma", "augment", "overlap", "sweep_windows",
                                   "sweep_ranges_cm"])
    _setup_torch(cfg)
    if not args.session:
        raise UsageError("at least one --session GROUP DIFF TRUTH is required")
    sensing = SensingConfig()
    windows = [float(w) for w in cfg["sweep_windows"]]
    ranges = [float(r) for r in cfg["sweep_ranges_cm"]]
    if any(r <= 0 for r in ranges) or any(w <= 0 for w in windows):
        raise UsageError("sweep windows and ranges must be positive")
    out = _out_dir(args.out_dir)
    scores = np.zeros((len(windows), len(ranges)))
    for i, w in enumerate(windows):
        for j, r in enumerate(ranges):
            n_bins = _positive_bins(sensing.bins_for_distance(r / 100))
            samples = _session_samples(args.session, w, float(cfg["overlap"]), n_bins)
            pooled = np.zeros((L.N_CLASSES, L.N_CLASSES), dtype=np.int64)
            for h in groups_of(samples):
                _, cm, _ = _fit_and_score(samples, h, cfg, None)
                pooled += cm.counts
            scores[i, j] = macro_f1(ConfusionMatrix(pooled)).macro_f1
            log.info("sweep window %gs range %gcm (%d bins): macro-F1 %.4f", w, r, n_bins, scores[i, j])
    png, table = sweep_figure(windows, ranges, scores, out / "sweep.png", out / "sweep.csv")
    write_json(out / "sweep.json", {"windows_s": windows, "ranges_cm": ranges,
                                    "macro_f1": scores.tolist()})
    inputs = [p for _, d, t in args.session for p in (d, t)]
    write_manifest(out, "sweep", cfg, inputs, [png, table, out / "sweep.json"])
    return {"windows_s": windows, "ranges_cm": ranges, "macro_f1": scores.tolist()}


def cmd_benchmark(args, file_cfg):
    from .benchmark import BenchmarkConfig, run_benchmark
    from .formats import write_json
    from .metrics import ConfusionMatrix
    from .plots import confusion_figure

    cfg = resolve(args, file_cfg, ["seed", "threads", "deterministic", "epochs", "batch_size",
                                   "lr0", "gamma", "augment"])
    _setup_torch(cfg)
    bcfg = BenchmarkConfig(n_participants=args.participants, sessions_per_participant=args.sessions,
                           session_s=args.session_s, seed=int(cfg["seed"]),
                           augment=bool(cfg["augment"]))
    if bcfg.n_participants < 2 or bcfg.sessions_per_participant < 1 or bcfg.session_s < 3:
        raise UsageError("benchmark needs >= 2 participants, >= 1 session and >= 3 s sessions")
    result = run_benchmark(bcfg, _train_cfg(cfg))
    out = _out_dir(args.out_dir)
    summary = result.to_dict()
    summary.pop("seconds")
    summary["simulated_minutes"] = bcfg.total_minutes
    write_json(out / "benchmark.json", summary)
    png, table = confusion_figure(ConfusionMatrix(result.pooled_confusion), out / "confusion.png",
                                  out / "confusion.csv")
    cfg.update(asdict(bcfg))
    write_manifest(out, "benchmark", cfg, [], [out / "benchmark.json", png, table])
    return {"macro_f1": result.pooled_macro_f1,
            "folds": {f.holdout: f.macro_f1 for f in result.folds},
            "seconds": result.seconds}


# -- parser ---------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _add_training_flags(p):
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr0", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--augment", action=argparse.BooleanOptionalAction, default=None)


def _add_sessions(p):
    p.add_argument("--session", nargs=3, action="append", metavar=("GROUP", "DIFF", "TRUTH"),
                   help="differential profile (MSEP) and truth timeline (CSV) of one session")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="echodiet", description="Acoustic dietary-activity sensing pipeline.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--config", help="JSON file of defaults; flags take precedence")
    p.add_argument("--json", action="store_true", help="print a JSON summary on stdout")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="render a scripted scene to microphone audio")
    s.add_argument("scene")
    s.add_argument("script")
    s.add_argument("out_dir")
    s.add_argument("--n-mics", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("process", help="echo and differential echo profiles from audio")
    s.add_argument("audio")
    s.add_argument("out_dir")
    s.add_argument("--range-bins", type=int)
    s.add_argument("--profile-mode", choices=["envelope", "magnitude", "signed"])
    s.set_defaults(func=cmd_process)

    s = sub.add_parser("dataset", help="labelled windows from processed sessions")
    s.add_argument("out")
    _add_sessions(s)
    s.add_argument("--window-s", type=float)
    s.add_argument("--overlap", type=float)
    s.add_argument("--range-bins", type=int)
    s.set_defaults(func=cmd_dataset)

    s = sub.add_parser("train", help="leave-one-group-out training and evaluation")
    s.add_argument("dataset")
    s.add_argument("out_dir")
    s.add_argument("--holdout", required=True, help="group to hold out, or 'all'")
    _add_training_flags(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="score a checkpoint on a dataset")
    s.add_argument("checkpoint")
    s.add_argument("dataset")
    s.add_argument("out_dir")
    s.add_argument("--holdout", help="restrict to one group")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("report", help="eating-episode analytics from window predictions")
    s.add_argument("predictions")
    s.add_argument("truth")
    s.add_argument("out")
    s.add_argument("--window-s", type=float, default=2.0)
    s.add_argument("--segment-s", type=int)
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("sweep", help="macro-F1 over window length and sensing range")
    s.add_argument("out_dir")
    _add_sessions(s)
    s.add_argument("--sweep-windows", type=float, nargs="+")
    s.add_argument("--sweep-ranges-cm", type=float, nargs="+")
    s.add_argument("--overlap", type=float)
    _add_training_flags(s)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("benchmark", help="synthetic multi-participant benchmark")
    s.add_argument("out_dir")
    s.add_argument("--participants", type=int, default=3)
    s.add_argument("--sessions", type=int, default=5)
    s.add_argument("--session-s", type=int, default=120)
    _add_training_flags(s)
    s.set_defaults(func=cmd_benchmark)
    return p


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, TrainingError):
        return EXIT_DIVERGED
    if isinstance(exc, (ConfigError, FormatError, FileNotFoundError, IsADirectoryError)):
        return EXIT_USAGE
    if isinstance(exc, EchoDietError):
        return EXIT_DATA
    if isinstance(exc, (ValueError, OSError)):
        return EXIT_DATA
    raise exc


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"echodiet: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        file_cfg = {}
        if args.config:
            from .formats import read_json

            file_cfg = read_json(_need_file(args.config))
            if not isinstance(file_cfg, dict):
                raise UsageError("config file must hold a JSON object")
            unknown = set(file_cfg) - set(DEFAULTS)
            if unknown:
                raise UsageError(f"unknown config keys: {sorted(unknown)}")
        result = args.func(args, file_cfg)
    except Exception as e:  # mapped to exit codes below
        code = _exit_code(e)
        print(f"echodiet: error: {e}", file=sys.stderr)
        return code
    if args.json:
        print(json.dumps(result, sort_keys=True))
    else:
        for k, v in result.items():
            print(f"{k}: {v}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
