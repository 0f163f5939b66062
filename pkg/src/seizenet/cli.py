"""Command line interface: ``features``, ``train``, ``eval`` and ``score``.

Every command accepts ``--config FILE`` with ``key=value`` lines whose keys
are the long option names (dashes or underscores). Explicit flags win over
the file, the file wins over built-in defaults. Unknown keys are rejected.
The seed falls back to ``$SEIZENET_SEED`` when neither flag nor file sets it.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import container, scoring
from .errors import SeizenetError
from .features import FeatureConfig, build_windows, read_signal
from .init import SCHEMES
from .layers_cnn import NetworkConfig
from .model import count_params
from .regularize import RegSpec
from .train import TrainConfig, TrainingDiverged, load_checkpoint, loss_log_csv, relative_decrease, save_checkpoint
from .train import train as run_training

log = logging.getLogger("seizenet")

FEATURE_MAGIC = b"SZFT"
STALL_THRESHOLD = 0.01


def _ints(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).split(",") if v.strip())


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (type, default). These are the keys a --config file may set.
FEATURE_KEYS = {
    "frame_len_s": (float, 0.2),
    "frame_step_s": (float, 0.1),
    "window_s": (float, 21.0),
    "window_stride_s": (float, 1.0),
    "n_filters": (int, 24),
    "n_ceps": (int, 8),
    "diff_energy_span": (int, 9),
    "n_channels": (int, 22),
}
TRAIN_KEYS = {
    "epochs": (int, 10),
    "batch_size": (int, 8),
    "lr": (float, 1e-3),
    "seed": (int, None),
    "init": (str, "orthogonal"),
    "reg": (str, "none"),
    "reg_strength": (float, None),
    "rnn": (str, "lstm"),
    "conv_channels": (_ints, (16, 32, 64)),
    "pool_sizes": (_ints, (2, 2, 2)),
    "conv_kernel": (int, 3),
    "conv1d_channels": (int, 16),
    "conv1d_kernel": (int, 3),
    "pool1d_size": (int, 8),
    "hidden_sizes": (_ints, (128, 256)),
    "bidirectional": (_bool, True),
    "readout": (str, "final"),
}
EVAL_KEYS = {
    "threshold": (float, 0.5),
    "n_thresholds": (int, 101),
}
SCORE_KEYS = {
    "duration": (float, None),
}


class UsageError(SeizenetError):
    pass


def read_config_file(path) -> dict:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def resolve(args: argparse.Namespace, keys: dict) -> dict:
    """Merge defaults, the optional config file and explicit flags."""
    from_file = read_config_file(args.config) if getattr(args, "config", None) else {}
    unknown = sorted(set(from_file) - set(keys))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    out = {}
    for key, (typ, default) in keys.items():
        flag = getattr(args, key, None)
        try:
            if flag is not None:
                out[key] = typ(flag)
            elif key in from_file:
                out[key] = typ(from_file[key])
            else:
                out[key] = default
        except ValueError as exc:
            raise UsageError(f"bad value for {key}: {exc}") from None
    if "seed" in keys and out["seed"] is None:
        env = os.environ.get("SEIZENET_SEED")
        try:
            out["seed"] = int(env) if env else 0
        except ValueError:
            raise UsageError(f"SEIZENET_SEED must be an integer, got {env!r}") from None
    return out


def _require_files(*groups) -> None:
    missing = [str(p) for group in groups for p in ([group] if isinstance(group, str) else group)
               if not Path(p).is_file()]
    if missing:
        raise UsageError(f"no such file: {', '.join(missing)}")


def _header(config: dict) -> list[str]:
    return container.canonical_config(config).splitlines()


def _write_text(path: Path, text: str) -> None:
    container.write_atomic(path, text.encode("utf-8"))


# ---------------------------------------------------------------- features

def cmd_features(args) -> int:
    settings = resolve(args, FEATURE_KEYS)
    cfg = FeatureConfig(**settings)
    out_dir = Path(args.out_dir)
    failures = 0
    for src in args.inputs:
        src = Path(src)
        try:
            sig = read_signal(src)
            windows = build_windows(sig, cfg)
        except (OSError, SeizenetError) as exc:
            log.error("%s: %s", src, exc)
            failures += 1
            continue
        config = {
            "features": settings,
            "source": src.name,
            "duration": sig.duration,
            "sample_rate": sig.sample_rate,
            "channels": list(sig.channels),
            "n_windows": len(windows),
        }
        tensors = {
            "windows": np.stack([w.frames for w in windows]),
            "start_times": np.array([w.start_time for w in windows]),
        }
        dest = out_dir / (src.stem + ".szf")
        container.save(dest, FEATURE_MAGIC, config, tensors)
        log.info("%s: %d windows -> %s", src, len(windows), dest)
    return 1 if failures else 0


def load_features(path):
    config, tensors = container.load(path, FEATURE_MAGIC)
    return config, tensors["windows"], tensors["start_times"]


def window_labels(starts, window_s: float, ref: scoring.EventList, source: str = "") -> np.ndarray:
    """1 for seizure, 0 for background, from the annotation at each window's midpoint."""
    labels = []
    uncovered = []
    for k, start in enumerate(starts):
        lab = ref.label_at(float(start) + window_s / 2.0)
        if lab is None:
            uncovered.append(f"{k}@{float(start):g}s")
        labels.append(1 if lab == scoring.SEIZ else 0)
    if uncovered:
        raise UsageError(f"{source}: annotations do not cover windows {', '.join(uncovered)}")
    return np.array(labels, dtype=int)


# ------------------------------------------------------------------- train

def cmd_train(args) -> int:
    settings = resolve(args, TRAIN_KEYS)
    _require_files(args.features, args.annotations)
    if len(args.annotations) != len(args.features):
        raise UsageError(f"{len(args.features)} feature files but {len(args.annotations)} annotation files")
    all_windows, all_labels, sources = [], [], []
    for feat_path, ann_path in zip(args.features, args.annotations):
        fconfig, windows, starts = load_features(feat_path)
        ref = scoring.read_annotations(ann_path, fconfig["duration"])
        all_labels.append(window_labels(starts, fconfig["features"]["window_s"], ref, str(ann_path)))
        all_windows.append(windows)
        sources.append(Path(feat_path).name)
    shapes = {w.shape[1:] for w in all_windows}
    if len(shapes) != 1:
        raise UsageError(f"feature files disagree on window shape: {sorted(shapes)}")
    windows = np.concatenate(all_windows)
    labels = np.concatenate(all_labels)
    net_cfg = NetworkConfig(
        input_shape=windows.shape[1:],
        conv_channels=settings["conv_channels"],
        conv_kernel=settings["conv_kernel"],
        pool_sizes=settings["pool_sizes"],
        conv1d_channels=settings["conv1d_channels"],
        conv1d_kernel=settings["conv1d_kernel"],
        pool1d_size=settings["pool1d_size"],
        rnn_kind=settings["rnn"],
        hidden_sizes=settings["hidden_sizes"],
        bidirectional=settings["bidirectional"],
        readout=settings["readout"],
    )
    reg = RegSpec.from_strength(settings["reg"], settings["reg_strength"])
    tcfg = TrainConfig(
        epochs=settings["epochs"],
        batch_size=settings["batch_size"],
        lr=settings["lr"],
        seed=settings["seed"],
        init=settings["init"],
        reg=reg,
        rnn_kind=settings["rnn"],
    )
    embedded = {"train": settings, "sources": sources, "seed": settings["seed"]}
    try:
        result = run_training(windows, labels, tcfg, net_cfg)
    except TrainingDiverged as exc:
        from .model import Network

        save_checkpoint(args.out, Network(net_cfg, exc.last_good), {**embedded, "diverged": True})
        _write_text(Path(args.log), loss_log_csv(exc.log, embedded))
        log.error("training diverged: %s; last good parameters saved to %s", exc, args.out)
        return 1
    save_checkpoint(args.out, result.network, embedded)
    _write_text(Path(args.log), loss_log_csv(result.log, embedded))
    n_params = count_params(result.network.params)
    log.info("trained %s network with %d parameters; training accuracy %.3f", settings["rnn"], n_params, result.accuracy)
    print(f"parameters={n_params} steps={len(result.log)} train_accuracy={result.accuracy:.4f}")
    drop = relative_decrease(result.log)
    if len(result.log) >= 2 and drop < STALL_THRESHOLD:
        log.warning("training loss stalled: %.3f%% decrease over %d steps (init=%s)",
                    100 * drop, len(result.log), settings["init"])
    return 0


# -------------------------------------------------------------------- eval

def cmd_eval(args) -> int:
    settings = resolve(args, EVAL_KEYS)
    _require_files(args.checkpoint, args.features, args.annotations)
    net, ckpt_cfg = load_checkpoint(args.checkpoint)
    fconfig, windows, starts = load_features(args.features)
    if tuple(windows.shape[1:]) != net.config.input_shape:
        chain = " -> ".join(str(s) for _, s in net.config.shape_chain())
        raise UsageError(f"checkpoint expects windows {net.config.input_shape} (chain {chain}), "
                         f"found {tuple(windows.shape[1:])}")
    duration = fconfig["duration"]
    ref = scoring.read_annotations(args.annotations, duration)
    win_post = net.predict(windows)[:, 0]
    post = scoring.window_posteriors_to_epochs(win_post, starts, fconfig["features"]["window_s"], ref.n_epochs)
    thresholds = np.unique(np.concatenate([np.linspace(0, 1, settings["n_thresholds"]), post]))
    points = scoring.det_curve(post, ref, thresholds)
    hyp = scoring.posteriors_to_events(post, settings["threshold"], duration)
    report = scoring.score_epochs(ref, hyp)
    overlap = scoring.overlap_score(ref, hyp)

    embedded = {"eval": settings, "checkpoint": ckpt_cfg, "features": Path(args.features).name}
    header = _header(embedded)
    out_dir = Path(args.out_dir)
    stem = Path(args.features).stem
    post_lines = [f"# {h}" for h in header] + ["epoch,posterior"] + [f"{k},{float(p)!r}" for k, p in enumerate(post)]
    _write_text(out_dir / f"{stem}_posteriors.csv", "\n".join(post_lines) + "\n")
    _write_text(out_dir / f"{stem}_det.csv", scoring.det_csv(points, header))
    _write_text(out_dir / f"{stem}_hyp.csv", scoring.annotations_csv(hyp, header))
    text = scoring.format_report([(args.name or stem, report)]) + scoring.format_details(report, overlap)
    _write_text(out_dir / f"{stem}_report.txt", "\n".join(f"# {h}" for h in header) + "\n" + text)
    sys.stdout.write(text)
    return 0


# ------------------------------------------------------------------- score

def cmd_score(args) -> int:
    settings = resolve(args, SCORE_KEYS)
    _require_files(args.ref, args.hyp)
    ref = scoring.read_annotations(args.ref, settings["duration"])
    hyp = scoring.read_annotations(args.hyp, settings["duration"] if settings["duration"] else ref.total_duration)
    report = scoring.score_epochs(ref, hyp)
    overlap = scoring.overlap_score(ref, hyp)
    sys.stdout.write(scoring.format_report([(args.name or Path(args.hyp).stem, report)]))
    sys.stdout.write(scoring.format_details(report, overlap))
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seizenet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="extract LFCC feature windows from signal files")
    p.add_argument("inputs", nargs="+", help="CSV or EEGR binary signal files")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    for key, (typ, _) in FEATURE_KEYS.items():
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train a network on feature files and annotations")
    p.add_argument("--features", nargs="+", required=True)
    p.add_argument("--annotations", nargs="+", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", required=True, help="loss log CSV path")
    p.add_argument("--config")
    p.add_argument("--rnn", choices=("lstm", "gru"))
    p.add_argument("--init", choices=SCHEMES)
    p.add_argument("--reg", choices=("l1", "l2", "l1l2", "dropout", "gaussian", "none"))
    p.add_argument("--reg-strength", dest="reg_strength", type=float)
    for key, (typ, _) in TRAIN_KEYS.items():
        if key not in ("rnn", "init", "reg", "reg_strength"):
            p.add_argument("--" + key.replace("_", "-"), dest=key, type=str if typ in (_ints, _bool) else typ)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint against reference annotations")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--name")
    p.add_argument("--config")
    p.add_argument("--threshold", type=float)
    p.add_argument("--n-thresholds", dest="n_thresholds", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("score", help="score hypothesis annotations against a reference")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--name")
    p.add_argument("--config")
    p.add_argument("--duration", type=float)
    p.set_defaults(func=cmd_score)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    log.handlers[:] = [handler]
    log.propagate = False
    log.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    try:
        return args.func(args)
    except UsageError as exc:
        log.error("%s", exc)
        return 2
    except (OSError, SeizenetError, ValueError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
