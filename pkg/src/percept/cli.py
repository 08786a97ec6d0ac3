"""``percept`` command line: featurize | train | eval | plot.

Exit codes: 0 success, 2 bad configuration or arguments, 3 data or file
errors, 4 numerical failure (non-finite loss; artifacts are still written).
"""

import argparse
import json
import logging
import os
import sys

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("percept")


class ConfigError(Exception):
    pass


_SECTIONS = {
    "train": {"epochs", "batch_size", "lr", "patience", "min_delta", "augment"},
    "split": {"train", "val", "test"},
    "mfcc": {"frame_len_ms", "hop_ms", "n_mels", "n_coeffs", "fft_size", "fmin", "fmax"},
    "augment": {"max_rotation_deg", "shear_factor", "zoom_range"},
    "eye": {"image_size"},
    "model": {"layers"},
}
_TOP = {"task", "seed", "data", "out_dir", "feature_cache", "log_level", "report_formats"}
REPORT_FORMATS = ("json", "csv", "pgm")


def _resolve(base, path):
    return path if os.path.isabs(path) else os.path.normpath(os.path.join(base, path))


def load_run_config(path, seed_override=None):
    """Parse a TOML run file into ``(PipelineConfig, settings)``; unknown keys are rejected."""
    try:
        import tomllib as tomli
    except ImportError:  # Python 3.10
        import tomli

    from .audio import MfccConfig
    from .imaging import AugmentParams
    from .pipelines import PipelineConfig

    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    unknown = set(raw) - _TOP - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    for section, allowed in _SECTIONS.items():
        body = raw.get(section, {})
        if not isinstance(body, dict):
            raise ConfigError(f"{path}: [{section}] must be a table")
        bad = set(body) - allowed
        if bad:
            raise ConfigError(f"{path}: unknown keys in [{section}]: {sorted(bad)}")
    for key in ("task", "data"):
        if key not in raw:
            raise ConfigError(f"{path}: missing required key {key!r}")
    seed = seed_override if seed_override is not None else raw.get("seed")
    if seed is None:
        raise ConfigError(f"{path}: a seed is required (config key 'seed' or --seed)")

    base = os.path.dirname(os.path.abspath(path))
    train = raw.get("train", {})
    split = raw.get("split", {})
    kwargs = {
        "task": raw["task"],
        "data": _resolve(base, raw["data"]),
        "seed": int(seed),
        "mfcc": MfccConfig(**raw.get("mfcc", {})),
        "split": (split.get("train", 0.7), split.get("val", 0.15), split.get("test", 0.15)),
    }
    kwargs.update({k: v for k, v in train.items()})
    if "augment" in raw:
        aug = dict(raw["augment"])
        if "zoom_range" in aug:
            aug["zoom_range"] = tuple(aug["zoom_range"])
        kwargs["augment_params"] = AugmentParams(**aug)
    if "image_size" in raw.get("eye", {}):
        kwargs["image_size"] = raw["eye"]["image_size"]
    if "layers" in raw.get("model", {}):
        kwargs["layers"] = raw["model"]["layers"]
    if "feature_cache" in raw:
        kwargs["feature_cache"] = _resolve(base, raw["feature_cache"])
    try:
        config = PipelineConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    formats = raw.get("report_formats", list(REPORT_FORMATS))
    if set(formats) - set(REPORT_FORMATS):
        raise ConfigError(f"{path}: report_formats must be drawn from {REPORT_FORMATS}")
    settings = {
        "out_dir": _resolve(base, raw["out_dir"]) if "out_dir" in raw else None,
        "log_level": raw.get("log_level", "info"),
        "report_formats": formats,
    }
    return config, settings


def _setup_logging(level, quiet):
    level = "warning" if quiet else level
    logging.basicConfig(level=getattr(logging, str(level).upper(), logging.INFO), format="%(levelname)s %(message)s")


def _out_dir(args, settings):
    out = args.out or settings.get("out_dir")
    if not out:
        raise ConfigError("no output directory (config key 'out_dir' or --out)")
    return out


def cmd_featurize(args):
    from . import audio, imaging
    from .pipelines import _seeds, clip_features, fit_speaker_scaler
    from .training import split_dataset

    config, settings = load_run_config(args.config, args.seed)
    _setup_logging(settings["log_level"], args.quiet)
    if config.task != "speaker":
        raise ConfigError(f"featurize only applies to the speaker task, config has {config.task!r}")
    out = _out_dir(args, settings)
    rows = imaging.read_manifest(config.data)
    missing = [p for p, _ in rows if not os.path.exists(p)]
    if missing:
        raise FileNotFoundError(f"audio file not found: {missing[0]}")
    feats, labels, names, _ = clip_features(rows, config.mfcc)
    os.makedirs(out, exist_ok=True)
    cache = config.feature_cache or os.path.join(out, "features.mfcc")
    audio.write_feature_cache(cache, zip(labels, feats))
    split_seed, _, _ = _seeds(config.seed)
    train_idx = split_dataset(labels, config.split, split_seed, n_classes=len(names))[0]
    scaler = fit_speaker_scaler(feats, train_idx)
    with open(os.path.join(out, "scaler.json"), "w") as fh:
        json.dump({"mean": scaler.mean.tolist(), "std": scaler.std.tolist()}, fh, indent=2)
        fh.write("\n")
    for k, name in enumerate(names):
        print(f"{name}: {int((labels == k).sum())} clips")
    print(f"wrote {cache}")
    return EXIT_OK


def _write_outputs(run, out, formats):
    from .pipelines import save_model, write_report
    from .training import write_history_csv

    os.makedirs(out, exist_ok=True)
    save_model(run.model, os.path.join(out, "model.prcp"))
    write_history_csv(run.history, os.path.join(out, "history.csv"))
    write_report(run.report, out, run.model.task)
    _prune(out, formats)


def _prune(out, formats):
    keep = {"json": ["report.json"], "csv": ["confusion.csv"], "pgm": ["confusion.pgm"]}
    for fmt, names in keep.items():
        if fmt not in formats:
            for name in names:
                path = os.path.join(out, name)
                if os.path.exists(path):
                    os.remove(path)


def cmd_train(args):
    from .pipelines import run_training

    config, settings = load_run_config(args.config, args.seed)
    _setup_logging(settings["log_level"], args.quiet)
    out = _out_dir(args, settings)
    run = run_training(config)
    _write_outputs(run, out, settings["report_formats"])
    m = run.report.metrics
    print(f"test accuracy {m.accuracy:.4f}  weighted F1 {m.weighted_f1:.4f}  epochs {len(run.history)}")
    if run.fit.nan_stop:
        print(f"numerical failure: {run.fit.diagnostic}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_eval(args):
    from .pipelines import evaluate_on_dataset, load_model, write_report

    _setup_logging("info", args.quiet)
    model = load_model(args.model)
    report = evaluate_on_dataset(model, os.path.abspath(args.data))
    out = args.out or os.path.dirname(os.path.abspath(args.model))
    write_report(report, out, model.task)
    m = report.metrics
    print(f"test accuracy {m.accuracy:.4f}  weighted F1 {m.weighted_f1:.4f}")
    return EXIT_OK


def cmd_plot(args):
    from . import audio

    _setup_logging("info", args.quiet)
    config = audio.MfccConfig()
    if args.config:
        config = load_run_config(args.config, seed_override=0)[0].mfcc
    buf = audio.read_wav(args.wav)
    paths = audio.render_audio_plots(buf, audio.mfcc(buf, config), args.out, config)
    for p in paths.values():
        print(p)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="percept", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required):
        p.add_argument("--config", required=config_required, help="TOML run file")
        p.add_argument("--out", help="output directory (overrides out_dir)")
        p.add_argument("--seed", type=int, help="seed (overrides the config)")
        p.add_argument("--quiet", action="store_true", help="only log warnings")

    p = sub.add_parser("featurize", help="extract and cache MFCC features")
    common(p, True)
    p.set_defaults(func=cmd_featurize)
    p = sub.add_parser("train", help="train a model and write its report")
    common(p, True)
    p.set_defaults(func=cmd_train)
    p = sub.add_parser("eval", help="score a saved model on a dataset's test split")
    p.add_argument("model")
    p.add_argument("data")
    common(p, False)
    p.set_defaults(func=cmd_eval)
    p = sub.add_parser("plot", help="waveform, spectrogram and MFCC artifacts for a WAV file")
    p.add_argument("wav")
    common(p, False)
    p.set_defaults(func=cmd_plot)
    return parser


def _cap_threads():
    n = os.environ.get("PERCEPT_THREADS")
    if n:
        # must happen before numpy / numba load their thread pools
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
            os.environ[var] = n


def main(argv=None):
    _cap_threads()
    args = build_parser().parse_args(argv)
    if args.command == "plot" and not args.out:
        args.out = "."
    from .audio import WavError
    from .pipelines import DataError, ModelFileError

    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ModelFileError, WavError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
