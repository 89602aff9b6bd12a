"""Command-line stages wiring the pipeline into reproducible runs.

Every command reads an optional JSON config (``--config``), applies ``--set
key=value`` overrides (values parsed as JSON, falling back to strings),
validates against its documented key set (unknown keys are rejected), writes
the resolved config next to its outputs, and emits machine-readable JSON/CSV
artifacts plus a short human-readable summary on stdout.

Exit codes: 0 success, 1 config/validation error, 2 runtime or data error,
3 training divergence.

Environment overrides: ROOMSENSE_OUTDIR replaces the output directory,
ROOMSENSE_THREADS sets the tune worker count. Everything else comes from the
config file or --set.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .errors import ConfigError, RoomsenseError, TrainingDivergedError
from .evaluation import (
    PredictionTrack,
    confusions_to_json,
    evaluate,
    feature_matrix,
    predict_timeline,
    smooth,
)
from .frames import (
    CorrelationMatrix,
    FeatureSet,
    SensorFrame,
    binarize_person,
    frame_to_csv,
    interpolate_missing,
    missing_report,
    parse_frame,
    pearson_matrix,
    select_features,
)
from .models import (
    build_encoder_classifier,
    build_model,
    HeadConfig,
    model_from_checkpoint,
    param_count,
    save_model,
)
from .nn.checkpoint import load_checkpoint
from .pca import pca_fit, pca_project, projection_csv
from .pipeline import (
    ScalerParams,
    SplitSpec,
    WindowSet,
    build_windows,
    fit_scaler,
    split_random,
    split_time,
    transform,
)
from .search import (
    SearchSpace,
    fcn_search_space,
    lstm_search_space,
    random_search,
    trials_to_json,
)
from .synth import ScenarioConfig, bundled_scenario, generate_fleet, generate_frame
from .training import TrainConfig, train_autoencoder, train_classifier

# Documented keys (and defaults) per command; unknown keys are rejected.
COMMAND_KEYS: dict[str, dict] = {
    "synth": {"out": "runs/synth", "seed": None, "scenario": "bundled",
              "fleet_devices": 0, "fleet_jitter": 0.02},
    "clean": {"out": "runs/clean", "in": None, "edge_policy": "trim",
              "binarize": True},
    "report-missing": {"out": "runs/report-missing", "in": None},
    "correlate": {"out": "runs/correlate", "in": None, "variables": None},
    "select-features": {"out": "runs/select-features", "correlation": None,
                        "pair_threshold": 0.9,
                        "classes": ["person", "window_open"]},
    "sample": {"out": "runs/sample", "in": None, "channels": None,
               "features_file": None, "length": 7, "stride": 1,
               "position": "first", "undersample_k": None, "max_gap_s": 360},
    "split": {"out": "runs/split", "mode": "random", "in": None, "seed": 0,
              "ratios": [0.7, 0.2, 0.1], "cut_timestamp": None},
    "train": {"out": "runs/train", "train_windows": None, "valid_windows": None,
              "model": None, "train": {}, "scaler_kind": "standard", "seed": 0},
    "tune": {"out": "runs/tune", "train_windows": None, "valid_windows": None,
             "model_kind": "fcn", "model": {}, "space": None, "trials": 10,
             "train": {}, "scaler_kind": "standard", "seed": 0},
    "pretrain-ae": {"out": "runs/pretrain-ae", "windows": None, "model": {},
                    "train": {}, "scaler_kind": "standard", "seed": 0},
    "train-head": {"out": "runs/train-head", "encoder": None, "scaler": None,
                   "train_windows": None, "valid_windows": None, "head": {},
                   "train": {}, "seed": 0},
    "eval": {"out": "runs/eval", "checkpoint": None, "scaler": None,
             "windows": None, "threshold": 0.5, "expect_fingerprint": None},
    "predict": {"out": "runs/predict", "checkpoint": None, "scaler": None,
                "in": None, "length": 7, "position": "first", "threshold": 0.5,
                "max_gap_s": 360},
    "smooth": {"out": "runs/smooth", "track": None, "width": 3},
    "pca": {"out": "runs/pca", "checkpoint": None, "scaler": None,
            "windows": None},
}


def _parse_set(value: str) -> tuple[str, object]:
    if "=" not in value:
        raise ConfigError(f"--set expects key=value, got {value!r}")
    key, raw = value.split("=", 1)
    try:
        return key, json.loads(raw)
    except json.JSONDecodeError:
        return key, raw


def resolve_config(command: str, config_path: str | None, overrides: list[str],
                   seed: int | None, out: str | None) -> dict:
    known = COMMAND_KEYS[command]
    resolved = {k: (json.loads(json.dumps(v)) if isinstance(v, (dict, list)) else v)
                for k, v in known.items()}
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {config_path}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file is not valid JSON: {e}") from None
        for key, value in loaded.items():
            if key == "_meta":
                continue  # resolved configs carry their metadata block along
            if key not in known:
                raise ConfigError(f"unknown config key {key!r} for command {command!r}")
            resolved[key] = value
    for item in overrides:
        key, value = _parse_set(item)
        if key not in known:
            raise ConfigError(f"unknown config key {key!r} for command {command!r}")
        resolved[key] = value
    if seed is not None and "seed" in known:
        resolved["seed"] = seed
    if out is not None:
        resolved["out"] = out
    env_out = os.environ.get("ROOMSENSE_OUTDIR")
    if env_out:
        resolved["out"] = env_out
    return resolved


def _require(cfg: dict, key: str) -> object:
    if cfg.get(key) in (None, ""):
        raise ConfigError(f"missing required config key {key!r}")
    return cfg[key]


def _write(outdir: Path, name: str, text: str) -> None:
    (outdir / name).write_text(text, encoding="utf-8")


def _write_resolved(outdir: Path, command: str, cfg: dict) -> None:
    # flat and directly consumable via --config; _meta is the normalized
    # metadata block (no timestamps, so artifacts are byte-stable)
    doc = {**cfg, "_meta": {"command": command, "tool": "roomsense",
                            "version": __version__}}
    _write(outdir, "config.resolved.json",
           json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _load_frame(path: str) -> SensorFrame:
    return parse_frame(Path(path).read_bytes())


def _train_config(doc: dict, seed: int) -> TrainConfig:
    known = {"epochs", "batch_size", "lr_max", "lr_min", "schedule",
             "early_stopping", "patience", "min_delta", "shuffle", "seed"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown train config key {sorted(unknown)[0]!r}")
    return TrainConfig(**{**doc, "seed": doc.get("seed", seed)})


def _write_history(outdir: Path, history) -> None:
    _write(outdir, "history.json", history.to_json())
    _write(outdir, "history.csv", history.to_csv())
    _write(outdir, "timing.csv", history.timing_csv())


def _metrics_csv(metrics) -> str:
    lines = ["class,precision,recall,f1,support"]
    for name, p, r, f, s in zip(metrics.class_names, metrics.precision,
                                metrics.recall, metrics.f1, metrics.support):
        lines.append(f"{name},{p!r},{r!r},{f!r},{s}")
    return "\n".join(lines) + "\n"


def _confusion_csv(confusions) -> str:
    lines = ["class,tp,fp,fn,tn"]
    for c in confusions:
        lines.append(f"{c.class_name},{c.tp},{c.fp},{c.fn},{c.tn}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# command bodies
# ---------------------------------------------------------------------------

def cmd_synth(cfg: dict, outdir: Path) -> None:
    scenario = cfg["scenario"]
    if scenario == "bundled":
        sc = bundled_scenario()
    elif isinstance(scenario, dict):
        sc = ScenarioConfig(**scenario)
    else:
        raise ConfigError("scenario must be 'bundled' or a scenario object")
    if cfg.get("seed") is not None:
        sc = replace(sc, seed=int(cfg["seed"]))
    _write(outdir, "scenario.json", sc.to_json())
    devices = int(cfg["fleet_devices"])
    if devices > 0:
        fleet_dir = outdir / "fleet"
        fleet_dir.mkdir(exist_ok=True)
        for frame in generate_fleet(sc, devices, jitter=float(cfg["fleet_jitter"])):
            (fleet_dir / f"{frame.device_id}.csv").write_bytes(frame_to_csv(frame))
        print(f"wrote {devices} unlabelled fleet frames to {fleet_dir}")
    else:
        frame = generate_frame(sc)
        (outdir / "frame.csv").write_bytes(frame_to_csv(frame))
        print(f"wrote {len(frame)} labelled rows to {outdir / 'frame.csv'}")


def cmd_clean(cfg: dict, outdir: Path) -> None:
    frame = _load_frame(str(_require(cfg, "in")))
    before = missing_report(frame)
    frame = interpolate_missing(frame, cfg["edge_policy"])
    if cfg["binarize"] and "person" in frame.label_names:
        frame = binarize_person(frame)
    (outdir / "clean.csv").write_bytes(frame_to_csv(frame))
    summary = {"rows": len(frame), "edge_policy": cfg["edge_policy"],
               "missing_filled": {n: c for n, c in zip(before.channel_names, before.counts) if c}}
    _write(outdir, "summary.json", json.dumps(summary, sort_keys=True, indent=2) + "\n")
    print(f"cleaned frame: {len(frame)} rows -> {outdir / 'clean.csv'}")


def cmd_report_missing(cfg: dict, outdir: Path) -> None:
    report = missing_report(_load_frame(str(_require(cfg, "in"))))
    _write(outdir, "missing.json", report.to_json())
    total = sum(report.counts)
    print(f"{total} missing cells over {report.total_rows} rows -> {outdir / 'missing.json'}")


def cmd_correlate(cfg: dict, outdir: Path) -> None:
    frame = _load_frame(str(_require(cfg, "in")))
    variables = cfg["variables"] or [*frame.channel_names, *frame.label_names]
    matrix = pearson_matrix(frame, variables)
    _write(outdir, "correlation.json", matrix.to_json())
    print(f"{len(variables)}x{len(variables)} correlation matrix -> "
          f"{outdir / 'correlation.json'}")


def cmd_select_features(cfg: dict, outdir: Path) -> None:
    matrix = CorrelationMatrix.from_json(
        Path(str(_require(cfg, "correlation"))).read_text(encoding="utf-8"))
    features = select_features(matrix, float(cfg["pair_threshold"]),
                               tuple(cfg["classes"]))
    _write(outdir, "features.json", features.to_json())
    print(f"retained {len(features.names)} features: {', '.join(features.names)}")


def cmd_sample(cfg: dict, outdir: Path) -> None:
    frame = _load_frame(str(_require(cfg, "in")))
    if cfg["channels"]:
        channels = list(cfg["channels"])
    elif cfg["features_file"]:
        channels = list(FeatureSet.from_json(
            Path(cfg["features_file"]).read_text(encoding="utf-8")).names)
    else:
        channels = list(frame.channel_names)
    k = cfg["undersample_k"]
    windows = build_windows(frame, channels, int(cfg["length"]), int(cfg["stride"]),
                            cfg["position"], None if k is None else int(k),
                            int(cfg["max_gap_s"]))
    windows.save(outdir / "windows")
    print(f"{len(windows)} windows of shape ({len(channels)}, {cfg['length']}) -> "
          f"{outdir / 'windows.bin'}")


def cmd_split(cfg: dict, outdir: Path) -> None:
    if cfg["mode"] == "random":
        windows = WindowSet.load(str(_require(cfg, "in")))
        spec = SplitSpec(ratios=tuple(cfg["ratios"]), seed=int(cfg["seed"]))
        train, valid, test = split_random(windows, spec)
        train.save(outdir / "train")
        valid.save(outdir / "valid")
        test.save(outdir / "test")
        print(f"split {len(windows)} windows -> {len(train)}/{len(valid)}/{len(test)}")
    elif cfg["mode"] == "time":
        frame = _load_frame(str(_require(cfg, "in")))
        cut = _require(cfg, "cut_timestamp")
        train, test = split_time(frame, int(cut))
        (outdir / "train.csv").write_bytes(frame_to_csv(train))
        (outdir / "test.csv").write_bytes(frame_to_csv(test))
        print(f"time split at {cut}: {len(train)} train rows, {len(test)} test rows")
    else:
        raise ConfigError(f"split mode must be random|time, got {cfg['mode']!r}")


def _model_arch(cfg_model: dict, windows: WindowSet) -> dict:
    arch = dict(cfg_model or {})
    if "kind" not in arch:
        raise ConfigError("model config needs a 'kind' (fcn|lstm|inception|autoencoder)")
    arch.setdefault("in_channels", len(windows.channel_names))
    if arch["kind"] != "autoencoder":
        arch.setdefault("classes", windows.Y.shape[1])
        arch.setdefault("head_mode", "multi_label")
    if arch["kind"] == "fcn":
        arch.setdefault("filters", [128, 256, 128])
        arch.setdefault("kernels", [8, 5, 3])
    elif arch["kind"] == "lstm":
        arch.setdefault("hidden", 100)
        arch.setdefault("bidirectional", False)
        arch.setdefault("dropout", 0.0)
    elif arch["kind"] == "inception":
        arch.setdefault("filters", 32)
        arch.setdefault("bottleneck", 32)
        arch.setdefault("branch_kernels", [10, 20, 40])
        arch.setdefault("depth", 6)
        arch.setdefault("ensemble", 1)
    elif arch["kind"] == "autoencoder":
        arch.setdefault("encoder_hidden", [128, 64])
        arch.setdefault("latent", 10)
        arch.setdefault("window", windows.length)
    return arch


def cmd_train(cfg: dict, outdir: Path) -> None:
    train_w = WindowSet.load(str(_require(cfg, "train_windows")))
    valid_w = WindowSet.load(str(_require(cfg, "valid_windows")))
    seed = int(cfg["seed"])
    arch = _model_arch(_require(cfg, "model"), train_w)
    scaler = fit_scaler(cfg["scaler_kind"], train_w)
    train_s = transform(scaler, train_w)
    valid_s = transform(scaler, valid_w)
    model = build_model(arch, seed=seed)
    tcfg = _train_config(cfg["train"], seed)
    model, history = train_classifier(model, train_s, valid_s, tcfg)
    save_model(model, outdir / "model", step=len(history))
    _write(outdir, "scaler.json", scaler.to_json())
    _write_history(outdir, history)
    print(f"trained {arch['kind']} ({param_count(model)} parameters), "
          f"{len(history)} epochs, best valid loss "
          f"{min(history.valid_loss):.6f} -> {outdir / 'model.json'}")


def cmd_tune(cfg: dict, outdir: Path) -> None:
    train_w = WindowSet.load(str(_require(cfg, "train_windows")))
    valid_w = WindowSet.load(str(_require(cfg, "valid_windows")))
    seed = int(cfg["seed"])
    scaler = fit_scaler(cfg["scaler_kind"], train_w)
    train_s = transform(scaler, train_w)
    valid_s = transform(scaler, valid_w)
    kind = cfg["model_kind"]
    base = dict(cfg["model"] or {})
    base["kind"] = kind
    arch = _model_arch(base, train_w)
    if cfg["space"] is not None:
        space = SearchSpace({k: list(v) for k, v in cfg["space"].items()})
    elif kind == "fcn":
        space = fcn_search_space(blocks=len(arch["kernels"]))
    elif kind == "lstm":
        space = lstm_search_space()
    else:
        raise ConfigError(f"no default search space for model kind {kind!r}")

    def build(params: dict, trial_seed: int):
        trial_arch = dict(arch)
        if kind == "fcn":
            trial_arch["filters"] = [params[f"filters{i}"]
                                     for i in range(len(arch["kernels"]))]
        elif kind == "lstm":
            trial_arch["hidden"] = params["hidden"]
            trial_arch["dropout"] = params["dropout"]
        else:
            trial_arch.update(params)
        return build_model(trial_arch, seed=trial_seed)

    workers = int(os.environ.get("ROOMSENSE_THREADS", "1"))
    tcfg = _train_config(cfg["train"], seed)
    trials, best = random_search(space, build, train_s, valid_s, tcfg,
                                 int(cfg["trials"]), seed, max_workers=max(1, workers))
    _write(outdir, "trials.json", trials_to_json(trials, best))
    lines = ["trial,f1_mean," + ",".join(sorted(space.grids))]
    for t in trials:
        lines.append(f"{t.index},{t.f1_mean!r},"
                     + ",".join(str(t.params[k]) for k in sorted(space.grids)))
    _write(outdir, "trials.csv", "\n".join(lines) + "\n")
    _write(outdir, "best.json",
           json.dumps(best.to_doc(), sort_keys=True, indent=2) + "\n")
    print(f"{len(trials)} trials; best f1={best.f1_mean:.4f} with {best.params}")


def cmd_pretrain_ae(cfg: dict, outdir: Path) -> None:
    windows = WindowSet.load(str(_require(cfg, "windows")))
    seed = int(cfg["seed"])
    arch = _model_arch({**(cfg["model"] or {}), "kind": "autoencoder"}, windows)
    scaler = fit_scaler(cfg["scaler_kind"], windows)
    scaled = transform(scaler, windows)
    model = build_model(arch, seed=seed)
    tcfg = _train_config(cfg["train"], seed)
    model, history = train_autoencoder(model, scaled, tcfg)
    save_model(model, outdir / "model", step=len(history))
    _write(outdir, "scaler.json", scaler.to_json())
    _write_history(outdir, history)
    print(f"pretrained autoencoder (latent {arch['latent']}), final valid MSE "
          f"{history.valid_loss[-1]:.6f} -> {outdir / 'model.json'}")


def cmd_train_head(cfg: dict, outdir: Path) -> None:
    ckpt = load_checkpoint(str(_require(cfg, "encoder")))
    scaler = ScalerParams.from_json(
        Path(str(_require(cfg, "scaler"))).read_text(encoding="utf-8"))
    train_w = WindowSet.load(str(_require(cfg, "train_windows")))
    valid_w = WindowSet.load(str(_require(cfg, "valid_windows")))
    seed = int(cfg["seed"])
    head_doc = dict(cfg["head"] or {})
    head = HeadConfig(hidden=int(head_doc.get("hidden", 100)),
                      classes=int(head_doc.get("classes", train_w.Y.shape[1])),
                      head_mode=head_doc.get("head_mode", "multi_label"))
    model = build_encoder_classifier(ckpt, head, seed=seed)
    tcfg = _train_config(cfg["train"], seed)
    model, history = train_classifier(model, transform(scaler, train_w),
                                      transform(scaler, valid_w), tcfg)
    save_model(model, outdir / "model", step=len(history))
    _write_history(outdir, history)
    print(f"trained encoder classifier head ({param_count(model)} trainable "
          f"parameters) -> {outdir / 'model.json'}")


def cmd_eval(cfg: dict, outdir: Path) -> None:
    expect = cfg["expect_fingerprint"]
    model = model_from_checkpoint(str(_require(cfg, "checkpoint")),
                                  expect_fingerprint=expect)
    scaler = ScalerParams.from_json(
        Path(str(_require(cfg, "scaler"))).read_text(encoding="utf-8"))
    windows = transform(scaler, WindowSet.load(str(_require(cfg, "windows"))))
    metrics, confusions = evaluate(model, windows, float(cfg["threshold"]))
    _write(outdir, "metrics.json", metrics.to_json())
    _write(outdir, "metrics.csv", _metrics_csv(metrics))
    _write(outdir, "confusion.json", confusions_to_json(confusions))
    _write(outdir, "confusion.csv", _confusion_csv(confusions))
    per_class = ", ".join(f"{n}={f:.3f}" for n, f in zip(metrics.class_names, metrics.f1))
    print(f"accuracy {metrics.accuracy:.4f}; F1 {per_class}")


def cmd_predict(cfg: dict, outdir: Path) -> None:
    model = model_from_checkpoint(str(_require(cfg, "checkpoint")))
    scaler = ScalerParams.from_json(
        Path(str(_require(cfg, "scaler"))).read_text(encoding="utf-8"))
    frame = _load_frame(str(_require(cfg, "in")))
    track = predict_timeline(model, frame, scaler, int(cfg["length"]),
                             cfg["position"], float(cfg["threshold"]),
                             int(cfg["max_gap_s"]))
    _write(outdir, "track.json", track.to_json())
    _write(outdir, "track.csv", track.to_csv())
    covered = int((track.decisions[0] >= 0).sum()) if len(track.class_names) else 0
    print(f"predicted {covered}/{len(track)} timestamps -> {outdir / 'track.json'}")


def cmd_smooth(cfg: dict, outdir: Path) -> None:
    track = PredictionTrack.from_json(
        Path(str(_require(cfg, "track"))).read_text(encoding="utf-8"))
    smoothed = smooth(track, int(cfg["width"]))
    _write(outdir, "track.json", smoothed.to_json())
    _write(outdir, "track.csv", smoothed.to_csv())
    flipped = int((smoothed.decisions != track.decisions).sum())
    print(f"smoothing width {cfg['width']} flipped {flipped} decisions")


def cmd_pca(cfg: dict, outdir: Path) -> None:
    model = model_from_checkpoint(str(_require(cfg, "checkpoint")))
    scaler = ScalerParams.from_json(
        Path(str(_require(cfg, "scaler"))).read_text(encoding="utf-8"))
    windows = transform(scaler, WindowSet.load(str(_require(cfg, "windows"))))
    features = feature_matrix(model, windows.X)
    pca = pca_fit(features)
    points = pca_project(pca, features)
    labels = windows.Y[:, 0].astype(int) if windows.Y.shape[1] else None
    _write(outdir, "pca.json", pca.to_json())
    _write(outdir, "projection.csv", projection_csv(points, labels))
    print(f"projected {points.shape[0]} points; explained fractions "
          f"{pca.explained[0]:.3f}/{pca.explained[1]:.3f}")


COMMANDS = {
    "synth": cmd_synth,
    "clean": cmd_clean,
    "report-missing": cmd_report_missing,
    "correlate": cmd_correlate,
    "select-features": cmd_select_features,
    "sample": cmd_sample,
    "split": cmd_split,
    "train": cmd_train,
    "tune": cmd_tune,
    "pretrain-ae": cmd_pretrain_ae,
    "train-head": cmd_train_head,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "smooth": cmd_smooth,
    "pca": cmd_pca,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roomsense",
        description="Occupancy and open-window detection pipeline stages.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, keys in COMMAND_KEYS.items():
        keylist = ", ".join(f"{k} (default {v!r})" for k, v in keys.items())
        p = sub.add_parser(name, description=f"Config keys: {keylist}")
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (value parsed as JSON)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--dry-run", action="store_true",
                       help="validate the config and exit without writing")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args.command, args.config, args.set, args.seed, args.out)
        if args.dry_run:
            print(f"config ok: {json.dumps(cfg, sort_keys=True)}")
            return 0
        outdir = Path(cfg["out"])
        outdir.mkdir(parents=True, exist_ok=True)
        _write_resolved(outdir, args.command, cfg)
        COMMANDS[args.command](cfg, outdir)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3
    except (RoomsenseError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
