"""Command-line entry point: ``lbccn <command> [options]``.

Option precedence is command-line flag > ``--config`` JSON file > built-in
default.  The resolved configuration is logged before each command runs.
The config file may hold top-level keys, per-command sections
(``{"train": {...}}``), or both; sections win over top-level keys.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ._errors import (CheckpointError, ConfigError, DatasetError, HrirManifestError,
                      InputError, LbccnError, NumericError, ShapeError, WavError)

log = logging.getLogger("lbccn")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_CONFIG = 4
EXIT_NUMERIC = 5

_TRAIN_DEFAULTS = {"k": 0.5, "q": 40, "variant": "ratfs", "epochs": 20, "seed": 0, "lr": 1e-4,
                   "batch_size": 4, "max_steps": None, "bias_lr_scale": 1.0,
                   "dtype": "complex64"}

DEFAULTS = {
    "synth": {"out": None, "count": 200, "seed": 0, "snr_min": -10.0, "snr_max": 10.0,
              "azimuth": 45.0, "elevation": 0.0, "seconds": 2.0, "hrir_manifest": None,
              "speech_dir": None, "noise_dir": None, "workers": 1},
    "train": {"data": None, "out": "lbccn.ckpt", **_TRAIN_DEFAULTS},
    "enhance": {"checkpoint": None, "input": None, "output": None, "streaming": False},
    "eval": {"data": None, "checkpoint": None, "split": "test", "out": None, "workers": 1,
             "stoi": True},
    "bench": {"checkpoint": None, "q": 40, "variant": "ratfs", "seconds": 2.0,
              "repetitions": 5, "json": None},
    "sweep-k": {"data": None, "grid": [0.0, 0.25, 0.5, 0.75, 1.0], "split": "test",
                "stoi": True, "out": None, **{k: v for k, v in _TRAIN_DEFAULTS.items() if k != "k"}},
    "ablate-q": {"data": None, "grid": [30, 40, 64, 129], "split": "test", "stoi": True,
                 "out": None, **{k: v for k, v in _TRAIN_DEFAULTS.items() if k != "q"}},
}


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def _train_flags(p, skip=()):
    if "k" not in skip:
        p.add_argument("--k", type=float, help="signal/noise loss balance in [0, 1] (0.5)")
    if "q" not in skip:
        p.add_argument("--q", type=int, help="number of low-frequency bins enhanced (40)")
    p.add_argument("--variant", choices=["ratfs", "masks", "mask-ratf"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--bias-lr-scale", type=float,
                   help="learning-rate multiplier for the heads' per-frequency offsets")
    p.add_argument("--dtype", choices=["complex64", "complex128"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lbccn", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file with option values")
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a binaural dataset")
    p.add_argument("--out", help="output directory (default $LBCCN_DATA_DIR or ./data)")
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--snr-min", type=float)
    p.add_argument("--snr-max", type=float)
    p.add_argument("--azimuth", type=float)
    p.add_argument("--elevation", type=float)
    p.add_argument("--seconds", type=float)
    p.add_argument("--hrir-manifest", help="HRIR manifest; spherical-head model if omitted")
    p.add_argument("--speech-dir")
    p.add_argument("--noise-dir")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("train", help="train a model on a dataset manifest")
    p.add_argument("--data", help="dataset directory or manifest.json")
    p.add_argument("--out", help="checkpoint path")
    _train_flags(p)

    p = sub.add_parser("enhance", help="enhance a stereo wav file")
    p.add_argument("--checkpoint")
    p.add_argument("input", nargs="?")
    p.add_argument("output", nargs="?")
    p.add_argument("--streaming", action="store_true", default=None)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset split")
    p.add_argument("--data")
    p.add_argument("--checkpoint", help="omit to score the unprocessed noisy input")
    p.add_argument("--split", choices=["train", "test", "validation"])
    p.add_argument("--out", help="write one JSON record per utterance here")
    p.add_argument("--workers", type=int)
    p.add_argument("--no-stoi", dest="stoi", action="store_false", default=None)

    p = sub.add_parser("bench", help="parameter, MAC and real-time-factor report")
    p.add_argument("--checkpoint")
    p.add_argument("--q", type=int)
    p.add_argument("--variant", choices=["ratfs", "masks", "mask-ratf"])
    p.add_argument("--seconds", type=float)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--json", help="also write the report as JSON here")

    for name, grid_type, skip in (("sweep-k", _floats, ("k",)), ("ablate-q", _ints, ("q",))):
        p = sub.add_parser(name, help=f"train and evaluate across a {name[-1]} grid")
        p.add_argument("--data")
        p.add_argument("--grid", type=grid_type, help="comma-separated values")
        p.add_argument("--split", choices=["train", "test", "validation"])
        p.add_argument("--out", help="write the table as JSON here")
        p.add_argument("--no-stoi", dest="stoi", action="store_false", default=None)
        _train_flags(p, skip)
    return parser


def resolve(command: str, args: argparse.Namespace, file_cfg: dict | None) -> dict:
    cfg = dict(DEFAULTS[command])
    if file_cfg:
        unknown_top = {k for k, v in file_cfg.items() if not isinstance(v, dict)}
        cfg.update({k: file_cfg[k] for k in unknown_top if k in cfg})
        section = file_cfg.get(command, {})
        bad = set(section) - set(cfg)
        if bad:
            raise ConfigError(f"unknown {command} option(s) in config file: {sorted(bad)}")
        cfg.update(section)
    for key, value in vars(args).items():
        if key in cfg and value is not None:
            cfg[key] = value
    return cfg


def _need(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) in (None, "")]
    if missing:
        raise InputError("missing required option(s): " + ", ".join("--" + k.replace("_", "-")
                                                                   for k in missing))


def _data_path(cfg):
    from .dataset import default_data_dir
    return Path(cfg["data"]) if cfg.get("data") else default_data_dir()


# ---------------------------------------------------------------- commands

def cmd_synth(cfg) -> int:
    from .dataset import DatasetSpec, default_data_dir, generate_dataset
    from .spatial import default_directions, load_hrir_catalog, synth_spherical_hrir

    out = Path(cfg["out"]) if cfg["out"] else default_data_dir()
    catalog = (load_hrir_catalog(cfg["hrir_manifest"]) if cfg["hrir_manifest"]
               else synth_spherical_hrir(default_directions()))
    spec = DatasetSpec(cfg["count"], cfg["seconds"], (cfg["snr_min"], cfg["snr_max"]),
                       cfg["azimuth"], cfg["elevation"], cfg["seed"],
                       speech_dir=cfg["speech_dir"], noise_dir=cfg["noise_dir"])
    manifest = generate_dataset(out, spec, catalog, workers=cfg["workers"])
    counts = {s: len(manifest.split(s)) for s in ("train", "test", "validation")}
    print(f"wrote {len(manifest.samples)} samples to {out} {counts}")
    return EXIT_OK


def _model_config(cfg):
    from .model import LbccnConfig
    return LbccnConfig(q=cfg["q"], predictor_variant=cfg["variant"])


def _train_config(cfg):
    from .training import TrainConfig
    return TrainConfig(k=cfg["k"], lr=cfg["lr"], epochs=cfg["epochs"],
                       batch_size=cfg["batch_size"], seed=cfg["seed"],
                       max_steps=cfg["max_steps"], freq_bias_lr_scale=cfg["bias_lr_scale"])


def _train_model(cfg, data):
    from .model import LbccnModel
    from .training import train

    model = LbccnModel(_model_config(cfg), seed=cfg["seed"], dtype=np.dtype(cfg["dtype"]))
    result = train(model, data, _train_config(cfg))
    return model, result


def cmd_train(cfg) -> int:
    from .checkpoint import save_checkpoint
    from .dataset import load_manifest, load_split

    manifest = load_manifest(_data_path(cfg))
    data = load_split(manifest, "train")
    model, result = _train_model(cfg, data)
    meta = {"epoch_losses": result.epoch_losses, "steps": result.steps,
            "train_config": _train_config(cfg).to_dict()}
    save_checkpoint(model, cfg["out"], result.optimizer, meta)
    for i, loss in enumerate(result.epoch_losses, 1):
        print(f"epoch {i:3d}  loss {loss:.4f}")
    print(f"saved {cfg['out']} after {result.steps} steps ({result.seconds:.1f} s)")
    return EXIT_OK


def cmd_enhance(cfg) -> int:
    from .checkpoint import load_checkpoint
    from .streaming import stream_enhance
    from .wavio import read_wav, write_wav, WavFile

    _need(cfg, "checkpoint", "input", "output")
    model = load_checkpoint(cfg["checkpoint"])
    wav = read_wav(cfg["input"])
    if wav.channels != 2:
        raise InputError(f"{cfg['input']}: expected a stereo file")
    from .dsp import BinauralWaveform
    noisy = BinauralWaveform.from_array(np.asarray(wav.samples, np.float64).T, wav.sample_rate)
    out = stream_enhance(model, noisy) if cfg["streaming"] else model.enhance(noisy)
    write_wav(cfg["output"], WavFile(out.as_array().T, wav.sample_rate, wav.bit_depth))
    print(f"wrote {cfg['output']} ({len(out)} samples, "
          f"{'streaming' if cfg['streaming'] else 'offline'})")
    return EXIT_OK


def _eval_one(args):
    from .dsp import BinauralWaveform
    from .metrics import evaluate

    triple, model, with_stoi = args
    est = (model.enhance(BinauralWaveform.from_array(triple.noisy)).as_array()
           if model is not None else triple.noisy)
    return evaluate(triple.clean, triple.noisy, est, triple.record.id, with_stoi=with_stoi)


def evaluate_split(model, manifest, split="test", workers=1, with_stoi=True):
    from .dataset import load_split

    jobs = [(t, model, with_stoi) for t in load_split(manifest, split)]
    if not jobs:
        raise DatasetError(f"split {split!r} is empty")
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_eval_one, jobs))
    return [_eval_one(j) for j in jobs]


def cmd_eval(cfg) -> int:
    from .checkpoint import load_checkpoint
    from .dataset import load_manifest
    from .metrics import format_table, summarize

    manifest = load_manifest(_data_path(cfg))
    model = load_checkpoint(cfg["checkpoint"]) if cfg["checkpoint"] else None
    reports = evaluate_split(model, manifest, cfg["split"], cfg["workers"], cfg["stoi"])
    if cfg["out"]:
        Path(cfg["out"]).write_text("".join(r.to_json() + "\n" for r in reports))
    print(format_table(summarize(reports)))
    return EXIT_OK


def cmd_bench(cfg) -> int:
    from .bench import complexity_report
    from .checkpoint import load_checkpoint
    from .model import LbccnConfig, LbccnModel

    if cfg["checkpoint"]:
        model = load_checkpoint(cfg["checkpoint"])
    else:
        model = LbccnModel(LbccnConfig(q=cfg["q"], predictor_variant=cfg["variant"]))
    report = complexity_report(model, cfg["seconds"], cfg["repetitions"])
    print("\n".join(report.lines()))
    for key, basis in report.bases.items():
        print(f"basis[{key}]: {basis}")
    if cfg["json"]:
        Path(cfg["json"]).write_text(report.to_json())
    return EXIT_OK


def _grid_run(cfg, key) -> list[dict]:
    from .dataset import load_manifest, load_split
    from .metrics import summarize

    manifest = load_manifest(_data_path(cfg))
    data = load_split(manifest, "train")
    rows = []
    for value in cfg["grid"]:
        run = dict(cfg, **{key: value})
        model, result = _train_model(run, data)
        summary = summarize(evaluate_split(model, manifest, cfg["split"], 1, cfg["stoi"]))
        rows.append({key: value, "final_loss": result.epoch_losses[-1], **summary})
        log.info("%s=%s done", key, value)
    return rows


def _print_rows(rows, key):
    cols = [key, "delta.snr_db_left", "delta.snr_db_right", "delta.stoi_left",
            "delta.stoi_right", "enhanced.ild_error", "enhanced.ipd_error"]
    print("  ".join(c.rjust(12) for c in cols))
    for r in rows:
        print("  ".join(f"{r.get(c, float('nan')):12.4f}" for c in cols))


def cmd_sweep(cfg, key) -> int:
    rows = _grid_run(cfg, key)
    _print_rows(rows, key)
    if cfg["out"]:
        Path(cfg["out"]).write_text(json.dumps(rows, indent=1, sort_keys=True))
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "enhance": cmd_enhance, "eval": cmd_eval,
            "bench": cmd_bench, "sweep-k": lambda c: cmd_sweep(c, "k"),
            "ablate-q": lambda c: cmd_sweep(c, "q")}


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError,)):
        return EXIT_CONFIG
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    if isinstance(exc, (InputError, ShapeError, WavError, DatasetError, HrirManifestError,
                        CheckpointError, FileNotFoundError, IsADirectoryError)):
        return EXIT_INPUT
    return EXIT_FAILURE


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        file_cfg = None
        if args.config:
            try:
                file_cfg = json.loads(Path(args.config).read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"cannot parse config file {args.config}: {exc}") from exc
            if not isinstance(file_cfg, dict):
                raise ConfigError("config file must hold a JSON object")
        cfg = resolve(args.command, args, file_cfg)
        log.info("resolved config for %s: %s", args.command, json.dumps(cfg, sort_keys=True))
        return COMMANDS[args.command](cfg)
    except (LbccnError, OSError) as exc:
        code = exit_code_for(exc)
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
