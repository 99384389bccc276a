"""Command-line entry point: ``steerbo <command> [options]``.

Every command accepts ``--config file.json``; explicit flags override values
from the file.  Exit codes: 0 ok, 2 configuration error, 3 data error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .acquisition import AcquisitionKind
from .bo import final_values, run_experiment, select_acquisition
from .data import (DataError, frames_to_samples, load_dataset, load_frames, save_dataset,
                   split_dataset, synth_dataset)
from .objectives import (ExternalCommand, SyntheticContinuous, SyntheticPaperSpace, ToyTrainer,
                         branin_space)
from .search_space import SearchSpace, build_paper_space

log = logging.getLogger("steerbo")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class NumericError(RuntimeError):
    pass


DEFAULTS = {
    "bo-run": {"objective": "synthetic-paper-space", "acq": "lcb,ei,mpi", "xi": None,
               "n_init": 5, "n_iter": 20, "runs": 10, "seed": None, "out": "bo_out",
               "parallel_runs": 1, "command": None, "timeout": 3600.0, "space": None,
               "data": None, "toy_frames": 130, "toy_shape": "8x16", "epochs": 15,
               "batch": 50, "patience": 5},
    "train": {"arch": "stlstm", "data": None, "out": "train_out", "epochs": 15, "batch": 50,
              "patience": 5, "lr": None, "seed": None, "hparams": None},
    "evaluate": {"weights": None, "arch": None, "data": None, "split": "test", "out": "eval_out",
                 "errors": "absolute"},
    "preprocess": {"images": None, "labels": None, "out": "dataset.bin", "start": 0, "stop": None,
                   "crop_top": 80, "crop_bottom": 26, "height": 66, "width": 200},
    "synth-data": {"frames": 130, "shape": "8x16", "seed": None, "out": "synth.bin",
                   "fractions": "0.64,0.16,0.20"},
    "gradcheck": {"seed": None, "tol": 1e-4},
}


def _default_seed() -> int:
    return int(os.environ.get("STEERBO_SEED", "0"))


def resolve(command: str, args: argparse.Namespace) -> dict:
    """Defaults < config file < explicit flags."""
    cfg = dict(DEFAULTS[command])
    if getattr(args, "config", None):
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        unknown = set(file_cfg) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if "seed" in cfg and cfg["seed"] is None:
        cfg["seed"] = _default_seed()
    return cfg


def _digest(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()[:16]


def write_manifest(out: Path, command: str, cfg: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"command": command, "config": cfg, "config_digest": _digest(cfg),
                "version": __version__}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def _shape(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in str(text).lower().split("x"))
    except ValueError:
        raise ConfigError(f"bad shape {text!r}; expected e.g. 8x16") from None


# --- bo-run --------------------------------------------------------------------

def build_objective(cfg: dict):
    kind = cfg["objective"]
    if kind == "synthetic-paper-space":
        return build_paper_space(), SyntheticPaperSpace()
    if kind == "synthetic-continuous":
        return branin_space(), SyntheticContinuous()
    space = build_paper_space()
    if cfg.get("space"):
        space = SearchSpace.from_json(Path(cfg["space"]).read_text())
    if kind == "external-command":
        if not cfg.get("command"):
            raise ConfigError("external-command objective needs --command")
        return space, ExternalCommand(cfg["command"], float(cfg["timeout"]))
    if kind == "toy-trainer":
        if cfg.get("data"):
            data = load_dataset(cfg["data"])
        else:
            data = split_dataset(synth_dataset(int(cfg["toy_frames"]), _shape(cfg["toy_shape"]),
                                               cfg["seed"]))
        return space, ToyTrainer(data, cfg["seed"], int(cfg["epochs"]), int(cfg["batch"]),
                                 int(cfg["patience"]))
    raise ConfigError(f"unknown objective {kind!r}")


def cmd_bo_run(cfg: dict) -> int:
    try:
        kinds = [AcquisitionKind(k.strip(), cfg["xi"]) for k in str(cfg["acq"]).split(",") if k.strip()]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if not kinds:
        raise ConfigError("no acquisition functions given")
    if cfg["n_init"] < 1 or cfg["n_iter"] < 0 or cfg["runs"] < 1:
        raise ConfigError("need n_init >= 1, n_iter >= 0, runs >= 1")
    space, objective = build_objective(cfg)
    out = Path(cfg["out"])
    write_manifest(out, "bo-run", cfg)
    summary = run_experiment(space, objective, kinds, cfg["n_init"], cfg["n_iter"], cfg["runs"],
                             cfg["seed"], log_dir=out / "runs", parallel=int(cfg["parallel_runs"]))
    summary.write_curves_csv(out / "best_seen.csv")
    summary.write_final_csv(out / "final_best_seen.csv")
    report = {"failed_runs": summary.failed, "acquisitions": {}}
    for k in kinds:
        vals = final_values([r for r in summary.logs[k.kind] if r.failure is None])
        best = min((r for r in summary.logs[k.kind] if r.failure is None),
                   key=lambda r: r.incumbent.best_value, default=None)
        report["acquisitions"][k.kind] = {
            "xi": k.xi, "runs": len(summary.logs[k.kind]),
            "final_mean": float(vals.mean()) if vals.size else None,
            "final_std": float(summary.std_curve[k.kind][-1]) if vals.size else None,
            "best_value": None if best is None else best.incumbent.best_value,
            "best_config": None if best is None else best.incumbent.best_config.as_dict()}
    if summary.complete or any(len(v) for v in summary.final_best.values()):
        report["selected_acquisition"] = select_acquisition(summary).kind
    (out / "summary.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"selected acquisition: {report.get('selected_acquisition')}")
    for k in kinds:
        a = report["acquisitions"][k.kind]
        print(f"{k.kind}: final best-seen mean={a['final_mean']} std={a['final_std']}")
    if summary.failed:
        for f in summary.failed:
            print(f"run failed: {f}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# --- train / evaluate ----------------------------------------------------------

def _stlstm_config(cfg: dict):
    from .models import STLSTMConfig

    hp = cfg.get("hparams")
    if hp is None:
        return STLSTMConfig(learning_rate=cfg["lr"] or 1e-3)
    if isinstance(hp, str):
        path = Path(hp)
        hp = json.loads(path.read_text()) if path.exists() else json.loads(hp)
    if "acquisitions" in hp:  # a whole bo-run summary.json: take the selected acquisition
        hp = hp["acquisitions"][hp["selected_acquisition"]]
    if "best_config" in hp:
        hp = hp["best_config"]
    stcfg = STLSTMConfig.from_configuration(hp)
    if cfg["lr"]:
        stcfg = STLSTMConfig(stcfg.convlstm_maps, stcfg.conv3d_maps, stcfg.fc_neurons,
                             stcfg.dropout_rate, cfg["lr"])
    return stcfg


def cmd_train(cfg: dict) -> int:
    from .models import build_network, save_weights, train

    if not cfg["data"]:
        raise ConfigError("train needs --data (a dataset built by preprocess or synth-data)")
    split = load_dataset(cfg["data"])
    if not split.train or not split.validation:
        raise DataError("dataset needs non-empty train and validation parts")
    shape = split.train[0].tensor.shape
    try:
        stcfg = _stlstm_config(cfg)
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad hyperparameters: {exc}") from exc
    lr = stcfg.learning_rate if cfg["arch"] == "stlstm" else (cfg["lr"] or 1e-3)
    try:
        net = build_network(cfg["arch"], shape, cfg["seed"], stcfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    report = train(net, split, lr, int(cfg["epochs"]), int(cfg["batch"]), int(cfg["patience"]),
                   cfg["seed"])
    out = Path(cfg["out"])
    write_manifest(out, "train", cfg)
    save_weights(net, out / "weights.bin")
    (out / "train_report.json").write_text(report.to_json() + "\n")
    print(f"{cfg['arch']}: epochs_run={report.epochs_run} early_stopped={report.early_stopped} "
          f"best_val_mse={report.best_val_mse:.6g}")
    if report.diverged:
        print("training diverged (non-finite loss)", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_evaluate(cfg: dict) -> int:
    from .metrics import model_comparison_report
    from .models import network_from_weights, predict_angles, read_weights

    weights = cfg["weights"]
    if not weights:
        raise ConfigError("evaluate needs --weights [name=]path ...")
    if isinstance(weights, str):
        weights = [weights]
    split = load_dataset(cfg["data"]) if cfg["data"] else None
    if split is None:
        raise ConfigError("evaluate needs --data")
    part = {"train": split.train, "validation": split.validation, "test": split.test}.get(cfg["split"])
    if part is None:
        raise ConfigError(f"unknown split {cfg['split']!r}")
    if not part:
        raise DataError(f"the {cfg['split']} split is empty")
    y = np.array([s.label for s in part])
    archs = cfg["arch"].split(",") if cfg["arch"] else None
    preds = {}
    for i, item in enumerate(weights):
        name, _, path = item.rpartition("=")
        try:
            manifest, _ = read_weights(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read weights {path}: {exc}") from exc
        arch = manifest["meta"]["arch"]
        if archs is not None and archs[min(i, len(archs) - 1)] != arch:
            raise ConfigError(f"{path} holds {arch} weights, not {archs[min(i, len(archs) - 1)]}")
        try:
            net = network_from_weights(path)
            preds[name or f"{arch}_{i}"] = predict_angles(net, part)
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    report = model_comparison_report(preds, y, errors=cfg["errors"])
    out = Path(cfg["out"])
    write_manifest(out, "evaluate", cfg)
    report.write_summary_csv(out / "metrics.csv")
    report.write_pvalue_csv(out / "pvalues.csv")
    for name in report.models:
        s = report.summaries[name]
        print(f"{name}: mse={s.mse:.6g} mae={s.mae:.6g} st_ae={s.st_ae:.6g} "
              f"bias_sq={s.bias_sq:.6g} variance={s.variance:.6g}")
    return EXIT_OK


# --- data ----------------------------------------------------------------------

def cmd_preprocess(cfg: dict) -> int:
    if not cfg["images"] or not cfg["labels"]:
        raise ConfigError("preprocess needs --images and --labels")
    frames = load_frames(cfg["images"], cfg["labels"], int(cfg["start"]),
                         None if cfg["stop"] is None else int(cfg["stop"]))
    samples = frames_to_samples(frames, int(cfg["crop_top"]), int(cfg["crop_bottom"]),
                                (int(cfg["height"]), int(cfg["width"])))
    split = split_dataset(samples)
    save_dataset(cfg["out"], split, {"images": str(cfg["images"]), "labels": str(cfg["labels"]),
                                     "start": cfg["start"], "stop": cfg["stop"]})
    print(f"{len(frames)} frames -> {len(samples)} samples "
          f"({len(split.train)}/{len(split.validation)}/{len(split.test)}) -> {cfg['out']}")
    return EXIT_OK


def cmd_synth_data(cfg: dict) -> int:
    try:
        fractions = tuple(float(v) for v in str(cfg["fractions"]).split(","))
    except ValueError:
        raise ConfigError(f"bad fractions {cfg['fractions']!r}") from None
    samples = synth_dataset(int(cfg["frames"]), _shape(cfg["shape"]), cfg["seed"])
    split = split_dataset(samples, fractions)
    save_dataset(cfg["out"], split, {"synthetic": True, "frames": cfg["frames"], "seed": cfg["seed"]})
    print(f"{len(samples)} samples ({len(split.train)}/{len(split.validation)}/{len(split.test)}) "
          f"-> {cfg['out']}")
    return EXIT_OK


def cmd_gradcheck(cfg: dict) -> int:
    from .nn.gradsuite import run_suite

    results = run_suite(seed=cfg["seed"])
    ok = True
    for name, err in results.items():
        passed = err < cfg["tol"]
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name}: max rel err {err:.3e}")
    return EXIT_OK if ok else EXIT_NUMERIC


COMMANDS = {"bo-run": cmd_bo_run, "train": cmd_train, "evaluate": cmd_evaluate,
            "preprocess": cmd_preprocess, "synth-data": cmd_synth_data, "gradcheck": cmd_gradcheck}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="steerbo", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="subcommand", required=True)

    def cmd(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON file with option values")
        return sp

    s = cmd("bo-run", "run the multi-seed BO experiment")
    s.add_argument("--objective", choices=["synthetic-paper-space", "synthetic-continuous",
                                           "external-command", "toy-trainer"])
    s.add_argument("--acq", help="comma-separated subset of lcb,ei,mpi")
    s.add_argument("--xi", type=float)
    s.add_argument("--n-init", dest="n_init", type=int)
    s.add_argument("--n-iter", dest="n_iter", type=int)
    s.add_argument("--runs", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.add_argument("--parallel-runs", dest="parallel_runs", type=int)
    s.add_argument("--command", help="external objective command line")
    s.add_argument("--timeout", type=float)
    s.add_argument("--space", help="search-space JSON (external/toy objectives)")
    s.add_argument("--data", help="cached dataset for the toy trainer")
    s.add_argument("--toy-frames", dest="toy_frames", type=int)
    s.add_argument("--toy-shape", dest="toy_shape")
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch", type=int)
    s.add_argument("--patience", type=int)

    s = cmd("train", "train stlstm, pilotnet or jnet on a cached dataset")
    s.add_argument("--arch", choices=["stlstm", "pilotnet", "jnet"])
    s.add_argument("--data")
    s.add_argument("--out")
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch", type=int)
    s.add_argument("--patience", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--hparams", help="ST-LSTM hyperparameters: JSON text, a JSON file, "
                                     "or a bo-run summary entry")

    s = cmd("evaluate", "score trained weights and compare models")
    s.add_argument("--weights", nargs="+", help="[name=]path to weights.bin (one or more)")
    s.add_argument("--arch", help="expected architecture(s), comma-separated")
    s.add_argument("--data")
    s.add_argument("--split", choices=["train", "validation", "test"])
    s.add_argument("--out")
    s.add_argument("--errors", choices=["absolute", "signed"])

    s = cmd("preprocess", "crop/resize/stack raw frames into a cached dataset")
    s.add_argument("--images")
    s.add_argument("--labels")
    s.add_argument("--out")
    s.add_argument("--start", type=int)
    s.add_argument("--stop", type=int)
    s.add_argument("--crop-top", dest="crop_top", type=int)
    s.add_argument("--crop-bottom", dest="crop_bottom", type=int)
    s.add_argument("--height", type=int)
    s.add_argument("--width", type=int)

    s = cmd("synth-data", "generate the synthetic moving-bar dataset")
    s.add_argument("--frames", type=int)
    s.add_argument("--shape")
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.add_argument("--fractions")

    s = cmd("gradcheck", "verify every analytic gradient against finite differences")
    s.add_argument("--seed", type=int)
    s.add_argument("--tol", type=float)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args.subcommand, args)
        return COMMANDS[args.subcommand](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FloatingPointError, NumericError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
