"""``qdtune`` command-line entry point.

Every command writes a ``run.json`` manifest next to its outputs holding the
resolved arguments and the package version; ``--manifest run.json`` replays a
run. Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__

logger = logging.getLogger("qdtune")

RUN_MANIFEST = "run.json"
INCOMPLETE = "INCOMPLETE"
# arguments that may accompany --manifest without conflicting with it
_REPLAY_FREE = {"command", "manifest", "out", "report", "workers", "verbose", "log"}


class UsageError(Exception):
    pass


def version_string() -> str:
    """``git describe``-style version; falls back to the package version outside a checkout."""
    try:
        out = subprocess.run(["git", "describe", "--tags", "--always", "--dirty"], cwd=Path(__file__).parent,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def default_workers() -> int:
    env = os.environ.get("QDTUNE_WORKERS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"QDTUNE_WORKERS must be an integer, got {env!r}") from None
        if n < 1:
            raise UsageError("QDTUNE_WORKERS must be >= 1")
        return n
    return os.cpu_count() or 1


def _write_json(path, obj):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _read_json(path):
    return json.loads(Path(path).read_text())


def _run_manifest(out_dir, args: dict, extra=None, name=RUN_MANIFEST):
    payload = {"command": args["command"], "args": {k: v for k, v in args.items() if k not in ("manifest",)},
               "version": version_string()}
    # the manifest lives in the output directory, and worker count never changes results
    payload["args"].pop("workers", None)
    payload["args"].pop("out", None)
    if extra:
        payload.update(extra)
    _write_json(Path(out_dir) / name, payload)


def _seed(master: int, *path: int) -> int:
    return int(np.random.SeedSequence([int(master), *path]).generate_state(1)[0])


# ------------------------------------------------------------------ models

def _checkpoint_dirs(paths) -> list[Path]:
    found = []
    for p in map(Path, paths):
        if (p / "params.bin").exists():
            found.append(p)
        elif p.is_dir():
            subs = sorted(d for d in p.iterdir() if (d / "params.bin").exists())
            if not subs:
                raise FileNotFoundError(f"no checkpoints under {p}")
            found.extend(subs)
        else:
            raise FileNotFoundError(f"{p} is not a checkpoint directory")
    return found


def load_models(paths, cls):
    return [cls.load(p) for p in _checkpoint_dirs(paths)]


def _fit_ensemble(cls, data_dir, out_dir, n_models, seed, **params) -> list:
    from .dataset import load_dataset

    a = load_dataset(data_dir).arrays()
    y = a["state_label"] if cls.__name__ == "StateEstimator" else a["quality"]
    models = []
    for i in range(n_models):
        m = cls(random_state=_seed(seed, i), **params).fit(a["gradient"], y)
        m.save(Path(out_dir) / f"model_{i:02d}")
        models.append(m)
        logger.info("trained %s %d/%d", cls.__name__, i + 1, n_models)
    return models


def _estimator_params(args) -> dict:
    params = {"epochs": args["epochs"], "batch_size": args["batch_size"], "patience": args["patience"]}
    if args.get("arch"):
        params["architecture"] = args["arch"]
    if args.get("clip"):
        params["clip"] = True
    return params


# ---------------------------------------------------------------- commands

def cmd_generate(args):
    from .dataset import GenerationConfig, generate_dataset

    config = GenerationConfig.from_dict(_read_json(args["config"])) if args["config"] else GenerationConfig()
    if args["noise_config"]:
        from .noise import load_noise_config

        config.base_noise = load_noise_config(args["noise_config"]).to_dict()
    if args["thresholds"]:
        config.thresholds = _read_json(args["thresholds"])
    generate_dataset(args["kind"], args["count"], args["seed"], args["out"], config, workers=args["workers"])
    _run_manifest(args["out"], args, {"resolved_config": config.to_dict()})


def cmd_train_dse(args):
    from .estimators import StateEstimator

    _fit_ensemble(StateEstimator, args["data"], args["out"], args["models"], args["seed"], **_estimator_params(args))
    _run_manifest(args["out"], args)


def cmd_train_dqc(args):
    from .estimators import QualityController

    _fit_ensemble(QualityController, args["data"], args["out"], args["models"], args["seed"],
                  **_estimator_params(args))
    _run_manifest(args["out"], args)


def cmd_evaluate(args):
    from .dataset import load_dataset
    from .dse import evaluate
    from .estimators import StateEstimator

    a = load_dataset(args["data"]).arrays()
    report = evaluate(load_models(args["checkpoints"], StateEstimator), a["gradient"], a["state_label"]).summary()
    path = Path(args["report"])
    _write_json(path, report)
    _run_manifest(path.parent, args, name=path.stem + ".run.json")
    print(json.dumps({"accuracy_mean": report["accuracy_mean"], "accuracy": report["accuracy_percent"]}))


def cmd_calibrate_dqc(args):
    from .dataset import load_dataset
    from .dqc import build_mae_curves, calibrate_thresholds, curves_hash
    from .estimators import StateEstimator

    ds = load_dataset(args["data"])
    a = ds.arrays()
    curves = build_mae_curves(load_models(args["checkpoints"], StateEstimator), a["gradient"], a["state_label"],
                              a["noise_scale"], bins=args["bins"])
    th = calibrate_thresholds(curves, source=ds.manifest["config_hash"])
    out = Path(args["out"])
    th.save(out / "thresholds.json")
    _write_json(out / "curves.json", {"curves": {k: v.to_dict() for k, v in curves.items()},
                                      "spearman": {k: v.spearman() for k, v in curves.items()},
                                      "curves_hash": curves_hash(curves)})
    _run_manifest(out, args)


def cmd_validate_dqc(args):
    from .dataset import load_dataset
    from .dqc import validate_quality_correlation
    from .estimators import QualityController, StateEstimator

    a = load_dataset(args["data"]).arrays()
    dqc = load_models(args["dqc"], QualityController)
    dse = load_models(args["dse"], StateEstimator)
    report = validate_quality_correlation(dqc, dse, a["gradient"], a["state_label"])
    _write_json(Path(args["out"]) / "quality_validation.json", report.to_dict())
    _run_manifest(args["out"], args)


def cmd_tune(args):
    from .autotune import SimulatedDevice, TunerState, run_tuning
    from .estimators import QualityController, StateEstimator
    from .simcore import DeviceParams

    device = DeviceParams.from_dict(_read_json(args["device_config"])) if args["device_config"] else DeviceParams()
    env = SimulatedDevice(device, noise_scale=args["noise_scale"], seed=args["seed"])
    state = TunerState(voltages=tuple(args["start"]), budget=args["budget"], noise_scale=args["noise_scale"],
                       target=args["target"])
    state = run_tuning(state, load_models(args["dqc"], QualityController), load_models(args["dse"], StateEstimator),
                       env, max_steps=args["max_steps"])
    log = Path(args["log"])
    log.parent.mkdir(parents=True, exist_ok=True)
    with open(log, "w") as fh:
        for entry in state.log:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    print(json.dumps({"reason": state.reason, "success": state.success, "voltages": list(state.voltages),
                      "steps": len(state.log)}))
    return 0


def render_maps(scan_spec: dict, dse, dqc, out_dir, mixed_threshold: float = 0.7) -> dict:
    from .autotune import LargeScanSpec, evaluate_map, iou
    from .render import to_gray, write_pgm, write_ppm, write_tensor

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scan = LargeScanSpec.from_dict(scan_spec).simulate()
    result = evaluate_map(scan, dse, dqc)
    m = result.margin
    write_tensor(out / "sensor", scan.sensor)
    write_tensor(out / "state_probs", result.state_probs)
    write_tensor(out / "quality_probs", result.quality_probs)
    write_pgm(out / "sensor.pgm", to_gray(scan.sensor))
    write_ppm(out / "states.ppm", result.rendered_states())
    write_pgm(out / "quality.pgm", (255 - 127.5 * result.quality).round().astype(np.uint8))
    mixed = result.mixed_mask(mixed_threshold)
    moderate = result.quality == 1
    write_pgm(out / "mixed.pgm", (255 * mixed).astype(np.uint8))
    summary = {
        "scan_shape": list(scan.sensor.shape),
        "map_shape": list(result.quality.shape),
        "margin_pixels": m,
        "quality_fractions": np.bincount(result.quality.ravel(), minlength=3).tolist(),
        "mixed_threshold": mixed_threshold,
        "mixed_fraction": float(mixed.mean()),
        "iou_moderate_mixed": iou(moderate, mixed),
    }
    _write_json(out / "maps.json", summary)
    return summary


def cmd_render_maps(args):
    from .estimators import QualityController, StateEstimator

    summary = render_maps(_read_json(args["scan"]), load_models(args["dse"], StateEstimator),
                          load_models(args["dqc"], QualityController), args["out"], args["mixed_threshold"])
    _run_manifest(args["out"], args)
    print(json.dumps(summary))


# --------------------------------------------------------------- reproduce

SCALES = {
    "smoke": {"dse_train": 200, "test": 100, "sweep": 600, "dqc_train": 300, "dqc_test": 300, "models": 1,
              "dqc_models": 1, "epochs": 2, "dqc_epochs": 1, "map_pixels": 64, "bins": 14},
    "desk": {"dse_train": 2000, "test": 500, "sweep": 8000, "dqc_train": 3000, "dqc_test": 2000, "models": 5,
             "dqc_models": 1, "epochs": 30, "dqc_epochs": 10, "map_pixels": 90, "bins": 28},
    "full": {"dse_train": 16000, "test": 2000, "sweep": 115000, "dqc_train": 115000, "dqc_test": 10000,
              "models": 20, "dqc_models": 20, "epochs": 30, "dqc_epochs": 30, "map_pixels": 120, "bins": 28},
}

# a device whose 180 mV map covers ND, LD, RD and DD regions
MAP_DEVICE = {
    "charging_energy_left": 2.0, "charging_energy_right": 2.2, "mutual_charging_energy": 0.4,
    "lever_arm_matrix": [[0.10, 0.02], [0.025, 0.09]], "cross_talk": 0.0,
    "sensor_coupling": [-1.0, -0.8], "sensor_gate_coupling": [0.004, 0.003],
    "offset_left": -2.0, "offset_right": -2.0, "merge_ratio_threshold": 0.7,
}


def criteria_report(evaluation: dict, curves: dict, quality: dict, maps: dict, dqc_accuracy: float) -> dict:
    """Pass/fail summary of the data-driven acceptance checks of one reproduce run."""
    gap = evaluation["combined"]["accuracy_mean"] - evaluation["noiseless"]["accuracy_mean"]
    rho = {s: curves["spearman"][s] for s in ("LD", "CD", "RD", "DD")}
    counts = quality["counts"]
    kept = all(counts[c] >= 50 for c in ("high", "moderate", "low"))
    return {
        "noise_augmentation": {"gap": gap, "pass": bool(gap >= 0.20)},
        "mae_monotonic": {"spearman": rho, "pass": bool(all(r >= 0.9 for r in rho.values()))},
        "quality_ordering": {"counts": counts, "accuracy": {k: v["mean"] for k, v in quality["accuracy"].items()},
                             "mae": {k: v["mean"] for k, v in quality["mae"].items()},
                             "pass": bool(kept and quality["accuracy_decreasing"] and quality["mae_increasing"])},
        "dqc_accuracy": {"accuracy": dqc_accuracy, "pass": bool(dqc_accuracy >= 0.8)},
        "map_overlap": {"iou": maps["iou_moderate_mixed"], "map_shape": maps["map_shape"],
                        "scan_shape": maps["scan_shape"],
                        "pass": bool(maps["iou_moderate_mixed"] >= 0.5
                                     and all(s - 2 * maps["margin_pixels"] == t
                                             for s, t in zip(maps["scan_shape"], maps["map_shape"])))},
    }


def cmd_reproduce(args):
    """Full desk-scale chain: generate, train, evaluate, calibrate, train DQC, validate, map."""
    from .dataset import GenerationConfig, generate_dataset, load_dataset
    from .dqc import build_mae_curves, calibrate_thresholds, curves_hash, validate_quality_correlation
    from .dse import evaluate
    from .estimators import QualityController, StateEstimator

    scale = SCALES[args["scale"]]
    seed, workers = args["seed"], args["workers"]
    out = Path(args["out"])
    data, models = out / "data", out / "models"
    config = GenerationConfig()
    t0 = time.perf_counter()

    def gen(kind, count, tag, cfg=config):
        return generate_dataset(kind, count, _seed(seed, tag), data / f"{kind}-{tag}", cfg, workers=workers)

    train_sets = {"noiseless": gen("noiseless", scale["dse_train"], 1), "combined": gen("combined", scale["dse_train"], 2)}
    test = load_dataset(gen("combined", scale["test"], 3)).arrays()
    sweep_ds = load_dataset(gen("threshold-sweep", scale["sweep"], 4))
    logger.info("datasets ready after %.0f s", time.perf_counter() - t0)

    ensembles, evaluation = {}, {}
    for j, (name, path) in enumerate(train_sets.items()):
        ensembles[name] = _fit_ensemble(StateEstimator, path, models / f"dse-{name}", scale["models"],
                                        _seed(seed, 10 + j), epochs=scale["epochs"])
        evaluation[name] = evaluate(ensembles[name], test["gradient"], test["state_label"]).summary()
        logger.info("%s-trained ensemble: accuracy %s", name, evaluation[name]["accuracy_percent"])
    _write_json(out / "reports" / "evaluation.json", evaluation)

    sweep = sweep_ds.arrays()
    curves = build_mae_curves(ensembles["combined"], sweep["gradient"], sweep["state_label"], sweep["noise_scale"],
                              bins=scale["bins"])
    thresholds = calibrate_thresholds(curves, source=sweep_ds.manifest["config_hash"])
    thresholds.save(out / "reports" / "thresholds.json")
    curve_report = {"curves": {k: v.to_dict() for k, v in curves.items()},
                    "spearman": {k: v.spearman() for k, v in curves.items()}, "curves_hash": curves_hash(curves)}
    _write_json(out / "reports" / "curves.json", curve_report)

    labeled = GenerationConfig(thresholds=thresholds.to_dict())
    dqc_train = gen("dqc-labeled", scale["dqc_train"], 5, labeled)
    dqc_test = load_dataset(gen("dqc-labeled", scale["dqc_test"], 6, labeled)).arrays()
    dqc = _fit_ensemble(QualityController, dqc_train, models / "dqc", scale["dqc_models"], _seed(seed, 20),
                        epochs=scale["dqc_epochs"], patience=3)
    from .dqc import predict_quality

    predicted = predict_quality(dqc, dqc_test["gradient"])
    dqc_accuracy = float(np.mean(predicted == dqc_test["quality"]))
    quality = validate_quality_correlation(dqc, ensembles["combined"], dqc_test["gradient"],
                                           dqc_test["state_label"], quality=predicted).to_dict()
    quality["dqc_accuracy"] = dqc_accuracy
    _write_json(out / "reports" / "quality_validation.json", quality)

    n = scale["map_pixels"]
    half = (n - 1)  # 2 mV pitch: n pixels span 2 (n - 1) mV
    scan_spec = {"device": MAP_DEVICE, "v1_range": [-30.0, -30.0 + 2 * half], "v2_range": [-30.0, -30.0 + 2 * half],
                 "pixels": n, "noise": None, "scale_ramp": [0.0, 4.5], "seed": _seed(seed, 30)}
    _write_json(out / "reports" / "large_scan.json", scan_spec)
    maps = render_maps(scan_spec, ensembles["combined"], dqc, out / "maps")

    report = criteria_report(evaluation, curve_report, quality, maps, dqc_accuracy)
    _write_json(out / "reports" / "acceptance.json", report)
    _run_manifest(out, args, {"scale_preset": scale, "resolved_config": config.to_dict()})
    for name, entry in report.items():
        print(f"{'PASS' if entry['pass'] else 'FAIL'} {name}")
    logger.info("reproduce finished in %.0f s", time.perf_counter() - t0)


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qdtune", description="Simulated quantum-dot autotuning with data quality control.")
    p.add_argument("--version", action="version", version=f"qdtune {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, help_text):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.add_argument("--manifest", help="replay the run described by this run.json")
        sp.add_argument("--workers", type=int, default=None, help="parallel workers (default: QDTUNE_WORKERS or all cores)")
        sp.add_argument("-v", "--verbose", action="count", default=0)
        return sp

    def training(sp, n_models):
        sp.add_argument("--dataset", "--data", dest="data", help="training dataset directory")
        sp.add_argument("--out", help="output directory for checkpoints")
        sp.add_argument("--models", type=int, default=n_models)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--epochs", type=int, default=30)
        sp.add_argument("--batch-size", type=int, default=64)
        sp.add_argument("--patience", type=int, default=5)

    from .dataset import KINDS

    sp = add("generate", "generate a simulated dataset")
    sp.add_argument("--kind", choices=KINDS)
    sp.add_argument("--count", type=int)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.add_argument("--config", help="generation config JSON")
    sp.add_argument("--noise-config", help="key = value noise defaults")
    sp.add_argument("--thresholds", help="thresholds JSON (dqc-labeled only)")

    sp = add("train-dse", "train a state-estimator ensemble")
    training(sp, 5)
    sp.add_argument("--arch", choices=("noiseless", "noisy"), default="noiseless")
    sp.add_argument("--clip", action="store_true", help="clip images to their 2nd/98th percentiles")

    sp = add("train-dqc", "train a quality-control ensemble")
    training(sp, 1)

    sp = add("evaluate", "score state estimators on a dataset")
    sp.add_argument("--checkpoints", nargs="+", help="checkpoint directories, or directories of them")
    sp.add_argument("--dataset", "--data", dest="data")
    sp.add_argument("--report", help="JSON report path")

    sp = add("calibrate-dqc", "calibrate quality thresholds on a threshold-sweep dataset")
    sp.add_argument("--checkpoints", nargs="+", help="state-estimator checkpoints")
    sp.add_argument("--dataset", "--data", dest="data")
    sp.add_argument("--out")
    sp.add_argument("--bins", type=int, default=28)

    sp = add("validate-dqc", "state-estimator performance per predicted quality class")
    sp.add_argument("--dqc", nargs="+")
    sp.add_argument("--dse", nargs="+")
    sp.add_argument("--dataset", "--data", dest="data")
    sp.add_argument("--out")

    sp = add("tune", "run the quality-gated tuning loop on a simulated device")
    sp.add_argument("--device-config", help="device parameters JSON")
    sp.add_argument("--noise-scale", type=float, default=1.0)
    sp.add_argument("--target", choices=("ND", "LD", "CD", "RD", "DD"), default="DD")
    sp.add_argument("--budget", type=int, default=3)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--start", type=float, nargs=2, default=[40.0, 0.0], metavar=("V_P1", "V_P2"))
    sp.add_argument("--max-steps", type=int, default=50)
    sp.add_argument("--dse", nargs="+")
    sp.add_argument("--dqc", nargs="+")
    sp.add_argument("--log")

    sp = add("render-maps", "sliding-window state and quality maps of a large scan")
    sp.add_argument("--scan", help="large-scan JSON recipe")
    sp.add_argument("--dse", nargs="+")
    sp.add_argument("--dqc", nargs="+")
    sp.add_argument("--out")
    sp.add_argument("--mixed-threshold", type=float, default=0.7)

    sp = add("reproduce", "run the whole chain from one seed")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--scale", choices=tuple(SCALES), default="desk")
    sp.add_argument("--out", default="qdtune-run")
    return p


REQUIRED = {
    "generate": ("kind", "count", "out"),
    "train-dse": ("data", "out"),
    "train-dqc": ("data", "out"),
    "evaluate": ("checkpoints", "data", "report"),
    "calibrate-dqc": ("checkpoints", "data", "out"),
    "validate-dqc": ("dqc", "dse", "data", "out"),
    "tune": ("dse", "dqc", "log"),
    "render-maps": ("scan", "dse", "dqc", "out"),
    "reproduce": ("out",),
}

COMMANDS = {
    "generate": cmd_generate, "train-dse": cmd_train_dse, "train-dqc": cmd_train_dqc, "evaluate": cmd_evaluate,
    "calibrate-dqc": cmd_calibrate_dqc, "validate-dqc": cmd_validate_dqc, "tune": cmd_tune,
    "render-maps": cmd_render_maps, "reproduce": cmd_reproduce,
}


def resolve_args(parser: argparse.ArgumentParser, argv) -> dict:
    ns = parser.parse_args(argv)
    if ns.command is None:
        raise UsageError("no command given")
    args = vars(ns)
    sub = parser._subparsers._group_actions[0].choices[ns.command]
    defaults = {a.dest: a.default for a in sub._actions if a.dest != "help"}
    if args.get("manifest"):
        changed = sorted(k for k, v in args.items() if k not in _REPLAY_FREE and v != defaults.get(k))
        if changed:
            raise UsageError(f"--manifest conflicts with {', '.join('--' + c.replace('_', '-') for c in changed)}")
        stored = _read_json(args["manifest"])
        if stored.get("command") != ns.command:
            raise UsageError(f"manifest was written by '{stored.get('command')}', not '{ns.command}'")
        replay = dict(stored["args"])
        for key in ("out", "report", "log"):
            if args.get(key) not in (None, defaults.get(key)):
                replay[key] = args[key]
        replay["workers"] = args["workers"]
        replay["verbose"] = args["verbose"]
        replay["manifest"] = None
        args = {**defaults, **replay, "command": ns.command}
    missing = [k for k in REQUIRED[ns.command] if args.get(k) in (None, [])]
    if missing:
        raise UsageError(f"{ns.command}: missing {', '.join('--' + m.replace('_', '-') for m in missing)}")
    for key in ("count", "models", "epochs", "batch_size"):
        if args.get(key) is not None and args[key] < 1:
            raise UsageError(f"--{key.replace('_', '-')} must be >= 1")
    if args.get("budget") is not None and args["budget"] < 0:
        raise UsageError("--budget must be >= 0")
    if args.get("noise_scale") is not None and args["noise_scale"] < 0:
        raise UsageError("--noise-scale must be >= 0")
    if args.get("thresholds") and args.get("kind") != "dqc-labeled":
        raise UsageError("--thresholds only applies to --kind dqc-labeled")
    if args["workers"] is None:
        args["workers"] = default_workers()
    elif args["workers"] < 1:
        raise UsageError("--workers must be >= 1")
    return args


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = resolve_args(parser, argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"qdtune: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.get("verbose", 0), 2),
                        format="%(levelname)s %(name)s: %(message)s")
    out = args.get("out")
    marker = Path(out) / INCOMPLETE if out and args["command"] != "tune" else None
    if marker is not None:
        marker.parent.mkdir(parents=True, exist_ok=True)
        marker.write_text("run did not finish; outputs in this directory are partial\n")
    try:
        COMMANDS[args["command"]](args)
    except Exception as exc:  # runtime failures map to exit status 1
        logger.error("%s failed: %s", args["command"], exc)
        if args.get("verbose"):
            raise
        return 1
    if marker is not None:
        marker.unlink(missing_ok=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
