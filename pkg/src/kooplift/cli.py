"""Command line surface: train, simulate, eval, streamlines, synthetic.

Every command is deterministic given its config and seed; outputs are plain
CSV/JSON for external plotting.  Exit codes: 0 success, 2 config error,
3 numeric failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import jsonschema
import numpy as np

from . import __version__, data, metrics, predictor, training
from .autodiff import NonFiniteError
from .flow import FlowArchitecture

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


class ConfigError(ValueError):
    pass


CONFIG_SCHEMA = {
    "type": "object",
    "required": ["dataset", "out_dir", "mode"],
    "additionalProperties": False,
    "properties": {
        "dataset": {"type": "string"},
        "out_dir": {"type": "string"},
        "mode": {"enum": ["imitation", "validation"]},
        "p_bar": {"type": "integer", "minimum": 1},
        "flow": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "layers": {"type": "integer", "minimum": 1},
                "hidden_layers": {"type": "integer", "minimum": 1},
                "hidden_width": {"type": "integer", "minimum": 1},
                "final_tanh": {"type": "boolean"},
            },
        },
        "epochs": {"type": "integer", "minimum": 1},
        "batch_size": {"type": ["integer", "null"], "minimum": 1},
        "learning_rate": {"type": "number", "exclusiveMinimum": 0},
        "loss_weights": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "prediction": {"type": "number", "minimum": 0},
                "invariance": {"type": "number", "minimum": 0},
                "identity": {"type": "number", "minimum": 0},
            },
        },
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "resample": {"type": "integer", "minimum": 2},
        "split": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"train": {"type": "integer", "minimum": 1}},
        },
        "rmse_every": {"type": "integer", "minimum": 1},
    },
}

_DEFAULTS = {
    "p_bar": 8,
    "flow": {"layers": 7, "hidden_layers": 3, "hidden_width": 120, "final_tanh": True},
    "epochs": 3000,
    "batch_size": None,
    "learning_rate": 1e-3,
    "loss_weights": {"prediction": 1.0, "invariance": 1.0, "identity": 1.0},
    "epsilon": 1e-6,
    "seed": 0,
    "resample": 900,
    "rmse_every": 50,
}


def load_config(path):
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config schema violation: {exc.message}") from exc
    cfg = dict(_DEFAULTS)
    cfg.update({k: v for k, v in raw.items() if k not in ("flow", "loss_weights")})
    cfg["flow"] = {**_DEFAULTS["flow"], **raw.get("flow", {})}
    cfg["loss_weights"] = {**_DEFAULTS["loss_weights"], **raw.get("loss_weights", {})}
    return cfg


def _train_config(cfg, d):
    fw = cfg["flow"]
    lw = cfg["loss_weights"]
    return training.TrainConfig(
        p_bar=cfg["p_bar"],
        arch=FlowArchitecture(
            d=d,
            n_layers=fw["layers"],
            hidden_layers=fw["hidden_layers"],
            hidden_width=fw["hidden_width"],
            final_tanh=fw["final_tanh"],
        ),
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        learning_rate=cfg["learning_rate"],
        w_pred=lw["prediction"],
        w_inv=lw["invariance"],
        w_id=lw["identity"],
        epsilon=cfg["epsilon"],
        seed=cfg["seed"],
        rmse_every=cfg["rmse_every"],
    )


def _write_history(history, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["epoch", "total", "prediction", "invariance", "near_identity", "skipped", "rmse"]
        )
        for rec in history:
            writer.writerow(
                [
                    rec["epoch"],
                    rec["total"],
                    rec["prediction"],
                    rec["invariance"],
                    rec["near_identity"],
                    rec["skipped"],
                    "" if rec["rmse"] is None else rec["rmse"],
                ]
            )


def _eval_rows(model, dataset, shape_name):
    rows = []
    raw_by_metric = {"rmse": [], "dtwd": [], "pcm": []}
    for k, demo in enumerate(dataset.demonstrations):
        times = demo.t - demo.t[0]
        traj = predictor.simulate(model, demo.pos[0], times, scaled=True)
        raw_by_metric["rmse"].append(metrics.rmse(traj, demo.pos))
        raw_by_metric["dtwd"].append(metrics.dtwd(traj, demo.pos))
        raw_by_metric["pcm"].append(metrics.pcm(traj, demo.pos))
    for name, values in raw_by_metric.items():
        if len(values) >= 2:
            normed = metrics.normalize_scores(values)
        else:
            normed = [0.0] * len(values)
        for k, (raw, nv) in enumerate(zip(values, normed)):
            rows.append([shape_name, k, name, raw, float(nv)])
    return rows


def _write_report(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["shape", "demo", "metric", "raw", "normalized"])
        writer.writerows(rows)


def cmd_train(args):
    cfg = load_config(args.config)
    dataset = data.load_csv(cfg["dataset"])
    dataset = data.Dataset(
        name=dataset.name,
        demonstrations=[data.resample(demo, cfg["resample"]) for demo in dataset.demonstrations],
    )
    dataset, _ = data.preprocess(dataset)
    if cfg["mode"] == "validation":
        n_train = cfg.get("split", {}).get("train")
        train_set, val_set = data.split_train_val(dataset, n_train)
    else:
        train_set, val_set = dataset, None
    tc = _train_config(cfg, dataset.d)
    model, history = training.train(train_set, tc)
    import os

    os.makedirs(cfg["out_dir"], exist_ok=True)
    predictor.save(model, os.path.join(cfg["out_dir"], "model.json"))
    _write_history(history, os.path.join(cfg["out_dir"], "history.csv"))
    manifest = {"config": cfg, "seed": cfg["seed"], "version": f"kooplift-{__version__}"}
    with open(os.path.join(cfg["out_dir"], "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
    if val_set is not None:
        _write_report(
            _eval_rows(model, val_set, dataset.name),
            os.path.join(cfg["out_dir"], "validation_report.csv"),
        )
    print(f"trained model written to {cfg['out_dir']}/model.json")
    return 0


def _demo_time_grid(demo, multiple):
    dt = demo.t[1] - demo.t[0]
    horizon = demo.duration
    n = int(round(horizon * multiple / dt)) + 1
    return np.arange(n) * dt, horizon


def cmd_simulate(args):
    model = predictor.load(args.model)
    writer_rows = []
    if args.from_state is not None:
        x0 = np.array([float(v) for v in args.from_state.split(",")])
        if args.duration is None:
            raise ConfigError("--duration is required with --from")
        dt = args.duration / 499.0
        times = np.arange(500) * dt * args.horizon_multiple
        horizon = args.duration
        starts = [(x0, times, horizon, None)]
    else:
        dataset = data.load_csv(args.dataset)
        dataset, _ = data.preprocess(dataset)
        demos = dataset.demonstrations
        if args.demo is not None:
            demos = [demos[args.demo]]
        starts = []
        for k, demo in enumerate(demos):
            times, horizon = _demo_time_grid(demo, args.horizon_multiple)
            x0 = model.scaling.invert(demo.pos[0])
            starts.append((x0, times, horizon, args.demo if args.demo is not None else k))
    for x0, times, horizon, demo_id in starts:
        traj = predictor.simulate(model, x0, times)
        for t, x in zip(times, traj):
            writer_rows.append([demo_id if demo_id is not None else 0, t]
                               + list(x) + [int(t <= horizon)])
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        d = model.d
        writer.writerow(["demo", "t"] + [f"xhat{i+1}" for i in range(d)] + ["in_demo_horizon"])
        writer.writerows(writer_rows)
    print(f"trajectories written to {args.out}")
    return 0


def cmd_eval(args):
    model = predictor.load(args.model)
    dataset = data.load_csv(args.dataset)
    dataset = data.Dataset(
        name=dataset.name,
        demonstrations=[data.resample(demo, args.resample) for demo in dataset.demonstrations],
    )
    dataset, _ = data.preprocess(dataset)
    if args.split == "val":
        _, dataset_part = data.split_train_val(dataset)
    elif args.split == "train":
        dataset_part, _ = data.split_train_val(dataset)
    else:
        dataset_part = dataset
    _write_report(_eval_rows(model, dataset_part, dataset.name), args.out)
    print(f"report written to {args.out}")
    return 0


def cmd_streamlines(args):
    model = predictor.load(args.model)
    if model.d != 2:
        raise ConfigError("streamline export requires a 2-D model")
    grid = np.linspace(-1.0, 1.0, args.grid)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x1", "x2", "dx1", "dx2"])
        for x1 in grid:
            for x2 in grid:
                dx = predictor.vector_field(model, [x1, x2], scaled=True)
                writer.writerow([x1, x2, dx[0], dx[1]])
    print(f"streamlines written to {args.out}")
    return 0


def cmd_synthetic(args):
    dataset, truth = data.synthetic_system(args.seed)
    data.save_csv(dataset, args.out)
    truth_doc = {
        "A": truth["A"].tolist(),
        "flow": truth["flow"].to_dict(),
        "seed": args.seed,
    }
    truth_path = args.out.rsplit(".", 1)[0] + "_truth.json"
    with open(truth_path, "w") as fh:
        json.dump(truth_doc, fh)
    print(f"synthetic dataset written to {args.out} (ground truth: {truth_path})")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="kooplift")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a predictor from a config file")
    p.add_argument("config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("simulate", help="roll out a trained model")
    p.add_argument("model")
    p.add_argument("--dataset")
    p.add_argument("--demo", type=int)
    p.add_argument("--from", dest="from_state")
    p.add_argument("--duration", type=float)
    p.add_argument("--horizon-multiple", type=float, default=5.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("eval", help="metric report against a dataset")
    p.add_argument("model")
    p.add_argument("dataset")
    p.add_argument("--split", choices=["all", "train", "val"], default="all")
    p.add_argument("--resample", type=int, default=900)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("streamlines", help="vector field on a grid for plotting")
    p.add_argument("model")
    p.add_argument("--grid", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_streamlines)

    p = sub.add_parser("synthetic", help="generate an oracle dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synthetic)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, jsonschema.ValidationError, ValueError) as exc:
        if isinstance(exc, (predictor.DomainError,)):
            print(f"numeric failure: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (training.TrainingDiverged, NonFiniteError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
