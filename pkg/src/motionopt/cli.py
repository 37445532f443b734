"""Command-line entry point: ``motionopt <subcommand> [options]``.

Subcommands: gen-data, train, predict, optimize, evaluate, plot.  Every
subcommand accepts ``--config FILE`` with ``key = value`` lines (keys are the
long flag names, ``#`` starts a comment); explicit flags win over the file,
which wins over built-in defaults.  Each run writes a JSON manifest next to
its outputs recording the resolved settings and SHA-256 of inputs and outputs.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import benchmark
from .dataio import (
    ReachInfo,
    atomic_write_text,
    checkpoint_train_config,
    format_trajectory_csv,
    generate_synthetic,
    load_checkpoint,
    read_trajectory_csv,
    save_checkpoint,
)
from .evaluation import DEFAULT_HORIZONS_MS, ErrorTable, benchmark_table, build_eval_samples
from .gru import init_model, rollout
from .kinematics import default_skeleton, forward_kinematics, load_skeleton
from .lbfgs import LbfgsConfig
from .plotting import error_table_svg, skeleton_svg, trajectory_svg
from .trajopt import DEFAULT_WEIGHT, GoalConstraint, predict_optimized
from .training import TrainConfig, train

log = logging.getLogger("motionopt")


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"{self.prog}: error: {message} (see --help)\n")


# ---------------------------------------------------------------- helpers

def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _need_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"{what} not found: {p}")
    return p


def write_manifest(path, subcommand: str, config: dict, inputs: dict, outputs: dict) -> None:
    """Manifest with paths relative to its directory and content hashes."""
    path = Path(path)

    def entry(p):
        p = Path(p)
        return {"file": p.name, "sha256": sha256_file(p)}

    doc = {
        "subcommand": subcommand,
        "config": config,
        "seed": config.get("seed"),
        "inputs": {k: entry(v) for k, v in sorted(inputs.items())},
        "outputs": {k: entry(v) for k, v in sorted(outputs.items())},
    }
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_config_file(path) -> dict:
    out = {}
    for lineno, raw in enumerate(_need_file(path, "config file").read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def resolve(args, defaults: dict) -> dict:
    """Merge flags over config-file values over ``defaults``, casting to the defaults' types."""
    file_vals = read_config_file(args.config) if getattr(args, "config", None) else {}
    unknown = set(file_vals) - set(defaults)
    if unknown:
        raise CliError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    out = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        if flag is not None:
            out[key] = flag
        elif key in file_vals:
            out[key] = _cast(file_vals[key], default, key)
        else:
            out[key] = default
    return out


def _cast(text: str, default, key: str):
    try:
        if isinstance(default, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise CliError(f"config key {key!r}: cannot parse {text!r}") from None
    return text


def parse_vec3(text: str) -> tuple[float, float, float]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        vals = ()
    if len(vals) != 3 or not all(np.isfinite(vals)):
        raise CliError(f"expected three comma-separated numbers like 0.4,-0.2,1.1, got {text!r}")
    return vals


def _skeleton(path):
    return load_skeleton(_need_file(path, "skeleton file")) if path else default_skeleton()


def _load_dataset(data_dir):
    d = Path(data_dir)
    meta_path = _need_file(d / "reaches.json", "dataset index (run gen-data first)")
    meta = json.loads(meta_path.read_text())
    skel = load_skeleton(_need_file(d / "skeleton.json", "dataset skeleton"))
    trajs, reaches, files = [], [], [meta_path, d / "skeleton.json"]
    for item in meta["trajectories"]:
        p = _need_file(d / item["file"], "trajectory file")
        files.append(p)
        trajs.append(read_trajectory_csv(p, skel))
        reaches.append(ReachInfo(item["start_frame"], item["end_frame"], skel.index(item["end_effector"]),
                                 tuple(item["goal"])))
    return meta, skel, trajs, reaches, files


def _inputs(files) -> dict:
    return {Path(f).name: f for f in files}


def _model_for(ckpt, skel):
    model = load_checkpoint(_need_file(ckpt, "checkpoint"), skel)
    if model.state_dim != skel.state_dim:
        raise CliError(f"checkpoint state dim {model.state_dim} does not match skeleton state dim {skel.state_dim}")
    return model


def _read_observed(path, skel):
    traj = read_trajectory_csv(_need_file(path, "observed trajectory"), skel, dt=None)
    times = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)[:, 0]
    return traj, float(times[-1])


# ---------------------------------------------------------------- subcommands

def cmd_gen_data(args) -> int:
    cfg = resolve(args, {"seed": 0, "num_trajectories": 40, "train_count": benchmark.TRAIN_COUNT,
                         "noise_std": 0.0, "end_effector": "wrist_r", "skeleton": ""})
    if not 0 < cfg["train_count"] < cfg["num_trajectories"]:
        raise CliError("train_count must be between 1 and num_trajectories - 1")
    skel = _skeleton(cfg["skeleton"])
    syn = replace(benchmark.synthetic_config(cfg["seed"]), num_trajectories=cfg["num_trajectories"],
                  noise_std=cfg["noise_std"], end_effector=cfg["end_effector"])
    trajs, reaches = generate_synthetic(syn, skel)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = {"skeleton": out / "skeleton.json", "index": out / "reaches.json"}
    atomic_write_text(outputs["skeleton"], json.dumps(skel.to_dict(), indent=2) + "\n")
    items = []
    for i, (t, r) in enumerate(zip(trajs, reaches)):
        name = f"traj_{i:03d}.csv"
        atomic_write_text(out / name, format_trajectory_csv(t))
        outputs[name] = out / name
        items.append({"file": name, "split": "train" if i < cfg["train_count"] else "test",
                      "start_frame": r.start_frame, "end_frame": r.end_frame,
                      "end_effector": skel.joints[r.end_effector].name, "goal": list(r.goal)})
    meta = {"synthetic_config": asdict(syn), "train_count": cfg["train_count"], "trajectories": items}
    atomic_write_text(outputs["index"], json.dumps(meta, indent=2) + "\n")
    write_manifest(out / "manifest.json", "gen-data", cfg, {}, outputs)
    print(f"wrote {len(trajs)} trajectories to {out}")
    return 0


def _train_defaults():
    t = benchmark.train_config()
    return {"seed": 0, "epochs": t.epochs, "hidden": benchmark.HIDDEN_DIM, "learning_rate": t.learning_rate,
            "optimizer": t.optimizer, "batch_size": t.batch_size, "grad_clip_norm": t.grad_clip_norm,
            "context_frames": t.context_frames, "horizon_frames": t.horizon_frames, "stride": 1,
            "amplitude_jitter": t.amplitude_jitter, "translation_range": t.translation_range,
            "randomize_base": True, "input_scale": benchmark.INPUT_SCALE, "anchored": True}


def cmd_train(args) -> int:
    cfg = resolve(args, _train_defaults())
    meta, skel, trajs, reaches, files = _load_dataset(args.data)
    train_trajs = [t for t, item in zip(trajs, meta["trajectories"]) if item["split"] == "train"]
    tc = TrainConfig(batch_size=cfg["batch_size"], learning_rate=cfg["learning_rate"],
                     grad_clip_norm=cfg["grad_clip_norm"], epochs=cfg["epochs"],
                     context_frames=cfg["context_frames"], horizon_frames=cfg["horizon_frames"], seed=cfg["seed"],
                     randomize_base=cfg["randomize_base"], translation_range=cfg["translation_range"],
                     amplitude_jitter=cfg["amplitude_jitter"], optimizer=cfg["optimizer"])
    windows = benchmark.training_windows(train_trajs, tc, cfg["stride"])
    if not windows:
        raise CliError("no training windows: trajectories are shorter than context_frames + horizon_frames")
    model = init_model(skel.state_dim, cfg["hidden"], seed=cfg["seed"], model_fps=train_trajs[0].fps,
                       anchored=cfg["anchored"], input_scale=cfg["input_scale"], zero_output=True)
    log.info("training on %d windows for %d epochs", len(windows), tc.epochs)
    model, losses = train(model, windows, tc, on_epoch=lambda e, l: log.info("epoch %d loss %.6g", e, l))
    out = Path(args.out)
    log_path = Path(args.log) if args.log else out.with_name(out.stem + "_log.csv")
    save_checkpoint(model, out, skel, {**tc.to_dict(), "stride": cfg["stride"]})
    atomic_write_text(log_path, "epoch,mean_loss\n" + "".join(f"{i},{v:.17g}\n" for i, v in enumerate(losses, 1)))
    write_manifest(out.with_name(out.stem + ".manifest.json"), "train", cfg, _inputs(files),
                   {"checkpoint": out, "log": log_path})
    if losses:
        print(f"final epoch loss {losses[-1]:.6g}; checkpoint {out}")
    else:
        print(f"no epochs run; checkpoint {out}")
    return 0


def _write_prediction(traj, t_last, out):
    atomic_write_text(out, format_trajectory_csv(traj, t0=t_last + traj.dt))


def cmd_predict(args) -> int:
    cfg = resolve(args, {"horizon": 24, "skeleton": ""})
    skel = _skeleton(cfg["skeleton"])
    model = _model_for(args.model, skel)
    obs, t_last = _read_observed(args.observed, skel)
    pred, _ = rollout(model, obs, cfg["horizon"])
    out = Path(args.out)
    _write_prediction(pred, t_last, out)
    write_manifest(out.with_name(out.stem + ".manifest.json"), "predict", cfg,
                   {"model": args.model, "observed": args.observed}, {"prediction": out})
    print(f"wrote {len(pred)} frames to {out}")
    return 0


def cmd_optimize(args) -> int:
    cfg = resolve(args, {"horizon": 24, "skeleton": "", "goal": "", "end_effector": "wrist_r",
                         "lambda_": DEFAULT_WEIGHT, "max_iters": LbfgsConfig().max_iters,
                         "grad_tol": LbfgsConfig().grad_tol})
    if not cfg["goal"]:
        raise CliError("--goal x,y,z is required")
    skel = _skeleton(cfg["skeleton"])
    model = _model_for(args.model, skel)
    obs, t_last = _read_observed(args.observed, skel)
    try:
        ee = skel.index(cfg["end_effector"])
    except KeyError:
        raise CliError(f"unknown end effector {cfg['end_effector']!r}") from None
    goal = GoalConstraint(ee, parse_vec3(cfg["goal"]), cfg["lambda_"])
    res = predict_optimized(model, obs, cfg["horizon"], goal, skel,
                            LbfgsConfig(max_iters=cfg["max_iters"], grad_tol=cfg["grad_tol"]))
    out = Path(args.out)
    summary_path = out.with_name(out.stem + "_summary.json")
    _write_prediction(res.trajectory, t_last, out)
    final = forward_kinematics(skel, res.trajectory.states[-1])[ee]
    summary = {"initial_cost": res.initial_cost, "final_cost": res.final_cost, "iterations": res.iterations,
               "converged": res.converged, "message": res.message,
               "final_goal_error_m": float(np.linalg.norm(final - np.asarray(goal.target))),
               "delta_norm": float(np.linalg.norm(res.delta_star))}
    atomic_write_text(summary_path, json.dumps(summary, indent=2, sort_keys=True) + "\n")
    write_manifest(out.with_name(out.stem + ".manifest.json"), "optimize", cfg,
                   {"model": args.model, "observed": args.observed}, {"prediction": out, "summary": summary_path})
    print(f"cost {res.initial_cost:.6g} -> {res.final_cost:.6g} in {res.iterations} iterations; "
          f"goal error {summary['final_goal_error_m']:.4g} m")
    return 0


def cmd_evaluate(args) -> int:
    cfg = resolve(args, {"lead_frames": benchmark.LEAD_FRAMES, "lambda_": DEFAULT_WEIGHT,
                         "horizons": ",".join(str(h) for h in DEFAULT_HORIZONS_MS)})
    meta, skel, trajs, reaches, files = _load_dataset(args.data)
    model = _model_for(args.model, skel)
    test = [(t, r) for t, r, item in zip(trajs, reaches, meta["trajectories"]) if item["split"] == "test"]
    if not test:
        raise CliError("dataset has no test trajectories")
    try:
        horizons = [int(h) for h in cfg["horizons"].split(",")]
    except ValueError:
        raise CliError(f"--horizons must be comma-separated milliseconds, got {cfg['horizons']!r}") from None
    frames = int(round(max(horizons) / 1000.0 * model.model_fps))
    context = int(checkpoint_train_config(args.model).get("context_frames", 24))
    samples = build_eval_samples([t for t, _ in test], [r for _, r in test], context, cfg["lead_frames"], frames)
    table = benchmark_table(model, samples, skel, horizons, cfg["lambda_"])
    out = Path(args.out)
    text_path = out.with_suffix(".txt")
    atomic_write_text(out, table.to_csv())
    atomic_write_text(text_path, table.to_text())
    write_manifest(out.with_name(out.stem + ".manifest.json"), "evaluate", cfg,
                   {**_inputs(files), "model": args.model}, {"table": out, "text": text_path})
    print(table.to_text(), end="")
    return 0


def cmd_plot(args) -> int:
    cfg = resolve(args, {"kind": "auto", "columns": "base_x,base_y,base_z", "skeleton": "", "every": 4})
    src = _need_file(args.input, "input CSV")
    head = src.read_text().split("\n", 1)[0]
    kind = cfg["kind"]
    if kind == "auto":
        kind = "table" if head.startswith("method") else "lines"
    if kind == "table":
        svg = error_table_svg(ErrorTable.from_csv(src.read_text()))
    elif kind in ("lines", "skeleton"):
        skel = _skeleton(cfg["skeleton"]) if kind == "skeleton" else None
        traj = read_trajectory_csv(src, skel)
        times = np.loadtxt(src, delimiter=",", skiprows=1, ndmin=2)[:, 0]
        if kind == "lines":
            names = head.split(",")
            cols = [c.strip() for c in cfg["columns"].split(",") if c.strip()]
            missing = [c for c in cols if c not in names]
            if missing:
                raise CliError(f"unknown column(s) {', '.join(missing)}; available: {','.join(names[1:7])},...")
            svg = trajectory_svg(times, {c: traj.states[:, names.index(c) - 1] for c in cols})
        else:
            svg = skeleton_svg(skel, traj.states, every=cfg["every"])
    else:
        raise CliError(f"--kind must be auto, table, lines or skeleton, got {kind!r}")
    out = Path(args.out)
    atomic_write_text(out, svg)
    write_manifest(out.with_name(out.stem + ".manifest.json"), "plot", cfg, {"input": src}, {"svg": out})
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="motionopt", description="GRU motion prediction with goal-directed offset optimization.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="key = value file; flags take precedence")
        return sp

    g = common(sub.add_parser("gen-data", help="write a synthetic reaching dataset"))
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--seed", type=int)
    g.add_argument("--num-trajectories", type=int)
    g.add_argument("--train-count", type=int, help="first N trajectories form the training split")
    g.add_argument("--noise-std", type=float, help="per-frame angle noise (radians)")
    g.add_argument("--end-effector")
    g.add_argument("--skeleton", help="skeleton JSON (default: built-in 21-joint humanoid)")
    g.set_defaults(func=cmd_gen_data)

    t = common(sub.add_parser("train", help="train a model on a dataset's training split"))
    t.add_argument("--data", required=True, help="dataset directory from gen-data")
    t.add_argument("--out", required=True, help="checkpoint path (JSON)")
    t.add_argument("--log", help="epoch,mean_loss CSV (default: <out>_log.csv)")
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--hidden", type=int)
    t.add_argument("--learning-rate", type=float)
    t.add_argument("--optimizer", choices=["sgd", "adam"])
    t.add_argument("--batch-size", type=int)
    t.add_argument("--grad-clip-norm", type=float)
    t.add_argument("--context-frames", type=int)
    t.add_argument("--horizon-frames", type=int)
    t.add_argument("--stride", type=int, help="window stride in frames")
    t.add_argument("--amplitude-jitter", type=float)
    t.add_argument("--translation-range", type=float)
    t.add_argument("--randomize-base", action=argparse.BooleanOptionalAction, default=None)
    t.add_argument("--anchored", action=argparse.BooleanOptionalAction, default=None,
                   help="feed the cell states relative to the last observed frame")
    t.add_argument("--input-scale", type=float)
    t.set_defaults(func=cmd_train)

    for name, helptext, func in (("predict", "plain model prediction", cmd_predict),
                                 ("optimize", "goal-directed prediction", cmd_optimize)):
        s = common(sub.add_parser(name, help=helptext))
        s.add_argument("--model", required=True, help="checkpoint")
        s.add_argument("--observed", required=True, help="observed trajectory CSV")
        s.add_argument("--out", required=True, help="predicted trajectory CSV")
        s.add_argument("--horizon", type=int, help="frames to predict (default 24)")
        s.add_argument("--skeleton", help="skeleton JSON (default: built-in)")
        s.add_argument("--seed", type=int, help="accepted for uniformity; prediction is deterministic")
        if name == "optimize":
            s.add_argument("--goal", help="target position x,y,z in meters")
            s.add_argument("--end-effector", help="joint name (default wrist_r)")
            s.add_argument("--lambda", dest="lambda_", type=float, help="goal weight (default 100)")
            s.add_argument("--max-iters", type=int)
            s.add_argument("--grad-tol", type=float)
        s.set_defaults(func=func)

    e = common(sub.add_parser("evaluate", help="error table on a dataset's test split"))
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True, help="error-table CSV; a .txt rendering is written alongside")
    e.add_argument("--lead-frames", type=int, help="cut point, frames after reach onset")
    e.add_argument("--lambda", dest="lambda_", type=float)
    e.add_argument("--horizons", help="comma-separated milliseconds")
    e.add_argument("--seed", type=int, help="accepted for uniformity; evaluation is deterministic")
    e.set_defaults(func=cmd_evaluate)

    pl = common(sub.add_parser("plot", help="render a trajectory or error-table CSV as SVG"))
    pl.add_argument("--input", required=True)
    pl.add_argument("--out", required=True)
    pl.add_argument("--kind", choices=["auto", "table", "lines", "skeleton"])
    pl.add_argument("--columns", help="trajectory columns for line plots")
    pl.add_argument("--every", type=int, help="frame step for skeleton plots")
    pl.add_argument("--skeleton")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        msg = str(exc)
    except (ValueError, KeyError, IndexError, OSError, json.JSONDecodeError) as exc:
        msg = str(exc).strip("'\"") or type(exc).__name__
    print(f"motionopt: error: {msg.splitlines()[0]}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
