"""Command-line entry point: simulate, preprocess, train, eval, infer,
robustness and plot subcommands over the toolkit's file formats.

Exit codes: 0 success, 2 usage/config, 3 data, 4 numeric/training failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import evaluate, preprocess, tasks
from .csi import (ACTIVITIES, NUM_ACTIVITIES, SimoConfig, load_manifest,
                  load_stream, save_manifest, save_stream)
from .errors import ConfigError, DataError, NumericError
from .neural import (CELLS, SequenceModel, TrainConfig, load_checkpoint,
                     save_checkpoint, train_model)
from .preprocess import FrameDataset, PreprocessConfig
from .simulate import SceneConfig, WALK_PATHS, generate_dataset, make_users


def _load_json(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path) as f:
        return json.load(f)


def _ensure_out(path):
    os.makedirs(path, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _load_json(args.config) if args.config else {}
    radio = SimoConfig(
        num_subcarriers=cfg.get("num_subcarriers", 64),
        sampling_rate=cfg.get("sampling_rate", 100.0),
        carrier_freq=cfg.get("carrier_freq", 2.45e9),
        num_receivers=cfg.get("num_receivers", 2),
        antennas_per_receiver=cfg.get("antennas_per_receiver", 1))
    scene_kw = {"noise_std": cfg.get("noise_std", 0.02), "radio": radio}
    if "tx_position" in cfg:
        scene_kw["tx_position"] = tuple(cfg["tx_position"])
    if "rx_positions" in cfg:
        scene_kw["rx_positions"] = tuple(tuple(p) for p in cfg["rx_positions"])
    scene = SceneConfig(**scene_kw)
    num_users = cfg.get("num_users", 13)
    users = make_users(num_users, cfg.get("user_seed", args.seed))
    streams, entries = generate_dataset(
        scene, users, trial_plan=cfg.get("trial_plan"), seed=args.seed,
        durations=cfg.get("durations"))

    out = _ensure_out(args.out)
    for stream, entry in zip(streams, entries):
        save_stream(stream, os.path.join(out, entry.path))
    save_manifest(os.path.join(out, "manifest.json"), entries, args.seed,
                  extra={"config": cfg})

    counts: dict[str, int] = {}
    for e in entries:
        counts[e.activity] = counts.get(e.activity, 0) + 1
    for act in ACTIVITIES:
        if act in counts:
            print(f"{act}: {counts[act]} trials")
    print(f"wrote {len(streams)} streams + manifest to {out}")
    return 0


# ---------------------------------------------------------------------------
# preprocess
# ---------------------------------------------------------------------------

def cmd_preprocess(args) -> int:
    manifest_path = args.manifest or os.path.join(args.data or "", "manifest.json")
    if not os.path.exists(manifest_path):
        raise ConfigError(f"manifest not found: {manifest_path}")
    entries, _ = load_manifest(manifest_path)
    base = os.path.dirname(manifest_path)
    by_split: dict[str, list] = {}
    for e in entries:
        by_split.setdefault(e.split, []).append(load_stream(os.path.join(base, e.path)))

    cfg = PreprocessConfig(filter_order=args.filter_order, cutoff=args.cutoff,
                           window_seconds=args.window, hop=args.hop)
    datasets = preprocess.preprocess_splits(by_split, cfg, seed=args.seed,
                                            balance=not args.no_balance)
    out = _ensure_out(args.out)
    for split, ds in sorted(datasets.items()):
        path = os.path.join(out, f"{split}.frames")
        ds.save(path)
        print(f"{split}: {len(ds)} frames of "
              f"{ds.data.shape[1]}x{ds.data.shape[2]} -> {path}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _user_vocab(ds: FrameDataset) -> list[int]:
    users = sorted(int(u) for u in np.unique(ds.user) if u >= 0)
    if not users:
        raise DataError("dataset has no user labels")
    return users


def _targets_for(task: str, ds: FrameDataset, users: list[int]) -> dict[str, np.ndarray]:
    targets = {}
    if task in ("activity", "combined"):
        targets[tasks.HEAD_ACTIVITY] = ds.activity.astype(np.int64)
    if task in ("auth", "combined"):
        index = {u: i for i, u in enumerate(users)}
        unknown = [int(u) for u in np.unique(ds.user) if int(u) not in index]
        if unknown:
            raise DataError(f"users {unknown} not in the training vocabulary")
        targets[tasks.HEAD_IDENTITY] = np.asarray(
            [index[int(u)] for u in ds.user], dtype=np.int64)
    if task in ("track", "combined"):
        if not np.isfinite(ds.coords).all():
            raise DataError("dataset lacks finite coordinate labels")
        targets[tasks.HEAD_COORDS] = tasks.coords_to_norm(ds.coords)
    return targets


def cmd_train(args) -> int:
    train_ds = FrameDataset.load(os.path.join(args.data, "train.frames"))
    val_path = os.path.join(args.data, "val.frames")
    val_ds = FrameDataset.load(val_path) if os.path.exists(val_path) else None

    users = _user_vocab(train_ds)
    spec = tasks.TaskModelSpec(task=args.task, cell=args.cell,
                               hidden_dim=args.hidden, num_layers=args.layers,
                               num_users=len(users))
    model = tasks.build_task_model(spec, train_ds.num_features, seed=args.seed)

    weights = None
    if args.task == "combined":
        weights = tasks.MultiTaskWeights().as_loss_weights()
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                      learning_rate=args.lr, seed=args.seed, loss_weights=weights)
    history = train_model(model, train_ds.data, _targets_for(args.task, train_ds, users),
                          None if val_ds is None else val_ds.data,
                          None if val_ds is None else _targets_for(args.task, val_ds, users),
                          cfg)

    out = _ensure_out(args.out)
    ckpt = os.path.join(out, f"{args.task}_{args.cell}.nnck")
    save_checkpoint(ckpt, model, meta={"task": args.task, "users": users,
                                       "activities": list(ACTIVITIES)})
    hist_path = os.path.join(out, f"{args.task}_{args.cell}_history.csv")
    if history:
        keys = sorted(history[-1].keys(), key=lambda k: (k != "epoch", k))
        with open(hist_path, "w") as f:
            f.write(",".join(keys) + "\n")
            for row in history:
                f.write(",".join(_fmt(row.get(k)) for k in keys) + "\n")
    else:
        with open(hist_path, "w") as f:
            f.write("epoch\n")
    print(f"checkpoint: {ckpt}")
    print(f"history: {hist_path}")
    if history and "val_loss" in history[-1]:
        print(f"final val loss: {history[-1]['val_loss']:.6f}")
    return 0


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.8g}"
    return str(v)


# ---------------------------------------------------------------------------
# eval / infer / robustness / plot
# ---------------------------------------------------------------------------

def _load_members(args) -> tuple[list[tuple[SequenceModel, float]], dict]:
    """--checkpoint or --ensemble ckpt[:weight],ckpt[:weight],..."""
    specs = []
    if args.ensemble:
        for item in args.ensemble.split(","):
            path, _, w = item.partition(":")
            specs.append((path, float(w) if w else 1.0))
    elif args.checkpoint:
        specs.append((args.checkpoint, 1.0))
    else:
        raise ConfigError("provide --checkpoint or --ensemble")
    members = []
    meta = {}
    for path, w in specs:
        if not os.path.exists(path):
            raise ConfigError(f"checkpoint not found: {path}")
        model, m = load_checkpoint(path)
        members.append((model, w))
        meta = meta or m
    return members, meta


def _combined_outputs(members, ds):
    if len(members) == 1:
        return members[0][0].predict_batched(ds.data)
    return tasks.ensemble_outputs(members, ds.data)


def cmd_eval(args) -> int:
    members, meta = _load_members(args)
    ds = FrameDataset.load(args.data)
    outs = _combined_outputs(members, ds)
    report: dict = {}
    if tasks.HEAD_ACTIVITY in outs:
        pred = outs[tasks.HEAD_ACTIVITY].argmax(axis=1)
        report["activity"] = evaluate.classification_metrics(
            pred, ds.activity, NUM_ACTIVITIES).to_dict()
    if tasks.HEAD_IDENTITY in outs:
        users = meta.get("users")
        if not users:
            raise DataError("checkpoint lacks a user vocabulary")
        index = {u: i for i, u in enumerate(users)}
        known = np.asarray([int(u) in index for u in ds.user])
        if not known.any():
            raise DataError("no frames from users in the checkpoint vocabulary")
        true = np.asarray([index[int(u)] for u in ds.user[known]])
        pred = outs[tasks.HEAD_IDENTITY][known].argmax(axis=1)
        report["identity"] = evaluate.classification_metrics(
            pred, true, len(users)).to_dict()
    if tasks.HEAD_COORDS in outs:
        pred_cm = tasks.norm_to_cm(outs[tasks.HEAD_COORDS])
        ce = evaluate.coordinate_mse(pred_cm, ds.coords)
        report["coordinates"] = {"rmse_cm": list(ce.rmse), "mse_cm2": list(ce.mse),
                                 "mae_cm": list(ce.mae)}
    text = json.dumps(report, sort_keys=True, indent=1) + "\n"
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    print(text, end="")
    return 0


def cmd_infer(args) -> int:
    members, meta = _load_members(args)
    ds = FrameDataset.load(args.data)
    users = meta.get("users") or []
    rows = []
    if len(ds):
        outs = _combined_outputs(members, ds)
        n = len(ds)
        preds = tasks._outputs_to_predictions(outs, n)
        for i, p in enumerate(preds):
            row = {"frame": i,
                   "stream_id": ds.stream_ids[ds.source_stream[i]],
                   "start_sample": int(ds.source_start[i])}
            if p.activity_probs is not None:
                cls = tasks.classify_activity(p, args.activity_threshold)
                row["activity"] = "ABSTAIN" if cls is None else ACTIVITIES[cls]
                row["activity_confidence"] = round(p.activity_confidence, 6)
            if p.identity_probs is not None:
                uid = tasks.authenticate(p, args.threshold)
                row["identity"] = "REJECTED" if uid is None else str(
                    users[uid] if users else uid)
                row["identity_confidence"] = round(p.identity_confidence, 6)
            if p.coords is not None:
                row["x_cm"] = round(p.coords[0], 3)
                row["y_cm"] = round(p.coords[1], 3)
            rows.append(row)

    keys: list[str] = []
    for r in rows:
        for k in r:
            if k not in keys:
                keys.append(k)
    if args.format == "json":
        text = "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows)
    else:
        lines = [",".join(keys)] if keys else []
        for r in rows:
            lines.append(",".join(_fmt(r.get(k)) for k in keys))
        text = "\n".join(lines) + ("\n" if lines else "")
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        print(text, end="")
    return 0


def cmd_robustness(args) -> int:
    members, _ = _load_members(args)
    if len(members) != 1:
        raise ConfigError("robustness takes a single checkpoint")
    model = members[0][0]
    seen = FrameDataset.load(args.data)
    unseen = FrameDataset.load(args.unseen)
    head = tasks.HEAD_IDENTITY if tasks.HEAD_IDENTITY in model.heads else tasks.HEAD_ACTIVITY
    thresholds = np.linspace(args.min_threshold, 1.0, args.points)
    rows = tasks.robustness_report(model, seen, unseen, thresholds, head=head)
    lines = ["threshold,seen_rate,unseen_rate"]
    for r in rows:
        lines.append(f"{r['threshold']:.6f},{r['seen_rate']:.6f},{r['unseen_rate']:.6f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    print(text, end="")
    return 0


def cmd_plot(args) -> int:
    members, _ = _load_members(args)
    ds = FrameDataset.load(args.data)
    outs = _combined_outputs(members, ds)
    if tasks.HEAD_COORDS not in outs:
        raise ConfigError("checkpoint has no coordinate head; use a tracking model")
    coords = tasks.norm_to_cm(outs[tasks.HEAD_COORDS])
    out = _ensure_out(args.out)
    wrote = 0
    for path_id, line in sorted(WALK_PATHS.items()):
        mask = ds.activity == ACTIVITIES.index(f"walk{path_id}")
        if not mask.any():
            continue
        points = coords[mask]
        try:
            fit = evaluate.fit_trajectory(points)
        except DataError as e:
            raise DataError(f"walk path {path_id}: {e}") from e
        svg = evaluate.trajectory_svg(fit, ground_truth_line=line,
                                      title=f"walk path {path_id}")
        with open(os.path.join(out, f"path{path_id}.svg"), "w") as f:
            f.write(svg)
        with open(os.path.join(out, f"path{path_id}.csv"), "w") as f:
            f.write(evaluate.trajectory_csv(fit))
        wrote += 1
    print(f"wrote trajectory figures for {wrote} paths to {out}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sensekit",
                                description="Passive Wi-Fi CSI sensing toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate synthetic CSI streams + manifest")
    s.add_argument("--config", help="scene/user/trial-plan JSON")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("preprocess", help="streams -> frame datasets per split")
    s.add_argument("--manifest", help="manifest.json from simulate")
    s.add_argument("--data", help="directory containing manifest.json")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--filter-order", type=int, default=10)
    s.add_argument("--cutoff", type=float, default=200.0)
    s.add_argument("--window", type=float, default=0.8)
    s.add_argument("--hop", type=int, default=80)
    s.add_argument("--no-balance", action="store_true")
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("train", help="train a task network")
    s.add_argument("--data", required=True, help="directory with {train,val}.frames")
    s.add_argument("--task", choices=tasks.TASKS, default="activity")
    s.add_argument("--cell", choices=sorted(CELLS), default="gru")
    s.add_argument("--epochs", type=int, default=60)
    s.add_argument("--hidden", type=int, default=128)
    s.add_argument("--layers", type=int, default=2)
    s.add_argument("--batch-size", type=int, default=64)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    for name, fn in (("eval", cmd_eval), ("infer", cmd_infer)):
        s = sub.add_parser(name)
        s.add_argument("--checkpoint")
        s.add_argument("--ensemble", help="ckpt[:weight],ckpt[:weight],...")
        s.add_argument("--data", required=True, help="a .frames file")
        s.add_argument("--out")
        s.add_argument("--format", choices=["csv", "json"], default="csv")
        s.add_argument("--threshold", type=float, default=0.999,
                       help="authentication confidence margin")
        s.add_argument("--activity-threshold", type=float, default=0.75)
        s.set_defaults(func=fn)

    s = sub.add_parser("robustness", help="confidence threshold sweep")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--ensemble")
    s.add_argument("--data", required=True, help="seen-user .frames file")
    s.add_argument("--unseen", required=True, help="unseen-user .frames file")
    s.add_argument("--points", type=int, default=20)
    s.add_argument("--min-threshold", type=float, default=0.05)
    s.add_argument("--out")
    s.set_defaults(func=cmd_robustness)

    s = sub.add_parser("plot", help="trajectory SVG/CSV per walking path")
    s.add_argument("--checkpoint")
    s.add_argument("--ensemble")
    s.add_argument("--data", required=True, help=".frames file with walk frames")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
