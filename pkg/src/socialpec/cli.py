"""Command-line entry point: train, eval, predict and patterns.

Configuration precedence is built-in defaults < ``--config`` JSON < flags.
Every command writes ``runmanifest.json`` next to its artifacts.

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import sys
from contextlib import nullcontext
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .dataio import DataError, leave_one_out, load_annotations, load_manifest_windows, make_windows, read_manifest
from .diffcore import AdamConfig, ParamStore
from .evalkit import best_of_n, evaluate, evaluate_linear, format_table, write_reports_csv
from .pec import MotionPatternBank, export_bank_csv, pec_forward
from .predictor import LocPredictor, ModelConfig, check_params, init_params, traj_predict
from .svg import render_patterns, render_rollouts
from .train import TrainConfig, train
from .trajkit import Scene, convert

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("socialpec")

DEFAULTS = {
    "seed": 0,
    "model": ModelConfig().to_dict(),
    "train": {"epochs": 150, "batch_size": 64, "learning_rate": 1e-3, "clip_norm": None,
              "all_future_steps": True, "checkpoint_every": 0, "val_fraction": 0.1},
    "data": {"stride": 1},
    "eval": {"samples": 20, "mode": "joint"},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# configuration and provenance


def merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _read_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise DataError(f"{path}: expected a JSON object")
    return data


def _flag_overrides(args) -> dict:
    """Nested overrides for every flag the user actually gave."""
    table = {
        "seed": ("seed",), "epochs": ("train", "epochs"), "batch_size": ("train", "batch_size"),
        "lr": ("train", "learning_rate"), "clip_norm": ("train", "clip_norm"),
        "checkpoint_every": ("train", "checkpoint_every"), "val_fraction": ("train", "val_fraction"),
        "stride": ("data", "stride"), "samples": ("eval", "samples"), "mode": ("eval", "mode"),
        "K": ("model", "k"),
    }
    out: dict = {}
    for attr, path in table.items():
        v = getattr(args, attr, None)
        if v is None:
            continue
        node = out
        for key in path[:-1]:
            node = node.setdefault(key, {})
        node[path[-1]] = v
    return out


def resolve_config(args, inherited: dict | None = None) -> dict:
    cfg = merge(DEFAULTS, inherited or {})
    if getattr(args, "config", None):
        cfg = merge(cfg, _read_json(args.config))
    return merge(cfg, _flag_overrides(args))


def model_config(cfg: dict) -> ModelConfig:
    try:
        return ModelConfig.from_dict(cfg["model"])
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid model configuration: {exc}") from None


def git_blob_hash(path) -> str:
    """Content hash as computed by ``git hash-object``."""
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    dataset_manifest: str | None = None
    inputs: dict[str, str] = field(default_factory=dict)

    def add_input(self, path) -> None:
        self.inputs[str(path)] = git_blob_hash(path)

    @property
    def inputs_hash(self) -> str:
        h = hashlib.sha1()
        for k in sorted(self.inputs):
            h.update(f"{k}\0{self.inputs[k]}\n".encode())
        return h.hexdigest()

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / "runmanifest.json"
        body = {"command": self.command, "config": self.config, "seed": self.seed,
                "dataset_manifest": self.dataset_manifest, "inputs": self.inputs,
                "inputs_hash": self.inputs_hash}
        path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
        return path


def _manifest_inputs(run: RunManifest, manifest) -> None:
    paths = read_manifest(manifest)
    run.add_input(manifest)
    for p in paths.values():
        if not p.is_file():
            raise DataError(f"dataset file not found: {p}")
        run.add_input(p)


def _load_checkpoint(path, model: ModelConfig) -> ParamStore:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"checkpoint not found: {path}")
    try:
        store = ParamStore.load(path)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    try:
        check_params(model, store)
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: {exc.args[0]}") from None
    return store


def _inherited_config(checkpoint) -> dict:
    """Model section of the run manifest stored beside a checkpoint, if any."""
    if checkpoint is None:
        return {}
    sibling = Path(checkpoint).parent / "runmanifest.json"
    if not sibling.is_file():
        return {}
    model = _read_json(sibling).get("config", {}).get("model")
    return {"model": model} if model else {}


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    model = model_config(cfg)
    tc = cfg["train"]
    out = _out_dir(args.out)
    run = RunManifest("train", cfg, int(cfg["seed"]), str(args.manifest))
    _manifest_inputs(run, args.manifest)
    datasets = load_manifest_windows(args.manifest, model.t_h, model.t_pred, int(cfg["data"]["stride"]))
    plan = leave_one_out(datasets, args.held_out, float(tc["val_fraction"]), np.random.default_rng(cfg["seed"]))
    if not plan.train:
        raise DataError(f"no training windows outside {args.held_out}")
    tcfg = TrainConfig(batch_size=int(tc["batch_size"]), epochs=int(tc["epochs"]),
                       adam=AdamConfig(learning_rate=float(tc["learning_rate"])), seed=int(cfg["seed"]),
                       checkpoint_every=int(tc["checkpoint_every"]), all_future_steps=bool(tc["all_future_steps"]),
                       clip_norm=None if tc["clip_norm"] is None else float(tc["clip_norm"]))
    params = None
    if args.resume:
        params = _load_checkpoint(args.resume, model)
        run.add_input(args.resume)
    log.info("held out %s: %d train / %d val windows", args.held_out, len(plan.train), len(plan.val))
    _, report = train(plan.train, tcfg, model, plan.val or None, out_dir=out, params=params,
                      start_epoch=args.start_epoch)
    run.write(out)
    print(f"trained {report.epochs} epochs; best epoch {report.best_epoch} "
          f"val_nll {min(report.val_nll):.4f}; artifacts in {out}")
    return EXIT_OK


def _rollout_fn(predictor: LocPredictor, samples: int, rng: np.random.Generator):
    def rollouts(window):
        hist = Scene(window.positions[:, :predictor.config.t_h], dt=window.scene.dt)
        return [r.predicted for r in traj_predict(hist, predictor, rng, samples)]
    return rollouts


def cmd_eval(args) -> int:
    if not args.linear and not args.checkpoint:
        raise UsageError("eval needs --checkpoint or --linear")
    cfg = resolve_config(args, {} if args.linear else _inherited_config(args.checkpoint))
    model = model_config(cfg)
    out = _out_dir(args.out)
    run = RunManifest("eval", cfg, int(cfg["seed"]), str(args.manifest))
    _manifest_inputs(run, args.manifest)
    datasets = load_manifest_windows(args.manifest, model.t_h, model.t_pred, int(cfg["data"]["stride"]))
    names = args.held_out or sorted(datasets)
    for n in names:
        if n not in datasets:
            raise DataError(f"dataset {n!r} not in manifest {args.manifest}")
    reports = []
    if args.linear:
        reports = [evaluate_linear(datasets[n], n, model.t_h) for n in names]
        label = "Linear"
    else:
        predictor = LocPredictor(model, _load_checkpoint(args.checkpoint, model))
        run.add_input(args.checkpoint)
        rng = np.random.default_rng(cfg["seed"])
        n_samples = int(cfg["eval"]["samples"])
        for n in names:
            reports.append(evaluate(datasets[n], _rollout_fn(predictor, n_samples, rng), n, model.t_h,
                                    cfg["eval"]["mode"]))
        label = "This run"
    write_reports_csv(reports, out / "metrics.csv")
    table = format_table(reports, label)
    (out / "metrics.txt").write_text(table)
    run.write(out)
    print(table)
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg = resolve_config(args, _inherited_config(args.checkpoint))
    model = model_config(cfg)
    out = _out_dir(args.out)
    run = RunManifest("predict", cfg, int(cfg["seed"]))
    predictor = LocPredictor(model, _load_checkpoint(args.checkpoint, model))
    ann = load_annotations(args.scene)
    run.add_input(args.checkpoint)
    run.add_input(args.scene)
    # non-overlapping scenes unless a stride is given explicitly
    stride = int(cfg["data"]["stride"]) if args.stride is not None else model.t_h + model.t_pred
    windows = make_windows(ann, model.t_h, model.t_pred, stride)
    has_truth = bool(windows)
    if not windows:
        windows = make_windows(ann, model.t_h, 0, model.t_h)
    if not windows:
        raise DataError(f"{args.scene}: no pedestrian is present for {model.t_h} consecutive frames")
    if args.max_scenes is not None:
        windows = windows[:args.max_scenes]
    rng = np.random.default_rng(cfg["seed"])
    n = int(cfg["eval"]["samples"])
    t_h = model.t_h
    with open(out / "rollouts.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scene_id", "sample_id", "ped_id", "t", "x", "y", "is_observed"])
        for sid, win in enumerate(windows):
            obs = win.positions[:, :t_h]
            samples = [r.predicted for r in traj_predict(Scene(obs, dt=win.scene.dt), predictor, rng, n)]
            for m, pid in enumerate(win.ped_ids):
                for t in range(t_h):
                    w.writerow([sid, -1, pid, t, repr(float(obs[m, t, 0])), repr(float(obs[m, t, 1])), 1])
            for k, s in enumerate(samples):
                for m, pid in enumerate(win.ped_ids):
                    for t in range(model.t_pred):
                        w.writerow([sid, k, pid, t_h + t, repr(float(s[m, t, 0])), repr(float(s[m, t, 1])), 0])
            truth = win.positions[:, t_h:] if has_truth else None
            best = None
            if truth is not None:
                ades = [best_of_n([s], truth)[0] for s in samples]
                best = int(np.argmin(ades))
            svg = render_rollouts(obs, samples, truth, best, title=f"scene {sid} (frame {win.start_frame})")
            (out / f"scene{sid}.svg").write_text(svg)
    run.write(out)
    print(f"wrote {len(windows)} scene(s) x {n} sample(s) to {out}")
    return EXIT_OK


def cmd_patterns(args) -> int:
    cfg = resolve_config(args, _inherited_config(args.checkpoint))
    model = model_config(cfg)
    out = _out_dir(args.out)
    run = RunManifest("patterns", cfg, int(cfg["seed"]))
    if args.checkpoint:
        store = _load_checkpoint(args.checkpoint, model)
        run.add_input(args.checkpoint)
    else:
        store = init_params(model, np.random.default_rng(cfg["seed"]))
    prefix = args.which
    bank = MotionPatternBank(store[f"{prefix}.pec.P"], store[f"{prefix}.pec.scale"], store[f"{prefix}.pec.bias"])
    export_bank_csv(bank, out / "patterns.csv")
    label = "context" if prefix == "ctx" else "target"
    (out / "patterns.svg").write_text(render_patterns(bank.patterns, title=f"{label} patterns"))
    if args.match:
        run.add_input(args.match)
        psi, ctx, tgt = match_scores(args.match, bank, model.t_h, args.window, args.target, args.segment, prefix)
        with open(out / "match.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pattern_id", "psi"])
            for j, v in enumerate(psi):
                w.writerow([j, repr(float(v))])
        (out / "match.svg").write_text(render_patterns(bank.patterns, psi, ctx, tgt,
                                                       title=f"{label} pattern response"))
    run.write(out)
    print(f"wrote {len(bank.patterns)} {label} patterns to {out}")
    return EXIT_OK


def match_scores(scene_path, bank: MotionPatternBank, t_h: int, window: int, target: int, segment: int,
                 which: str):
    """PEC response of every pattern at one segment, in the target's ego frame.

    Context banks score each context pedestrian and keep the maximum over them;
    target banks score the target's own history.
    """
    wins = make_windows(load_annotations(scene_path), t_h, 0, 1)
    if not wins:
        raise DataError(f"{scene_path}: no pedestrian is present for {t_h} consecutive frames")
    if not 0 <= window < len(wins):
        raise DataError(f"{scene_path}: window {window} out of range (0..{len(wins) - 1})")
    scene = wins[window].scene
    if not 0 <= target < scene.num_pedestrians:
        raise DataError(f"{scene_path}: target {target} out of range (0..{scene.num_pedestrians - 1})")
    ego, _ = convert(scene, target)
    pos = ego.positions
    tgt = pos[target]
    ctx = np.delete(pos, target, axis=0)
    if which == "ctx":
        if len(ctx) == 0:
            raise DataError(f"{scene_path}: window {window} has no context pedestrians to match")
        psi = pec_forward(ctx, bank).data[:, segment].max(axis=0)
    else:
        psi = pec_forward(tgt, bank).data[segment]
    return psi, ctx, tgt


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="seed for init, shuffling and sampling (default 0)")
    common.add_argument("--threads", type=int, default=None, help="cap on numeric library threads")
    common.add_argument("--config", help="JSON file overriding built-in defaults")
    common.add_argument("--K", type=int, help="mixture components in the head (default 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="socialpec", description="Pattern-extraction convolution trajectory predictor")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", parents=[common], help="leave-one-out training")
    t.add_argument("--manifest", required=True, help="dataset manifest ('name path' per line)")
    t.add_argument("--held-out", required=True, help="dataset excluded from training")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--clip-norm", type=float)
    t.add_argument("--stride", type=int, help="window stride in frames")
    t.add_argument("--val-fraction", type=float)
    t.add_argument("--checkpoint-every", type=int)
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--start-epoch", type=int, default=0, help="epochs already completed by --resume")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="best-of-N ADE/FDE on held-out datasets")
    e.add_argument("--manifest", required=True)
    e.add_argument("--checkpoint")
    e.add_argument("--linear", action="store_true", help="evaluate the constant-velocity baseline")
    e.add_argument("--held-out", action="append", help="dataset(s) to evaluate (default: all)")
    e.add_argument("--samples", type=int)
    e.add_argument("--mode", choices=["joint", "independent"])
    e.add_argument("--stride", type=int)
    e.add_argument("--out", default="eval_out")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("predict", parents=[common], help="sample rollouts for a scene file")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--scene", required=True, help="annotation file (frame ped x y)")
    r.add_argument("--samples", type=int)
    r.add_argument("--stride", type=int, help="window stride (default: non-overlapping)")
    r.add_argument("--max-scenes", type=int)
    r.add_argument("--out", default="predict_out")
    r.set_defaults(func=cmd_predict)

    q = sub.add_parser("patterns", parents=[common], help="export and render a pattern bank")
    q.add_argument("--checkpoint", help="trained checkpoint (default: freshly initialized bank)")
    q.add_argument("--which", choices=["ctx", "tgt"], default="ctx")
    q.add_argument("--match", help="scene file: colour patterns by their response")
    q.add_argument("--window", type=int, default=0, help="window index within --match scene")
    q.add_argument("--target", type=int, default=0, help="target pedestrian index within the window")
    q.add_argument("--segment", type=int, default=-1, help="segment index (default: most recent)")
    q.add_argument("--out", default="patterns_out")
    q.set_defaults(func=cmd_patterns)
    return p


def _thread_limit(n):
    if n is None:
        return nullcontext()
    if n < 1:
        raise UsageError(f"--threads must be >= 1, got {n}")
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        with _thread_limit(args.threads):
            return args.func(args)
    except UsageError as exc:
        print(f"socialpec: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"socialpec: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FloatingPointError as exc:
        print(f"socialpec: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
