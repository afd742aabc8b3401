"""Teacher-forced one-step NLL training with Adam."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diffcore as dc
from .dataio import Window
from .diffcore import AdamConfig, ParamStore, adam_step, clip_grad_norm
from .predictor import LocPredictor, ModelConfig, ego_inputs, init_params
from .trajkit import to_ego

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    epochs: int = 150
    adam: AdamConfig = field(default_factory=AdamConfig)
    seed: int = 0
    checkpoint_every: int = 0
    all_future_steps: bool = True
    clip_norm: float | None = None

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")


@dataclass
class TrainReport:
    train_nll: list[float] = field(default_factory=list)
    val_nll: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    best_epoch: int = -1

    @property
    def epochs(self) -> int:
        return len(self.train_nll)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_nll", "val_nll"])
            for i, (a, b) in enumerate(zip(self.train_nll, self.val_nll), start=1):
                w.writerow([i, repr(a), repr(b)])

    def write_timing(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "seconds"])
            for i, s in enumerate(self.seconds, start=1):
                w.writerow([i, f"{s:.3f}"])


# ---------------------------------------------------------------------------
# one-step samples


def instances(windows: list[Window], t_h: int, all_future_steps: bool = True) -> np.ndarray:
    """(window, offset, target) triples; offset o uses history [o, o + t_h) and truth o + t_h."""
    out = []
    for wi, w in enumerate(windows):
        M, T = w.positions.shape[:2]
        offsets = range(T - t_h) if all_future_steps else range(min(1, T - t_h))
        for o in offsets:
            for m in range(M):
                out.append((wi, o, m))
    return np.array(out, dtype=np.int64).reshape(-1, 3)


def build_batch(windows: list[Window], items: np.ndarray, t_h: int):
    """Padded ego-frame inputs for a set of instances."""
    B = len(items)
    targets = np.empty((B, t_h, 2))
    truths = np.empty((B, 2))
    ctx_list = []
    for i, (wi, o, m) in enumerate(items):
        pos = windows[wi].positions
        tgt, ctx, _, origin, heading = ego_inputs(pos[:, o:o + t_h], [m])
        targets[i] = tgt[0]
        truths[i] = to_ego(pos[m, o + t_h], origin[0], heading[0])
        ctx_list.append(ctx[0])
    C = max(1, max(c.shape[0] for c in ctx_list))
    context = np.zeros((B, C, t_h, 2))
    mask = np.zeros((B, C), dtype=bool)
    for i, c in enumerate(ctx_list):
        context[i, :c.shape[0]] = c
        mask[i, :c.shape[0]] = True
    return targets, context, mask, truths


def step_loss(window: Window, predictor: LocPredictor, offset: int = 0) -> dc.Tensor:
    """Summed NLL of every pedestrian's true next location at one offset (teacher forced)."""
    t_h = predictor.config.t_h
    pos = window.positions
    if pos.shape[1] < offset + t_h + 1:
        raise ValueError(f"window of length {pos.shape[1]} too short for offset {offset}")
    items = np.array([(0, offset, m) for m in range(pos.shape[0])])
    tgt, ctx, mask, truth = build_batch([window], items, t_h)
    return dc.scale(dc.reduce_sum(predictor.log_density(tgt, ctx, mask, truth)), -1.0)


def window_loss(window: Window, predictor: LocPredictor, all_future_steps: bool = True) -> dc.Tensor:
    t_h = predictor.config.t_h
    n = window.positions.shape[1] - t_h if all_future_steps else 1
    items = np.array([(0, o, m) for o in range(n) for m in range(window.positions.shape[0])])
    tgt, ctx, mask, truth = build_batch([window], items, t_h)
    return dc.scale(dc.reduce_sum(predictor.log_density(tgt, ctx, mask, truth)), -1.0)


def mean_nll(windows: list[Window], predictor: LocPredictor, all_future_steps: bool = True,
             chunk: int = 512) -> float:
    items = instances(windows, predictor.config.t_h, all_future_steps)
    if len(items) == 0:
        return float("nan")
    total = 0.0
    with dc.no_grad():
        for i in range(0, len(items), chunk):
            batch = build_batch(windows, items[i:i + chunk], predictor.config.t_h)
            total -= float(np.sum(predictor.log_density(*batch).data))
    return total / len(items)


# ---------------------------------------------------------------------------
# loop


def train_epoch(windows, predictor: LocPredictor, cfg: TrainConfig, epoch: int) -> float:
    """One pass over shuffled instances; returns the mean pre-update instance NLL."""
    t_h = predictor.config.t_h
    items = instances(windows, t_h, cfg.all_future_steps)
    order = np.random.default_rng([cfg.seed, epoch]).permutation(len(items))
    store = predictor.params
    store.zero_grad()
    total = 0.0
    for start in range(0, len(items), cfg.batch_size):
        batch = build_batch(windows, items[order[start:start + cfg.batch_size]], t_h)
        nll = dc.scale(dc.reduce_sum(predictor.log_density(*batch)), -1.0)
        value = float(nll.data)
        if not np.isfinite(value):
            raise FloatingPointError(f"non-finite training loss at epoch {epoch + 1}")
        total += value
        dc.scale(nll, 1.0 / len(batch[0])).backward()
        if cfg.clip_norm is not None:
            clip_grad_norm(store, cfg.clip_norm)
        adam_step(store, cfg.adam)
    return total / len(items)


def train(windows: list[Window], cfg: TrainConfig, model: ModelConfig | None = None,
          val_windows: list[Window] | None = None, out_dir=None, params: ParamStore | None = None,
          start_epoch: int = 0, report: TrainReport | None = None) -> tuple[ParamStore, TrainReport]:
    """Train from scratch, or resume from ``params`` at ``start_epoch``.

    Returns the parameters with the lowest validation NLL (training NLL when
    no validation windows are given) and the per-epoch report.
    """
    if not windows:
        raise ValueError("empty training set")
    model = model or ModelConfig()
    store = params if params is not None else init_params(model, np.random.default_rng(cfg.seed))
    predictor = LocPredictor(model, store)
    report = report or TrainReport()
    best, best_score = None, np.inf
    if report.best_epoch >= 0:
        best_score = report.val_nll[report.best_epoch - 1]
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    for epoch in range(start_epoch, cfg.epochs):
        t0 = time.perf_counter()
        train_nll = train_epoch(windows, predictor, cfg, epoch)
        val_nll = mean_nll(val_windows, predictor, cfg.all_future_steps) if val_windows else train_nll
        report.train_nll.append(train_nll)
        report.val_nll.append(val_nll)
        report.seconds.append(time.perf_counter() - t0)
        log.info("epoch %d train_nll %.4f val_nll %.4f", epoch + 1, train_nll, val_nll)
        if val_nll < best_score:
            best_score, best = val_nll, store.copy()
            report.best_epoch = epoch + 1
            if out is not None:
                best.save(out / "best.bin")
        if out is not None and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            store.save(out / f"ckpt_epoch{epoch + 1}.bin")
    if out is not None:
        report.write_csv(out / "report.csv")
        report.write_timing(out / "timing.csv")
    return (best if best is not None else store), report
