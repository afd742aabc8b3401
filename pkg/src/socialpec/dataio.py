"""ETH/UCY-style annotation files, sliding windows and leave-one-out splits.

Annotation files are whitespace-delimited text with four numeric columns per
line: ``frame_id ped_id x y`` (meters, world frame).
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .trajkit import DEFAULT_DT, Scene

DATASET_NAMES = ("ETH", "Hotel", "Univ", "Zara1", "Zara2")


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class AnnotationFile:
    frame: np.ndarray  # (R,) int
    ped: np.ndarray    # (R,) int
    xy: np.ndarray     # (R, 2)
    name: str = ""

    def __len__(self) -> int:
        return self.frame.shape[0]

    @property
    def frames(self) -> np.ndarray:
        return np.unique(self.frame)

    @property
    def pedestrians(self) -> np.ndarray:
        return np.unique(self.ped)

    def to_text(self) -> str:
        return "".join(f"{f}\t{p}\t{x!r}\t{y!r}\n" for f, p, (x, y) in
                       zip(self.frame.tolist(), self.ped.tolist(), self.xy.tolist()))


def _as_int(tok: str) -> int:
    v = float(tok)
    if not v.is_integer():
        raise ValueError(f"{tok!r} is not an integer id")
    return int(v)


def parse_annotations(text: str, name: str = "") -> AnnotationFile:
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise DataError(f"{name or '<text>'}:{lineno}: expected 4 columns, got {len(parts)}")
        try:
            rows.append((_as_int(parts[0]), _as_int(parts[1]), float(parts[2]), float(parts[3])))
        except ValueError as exc:
            raise DataError(f"{name or '<text>'}:{lineno}: {exc}") from None
        if not np.isfinite(rows[-1][2:]).all():
            raise DataError(f"{name or '<text>'}:{lineno}: non-finite coordinate")
    if not rows:
        raise DataError(f"{name or '<text>'}: no annotation rows")
    rows.sort(key=lambda r: (r[0], r[1]))
    frame = np.array([r[0] for r in rows], dtype=np.int64)
    ped = np.array([r[1] for r in rows], dtype=np.int64)
    dup = (np.diff(frame) == 0) & (np.diff(ped) == 0)
    if dup.any():
        i = int(np.argmax(dup))
        raise DataError(f"{name or '<text>'}: duplicate annotation for frame {frame[i]}, pedestrian {ped[i]}")
    xy = np.array([r[2:] for r in rows], dtype=np.float64)
    return AnnotationFile(frame, ped, xy, name)


def load_annotations(path) -> AnnotationFile:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"annotation file not found: {path}")
    return parse_annotations(path.read_text(), name=str(path))


@dataclass(frozen=True)
class Window:
    scene: Scene
    dataset: str
    start_frame: int
    ped_ids: tuple[int, ...] = ()

    @property
    def positions(self) -> np.ndarray:
        return self.scene.positions


def frame_step(frames: np.ndarray) -> int:
    """Most common spacing between consecutive annotated frames (ties -> smallest)."""
    if len(frames) < 2:
        return 1
    vals, counts = np.unique(np.diff(frames), return_counts=True)
    return int(vals[np.argmax(counts)])


def make_windows(ann: AnnotationFile, t_h: int = 8, t_pred: int = 12, stride: int = 1,
                 dataset: str | None = None, dt: float = DEFAULT_DT) -> list[Window]:
    """Sliding windows of ``t_h + t_pred`` consecutive annotated frames.

    A pedestrian is included only if annotated in every frame of the window.
    Windows spanning a gap in the frame sequence (a spacing larger than the
    file's modal frame step) are skipped.
    """
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    length = t_h + t_pred
    frames = ann.frames
    peds = ann.pedestrians
    fi = np.searchsorted(frames, ann.frame)
    pi = np.searchsorted(peds, ann.ped)
    grid = np.full((len(frames), len(peds), 2), np.nan)
    grid[fi, pi] = ann.xy
    present = ~np.isnan(grid[..., 0])
    tag = dataset if dataset is not None else ann.name
    step = frame_step(frames)
    out = []
    for start in range(0, len(frames) - length + 1, stride):
        if frames[start + length - 1] - frames[start] != (length - 1) * step:
            continue
        full = present[start:start + length].all(axis=0)
        if not full.any():
            continue
        pos = np.transpose(grid[start:start + length, full], (1, 0, 2))
        out.append(Window(Scene(pos, dt=dt, start_t=start), tag, int(frames[start]),
                          tuple(int(p) for p in peds[full])))
    return out


def read_manifest(path) -> dict[str, Path]:
    """``name path`` per line; relative paths resolve against the manifest's directory."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"dataset manifest not found: {path}")
    out = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = re.split(r"\s+", line, maxsplit=1)
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected 'name path'")
        p = Path(parts[1])
        out[parts[0]] = p if p.is_absolute() else path.parent / p
    return out


def load_manifest_windows(path, t_h: int = 8, t_pred: int = 12, stride: int = 1) -> dict[str, list[Window]]:
    return {name: make_windows(load_annotations(p), t_h, t_pred, stride, dataset=name)
            for name, p in read_manifest(path).items()}


@dataclass(frozen=True)
class SplitPlan:
    held_out: str
    train: list[Window]
    val: list[Window]
    test: list[Window]


def leave_one_out(datasets: dict[str, list[Window]], held_out: str, val_fraction: float = 0.1,
                  rng: np.random.Generator | None = None) -> SplitPlan:
    if held_out not in datasets:
        raise DataError(f"held-out dataset {held_out!r} not among {sorted(datasets)}")
    if not 0 <= val_fraction < 1:
        raise ValueError(f"val_fraction must lie in [0, 1), got {val_fraction}")
    rng = np.random.default_rng(0) if rng is None else rng
    pool = [w for name in sorted(datasets) if name != held_out for w in datasets[name]]
    order = rng.permutation(len(pool))
    n_val = int(round(val_fraction * len(pool)))
    val = [pool[i] for i in order[:n_val]]
    train = [pool[i] for i in order[n_val:]]
    return SplitPlan(held_out, train, val, list(datasets[held_out]))
