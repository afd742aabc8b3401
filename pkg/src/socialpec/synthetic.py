"""Synthetic constant-velocity walkers, for smoke tests and demos."""
from __future__ import annotations

import numpy as np

from .dataio import AnnotationFile, Window
from .trajkit import DEFAULT_DT, Scene


def linear_walkers(n_windows: int, rng: np.random.Generator, max_peds: int = 3, length: int = 20,
                   speed=(0.8, 1.6), jitter: float = 0.01, arena: float = 8.0,
                   dt: float = DEFAULT_DT, dataset: str = "synthetic") -> list[Window]:
    """Windows of pedestrians walking straight at constant speed plus Gaussian position noise."""
    out = []
    for i in range(n_windows):
        M = int(rng.integers(1, max_peds + 1))
        start = rng.uniform(-arena / 2, arena / 2, (M, 2))
        heading = rng.uniform(-np.pi, np.pi, M)
        v = rng.uniform(*speed, M)[:, None] * np.stack([np.cos(heading), np.sin(heading)], axis=-1)
        t = np.arange(length)[None, :, None] * dt
        pos = start[:, None, :] + t * v[:, None, :] + rng.normal(0.0, jitter, (M, length, 2))
        out.append(Window(Scene(pos, dt=dt, start_t=i * length), dataset, i * length * 10, tuple(range(M))))
    return out


def to_annotations(windows: list[Window], frame_step: int = 10) -> AnnotationFile:
    """Lay windows end to end in one annotation file with unique pedestrian ids."""
    frames, peds, xy = [], [], []
    next_id = 1
    frame0 = 0
    for w in windows:
        M, T = w.positions.shape[:2]
        for m in range(M):
            for t in range(T):
                frames.append(frame0 + t * frame_step)
                peds.append(next_id + m)
                xy.append(w.positions[m, t])
        next_id += M
        frame0 += (T + 1) * frame_step
    order = np.lexsort((peds, frames))
    return AnnotationFile(np.array(frames)[order], np.array(peds)[order], np.array(xy)[order])
