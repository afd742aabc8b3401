"""Trajectory/scene containers and the egocentric coordinate transform.

The ego frame of a target pedestrian puts its last observed position at the
origin and rotates the world so that it faces +x. Array helpers work on any
leading batch shape; the dataclass wrappers are for single scenes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_DT = 0.4


class InsufficientHistory(ValueError):
    pass


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=np.float64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class State:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite state ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray  # (T, 2)
    start_t: int = 0

    def __post_init__(self):
        arr = _frozen(self.states)
        if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 1:
            raise ValueError(f"trajectory must have shape (T>=1, 2), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("trajectory contains non-finite states")
        object.__setattr__(self, "states", arr)

    def __len__(self) -> int:
        return self.states.shape[0]


@dataclass(frozen=True)
class Scene:
    """M pedestrians over a common timestep range, stored as an (M, T, 2) array."""

    positions: np.ndarray
    dt: float = DEFAULT_DT
    start_t: int = 0

    def __post_init__(self):
        arr = _frozen(self.positions)
        if arr.ndim != 3 or arr.shape[2] != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"scene must have shape (M>=1, T>=1, 2), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("scene contains non-finite states")
        object.__setattr__(self, "positions", arr)

    @classmethod
    def from_trajectories(cls, trajs: list[Trajectory], dt: float = DEFAULT_DT) -> "Scene":
        lengths = {len(t) for t in trajs}
        starts = {t.start_t for t in trajs}
        if len(lengths) != 1 or len(starts) != 1:
            raise ValueError("all trajectories in a scene must cover the same timestep range")
        return cls(np.stack([t.states for t in trajs]), dt=dt, start_t=trajs[0].start_t)

    @property
    def num_pedestrians(self) -> int:
        return self.positions.shape[0]

    @property
    def length(self) -> int:
        return self.positions.shape[1]

    @property
    def trajectories(self) -> list[Trajectory]:
        return [Trajectory(p, self.start_t) for p in self.positions]

    def window(self, start: int, stop: int) -> "Scene":
        return Scene(self.positions[:, start:stop], self.dt, self.start_t + start)


@dataclass(frozen=True)
class EgoFrame:
    origin: State
    heading: float

    def __post_init__(self):
        if not -math.pi < self.heading <= math.pi:
            raise ValueError(f"heading {self.heading} outside (-pi, pi]")


# ---------------------------------------------------------------------------
# array helpers


def headings(traj: np.ndarray) -> np.ndarray:
    """Heading of the last nonzero displacement of each (..., T, 2) trajectory; 0 if none."""
    traj = np.asarray(traj, dtype=np.float64)
    if traj.shape[-2] < 2:
        raise InsufficientHistory("insufficient history: need at least 2 states for a heading")
    disp = np.diff(traj, axis=-2)
    moving = np.any(disp != 0.0, axis=-1)
    n = disp.shape[-2]
    last = n - 1 - np.argmax(moving[..., ::-1], axis=-1)
    step = np.take_along_axis(disp, last[..., None, None], axis=-2)[..., 0, :]
    h = np.arctan2(step[..., 1], step[..., 0])
    # atan2 can return -pi for a (-x, -0.0) step; the frame convention is (-pi, pi]
    h = np.where(h == -np.pi, np.pi, h)
    return np.where(np.any(moving, axis=-1), h, 0.0)


def to_ego(points: np.ndarray, origin: np.ndarray, heading: np.ndarray) -> np.ndarray:
    """Map world points (..., *, 2) into frames given by origin (..., 2) and heading (...)."""
    points = np.asarray(points, dtype=np.float64)
    origin = np.asarray(origin, dtype=np.float64)
    heading = np.asarray(heading, dtype=np.float64)
    extra = points.ndim - origin.ndim
    o = origin.reshape(origin.shape[:-1] + (1,) * extra + (2,))
    c = np.cos(heading).reshape(heading.shape + (1,) * extra)
    s = np.sin(heading).reshape(heading.shape + (1,) * extra)
    d = points - o
    return np.stack([c * d[..., 0] + s * d[..., 1], -s * d[..., 0] + c * d[..., 1]], axis=-1)


def from_ego(points: np.ndarray, origin: np.ndarray, heading: np.ndarray) -> np.ndarray:
    """Inverse of :func:`to_ego`."""
    points = np.asarray(points, dtype=np.float64)
    origin = np.asarray(origin, dtype=np.float64)
    heading = np.asarray(heading, dtype=np.float64)
    extra = points.ndim - origin.ndim
    o = origin.reshape(origin.shape[:-1] + (1,) * extra + (2,))
    c = np.cos(heading).reshape(heading.shape + (1,) * extra)
    s = np.sin(heading).reshape(heading.shape + (1,) * extra)
    x, y = points[..., 0], points[..., 1]
    return np.stack([c * x - s * y, s * x + c * y], axis=-1) + o


# ---------------------------------------------------------------------------
# object-level operations


def ego_frame_of(traj: Trajectory) -> EgoFrame:
    states = traj.states if isinstance(traj, Trajectory) else np.asarray(traj, dtype=np.float64)
    if states.shape[0] < 2:
        raise InsufficientHistory("insufficient history: need at least 2 states for a heading")
    h = float(headings(states))
    return EgoFrame(State(*map(float, states[-1])), h)


def convert(scene: Scene, target_index: int) -> tuple[Scene, EgoFrame]:
    """Express every state of ``scene`` in the ego frame of pedestrian ``target_index``."""
    if not 0 <= target_index < scene.num_pedestrians:
        raise IndexError(f"target {target_index} outside [0, {scene.num_pedestrians})")
    frame = ego_frame_of(Trajectory(scene.positions[target_index]))
    moved = to_ego(scene.positions, frame.origin.as_array(), np.float64(frame.heading))
    return Scene(moved, scene.dt, scene.start_t), frame


def convert_back(state: State, frame: EgoFrame) -> State:
    p = from_ego(state.as_array(), frame.origin.as_array(), np.float64(frame.heading))
    return State(float(p[0]), float(p[1]))
