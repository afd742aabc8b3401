"""Pattern Extraction Convolution.

Each length-L segment of a trajectory is compared with every motion pattern
by the sum of pointwise Euclidean distances; the score is
``scale[j] * log(eps + dist) + bias[j]``. With a negative scale a closer
segment gives a larger response.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .diffcore import Tensor, make_op

LOG_EPS = 1e-8
INIT_SCHEMES = ("radial", "uniform-box")


@dataclass
class MotionPatternBank:
    patterns: np.ndarray  # (N, L, 2)
    scale: np.ndarray     # (N,)
    bias: np.ndarray      # (N,)

    def __post_init__(self):
        p = np.asarray(self.patterns.data if isinstance(self.patterns, Tensor) else self.patterns)
        if p.ndim != 3 or p.shape[0] < 1 or p.shape[1] < 1 or p.shape[2] != 2:
            raise ValueError(f"patterns must have shape (N>=1, L>=1, 2), got {p.shape}")

    @property
    def n_patterns(self) -> int:
        return _arr(self.patterns).shape[0]

    @property
    def length(self) -> int:
        return _arr(self.patterns).shape[1]


def _arr(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def pec(traj: Tensor, patterns: Tensor, scale: Tensor, bias: Tensor) -> Tensor:
    """Fused PEC over trajectories of shape (..., T, 2) -> (..., T - L + 1, N)."""
    x = traj.data
    P = patterns.data
    lam = scale.data
    b = bias.data
    N, L, _ = P.shape
    T = x.shape[-2]
    if T < L:
        raise ValueError(f"trajectory shorter than pattern length ({T} < {L})")
    if x.shape[-1] != 2 or lam.shape != (N,) or b.shape != (N,):
        raise ValueError(f"pec: incompatible shapes traj {x.shape}, patterns {P.shape}, "
                         f"scale {lam.shape}, bias {b.shape}")
    n_seg = T - L + 1
    # (..., n_seg, L, 2)
    seg = np.moveaxis(sliding_window_view(x, L, axis=-2), -1, -2)
    diff = seg[..., :, None, :, :] - P          # (..., n_seg, N, L, 2)
    dist = np.sqrt(np.sum(diff * diff, axis=-1))  # (..., n_seg, N, L)
    total = dist.sum(axis=-1) + LOG_EPS           # (..., n_seg, N)
    logd = np.log(total)
    out = lam * logd + b

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        g_bias = g.sum(axis=lead)
        g_scale = (g * logd).sum(axis=lead)
        g_total = g * lam / total
        safe = np.where(dist > 0, dist, 1.0)
        unit = np.where((dist > 0)[..., None], diff / safe[..., None], 0.0)
        g_diff = g_total[..., None, None] * unit
        g_pat = -g_diff.sum(axis=tuple(range(g_diff.ndim - 3)))
        g_traj = None
        if traj.requires_grad:
            g_seg = g_diff.sum(axis=-3)  # (..., n_seg, L, 2)
            g_traj = np.zeros_like(x)
            for k in range(L):
                g_traj[..., k:k + n_seg, :] += g_seg[..., :, k, :]
        return g_traj, g_pat, g_scale, g_bias

    return make_op(out, (traj, patterns, scale, bias), backward, "pec")


def pec_forward(traj, bank: MotionPatternBank) -> Tensor:
    """PEC of a (T, 2) or batched (..., T, 2) trajectory against ``bank``."""
    return pec(_tensor(traj), _tensor(bank.patterns), _tensor(bank.scale), _tensor(bank.bias))


def pec_oracle(traj, bank: MotionPatternBank) -> np.ndarray:
    """Scalar-loop reference for a single (T, 2) trajectory. Test use only."""
    x = [[float(v) for v in row] for row in _arr(traj)]
    P = _arr(bank.patterns).tolist()
    lam = _arr(bank.scale).tolist()
    b = _arr(bank.bias).tolist()
    T, N, L = len(x), len(P), len(P[0])
    if T < L:
        raise ValueError(f"trajectory shorter than pattern length ({T} < {L})")
    out = np.empty((T - L + 1, N))
    for t in range(L - 1, T):
        for j in range(N):
            acc = 0.0
            for k in range(L):
                dx = x[t - L + 1 + k][0] - P[j][k][0]
                dy = x[t - L + 1 + k][1] - P[j][k][1]
                acc += (dx * dx + dy * dy) ** 0.5
            out[t - L + 1, j] = lam[j] * np.log(LOG_EPS + acc) + b[j]
    return out


def init_bank(n: int, l: int, rng: np.random.Generator, scheme: str = "radial") -> MotionPatternBank:
    """Initial pattern bank in ego-frame meters; scale -1, bias 0."""
    if n < 1 or l < 1:
        raise ValueError("need n >= 1 and l >= 1")
    if scheme == "radial":
        r = 4.0 * np.sqrt(rng.random(n))
        theta = rng.uniform(-np.pi, np.pi, n)
        heading = rng.uniform(-np.pi, np.pi, n)
        step = rng.uniform(0.1, 0.6, n)
        start = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)
        direction = np.stack([np.cos(heading), np.sin(heading)], axis=-1)
        k = np.arange(l)[None, :, None]
        patterns = start[:, None, :] + k * (step[:, None, None] * direction[:, None, :])
    elif scheme == "uniform-box":
        patterns = rng.uniform(-4.0, 4.0, (n, l, 2))
    else:
        raise ValueError(f"unknown init scheme {scheme!r}; expected one of {INIT_SCHEMES}")
    return MotionPatternBank(patterns, -np.ones(n), np.zeros(n))


def export_bank_csv(bank: MotionPatternBank, path) -> None:
    P, lam, b = _arr(bank.patterns), _arr(bank.scale), _arr(bank.bias)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pattern_id", "step_index", "x", "y", "lambda", "bias"])
        for j in range(P.shape[0]):
            for k in range(P.shape[1]):
                w.writerow([j, k, repr(float(P[j, k, 0])), repr(float(P[j, k, 1])),
                            repr(float(lam[j])), repr(float(b[j]))])


def read_bank_csv(path) -> MotionPatternBank:
    rows = list(csv.DictReader(open(path, newline="")))
    n = max(int(r["pattern_id"]) for r in rows) + 1
    l = max(int(r["step_index"]) for r in rows) + 1
    P = np.zeros((n, l, 2))
    lam = np.zeros(n)
    b = np.zeros(n)
    for r in rows:
        j, k = int(r["pattern_id"]), int(r["step_index"])
        P[j, k] = float(r["x"]), float(r["y"])
        lam[j], b[j] = float(r["lambda"]), float(r["bias"])
    return MotionPatternBank(P, lam, b)
