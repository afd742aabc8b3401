"""Location extrapolator: MLP to a bivariate Gaussian or a K-component mixture.

Raw output layout for K components (width ``6K - 1``)::

    [x1, y1, a1, b1, c1,  x2, y2, a2, b2, c2, beta2,  ...,  xK, yK, aK, bK, cK, betaK]

Each component has mean (x, y), standard deviations exp(a), exp(b) and
correlation tanh(c). The first mixture logit is pinned to 0 and weights are
the softmax of the logits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import diffcore as dc
from .diffcore import ParamStore, Tensor, make_op
from .trajkit import State

LEAKY_SLOPE = 0.01
LOG_STD_RANGE = (-20.0, 20.0)
CORR_LOGIT_RANGE = (-10.0, 10.0)
_LOG_2PI = math.log(2.0 * math.pi)


def raw_width(k: int) -> int:
    if k < 1:
        raise ValueError(f"mixture count must be >= 1, got {k}")
    return 6 * k - 1


def _columns(k: int) -> tuple[np.ndarray, np.ndarray]:
    starts = np.array([0] + [5 + 6 * i for i in range(k - 1)], dtype=int)
    return starts, starts[1:] + 5


# ---------------------------------------------------------------------------
# MLP


def init_mlp(store: ParamStore, in_dim: int, widths, rng: np.random.Generator) -> None:
    prev = in_dim
    for i, w in enumerate(widths):
        k = 1.0 / np.sqrt(prev)
        store.add(f"mlp.{i}.w", rng.uniform(-k, k, (prev, w)))
        store.add(f"mlp.{i}.b", np.zeros(w))
        prev = w


def mlp_forward(omega_target: Tensor, omega_context: Tensor, leaves: dict[str, Tensor],
                n_layers: int, slope: float = LEAKY_SLOPE) -> Tensor:
    """Flatten and concatenate both embeddings, then dense layers; the last one is linear."""
    lead = omega_target.shape[:-2]
    ft = dc.reshape(omega_target, lead + (-1,))
    fc = dc.reshape(omega_context, lead + (-1,))
    h = dc.concat([ft, fc], axis=-1)
    for i in range(n_layers):
        h = dc.broadcast_add(dc.matmul(h, leaves[f"mlp.{i}.w"]), leaves[f"mlp.{i}.b"])
        if i < n_layers - 1:
            h = dc.leaky_relu(h, slope)
    return h


# ---------------------------------------------------------------------------
# distributions


@dataclass(frozen=True)
class Component:
    weight: float
    mean: State
    cov: np.ndarray  # (2, 2)


@dataclass(frozen=True)
class LocationDistribution:
    components: tuple[Component, ...]

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    @property
    def means(self) -> np.ndarray:
        return np.array([[c.mean.x, c.mean.y] for c in self.components])

    @property
    def covs(self) -> np.ndarray:
        return np.array([c.cov for c in self.components])


def split_raw(raw: np.ndarray, k: int) -> dict[str, np.ndarray]:
    """Component parameters from raw outputs (..., 6K-1), with the documented clamps applied."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape[-1] != raw_width(k):
        raise ValueError(f"raw width {raw.shape[-1]} does not match K={k} (expected {raw_width(k)})")
    starts, beta_cols = _columns(k)
    beta = np.zeros(raw.shape[:-1] + (k,))
    beta[..., 1:] = raw[..., beta_cols]
    return {
        "mean": np.stack([raw[..., starts], raw[..., starts + 1]], axis=-1),
        "log_sx": np.clip(raw[..., starts + 2], *LOG_STD_RANGE),
        "log_sy": np.clip(raw[..., starts + 3], *LOG_STD_RANGE),
        "corr_logit": np.clip(raw[..., starts + 4], *CORR_LOGIT_RANGE),
        "log_weight": beta - logsumexp(beta, axis=-1, keepdims=True),
    }


def _cov(sx, sy, rho):
    return np.array([[sx * sx, rho * sx * sy], [rho * sx * sy, sy * sy]])


def build_gmm(raw, k: int) -> LocationDistribution:
    p = split_raw(np.asarray(raw, dtype=np.float64).reshape(1, -1), k)
    comps = []
    for i in range(k):
        sx, sy = math.exp(p["log_sx"][0, i]), math.exp(p["log_sy"][0, i])
        rho = math.tanh(p["corr_logit"][0, i])
        comps.append(Component(float(np.exp(p["log_weight"][0, i])),
                               State(float(p["mean"][0, i, 0]), float(p["mean"][0, i, 1])),
                               _cov(sx, sy, rho)))
    return LocationDistribution(tuple(comps))


def build_gaussian(raw) -> LocationDistribution:
    raw = np.asarray(raw, dtype=np.float64).reshape(-1)
    if raw.shape != (5,):
        raise ValueError(f"a single Gaussian takes 5 raw values, got {raw.shape[0]}")
    return build_gmm(raw, 1)


def log_density(dist: LocationDistribution, s) -> float:
    """log sum_i w_i N(s; mu_i, Sigma_i), via log-sum-exp."""
    p = np.array([s.x, s.y]) if isinstance(s, State) else np.asarray(s, dtype=np.float64)
    terms = []
    for c in dist.components:
        L = np.linalg.cholesky(c.cov)
        z = np.linalg.solve(L, p - np.array([c.mean.x, c.mean.y]))
        logdet = 2.0 * np.sum(np.log(np.diag(L)))
        terms.append(math.log(c.weight) - _LOG_2PI - 0.5 * logdet - 0.5 * float(z @ z))
    return float(logsumexp(terms))


def sample(dist: LocationDistribution, rng: np.random.Generator) -> State:
    u = rng.random()
    i = min(int(np.searchsorted(np.cumsum(dist.weights), u, side="right")), len(dist.components) - 1)
    c = dist.components[i]
    z = rng.standard_normal(2)
    s = np.array([c.mean.x, c.mean.y]) + np.linalg.cholesky(c.cov) @ z
    return State(float(s[0]), float(s[1]))


def sample_raw(raw: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Batched draws from raw outputs (B, 6K-1) -> (B, 2).

    Uses the analytic Cholesky factor [[sx, 0], [rho sy, sy sqrt(1 - rho^2)]].
    """
    p = split_raw(raw, k)
    B = p["mean"].shape[0]
    u = rng.random(B)
    z = rng.standard_normal((B, 2))
    cum = np.cumsum(np.exp(p["log_weight"]), axis=-1)
    idx = np.minimum((cum <= u[:, None]).sum(axis=-1), k - 1)
    take = lambda a: np.take_along_axis(a, idx[:, None], axis=-1)[:, 0]
    mx = np.take_along_axis(p["mean"][..., 0], idx[:, None], axis=-1)[:, 0]
    my = np.take_along_axis(p["mean"][..., 1], idx[:, None], axis=-1)[:, 0]
    sx, sy = np.exp(take(p["log_sx"])), np.exp(take(p["log_sy"]))
    c = take(p["corr_logit"])
    rho, sech = np.tanh(c), 1.0 / np.cosh(c)
    return np.stack([mx + sx * z[:, 0], my + sy * (rho * z[:, 0] + sech * z[:, 1])], axis=-1)


def gmm_log_density(raw: Tensor, target: np.ndarray, k: int) -> Tensor:
    """Per-row mixture log-density of ``target`` (B, 2) under raw outputs (B, 6K-1).

    Gradients w.r.t. the raw outputs are computed in closed form; clamped
    entries get zero gradient.
    """
    r = raw.data
    t = np.asarray(target, dtype=np.float64)
    if r.ndim != 2 or t.shape != (r.shape[0], 2):
        raise dc.ShapeError(f"gmm_log_density: incompatible shapes {r.shape} and {t.shape}")
    p = split_raw(r, k)
    starts, beta_cols = _columns(k)
    a, b, c = p["log_sx"], p["log_sy"], p["corr_logit"]
    dx = t[:, None, 0] - p["mean"][..., 0]
    dy = t[:, None, 1] - p["mean"][..., 1]
    zx, zy = dx * np.exp(-a), dy * np.exp(-b)
    rho = np.tanh(c)
    ach = np.abs(c)
    log_cosh = ach + np.log1p(np.exp(-2.0 * ach)) - math.log(2.0)
    inv_q = np.cosh(c) ** 2  # 1 / (1 - rho^2)
    S = zx * zx + zy * zy - 2.0 * rho * zx * zy
    Q = S * inv_q
    lp = -_LOG_2PI - a - b + log_cosh - 0.5 * Q
    joint = p["log_weight"] + lp
    total = logsumexp(joint, axis=-1)

    def backward(g):
        resp = np.exp(joint - total[:, None]) * g[:, None]
        ex, ey = zx - rho * zy, zy - rho * zx
        grad = np.zeros_like(r)
        lo_s, hi_s = LOG_STD_RANGE
        lo_c, hi_c = CORR_LOGIT_RANGE
        ra, rb, rc = r[:, starts + 2], r[:, starts + 3], r[:, starts + 4]
        grad[:, starts] = resp * ex * inv_q * np.exp(-a)
        grad[:, starts + 1] = resp * ey * inv_q * np.exp(-b)
        grad[:, starts + 2] = resp * (-1.0 + zx * ex * inv_q) * ((ra >= lo_s) & (ra <= hi_s))
        grad[:, starts + 3] = resp * (-1.0 + zy * ey * inv_q) * ((rb >= lo_s) & (rb <= hi_s))
        grad[:, starts + 4] = resp * (rho * (1.0 - Q) + zx * zy) * ((rc >= lo_c) & (rc <= hi_c))
        if k > 1:
            w = np.exp(p["log_weight"])
            grad[:, beta_cols] = resp[:, 1:] - g[:, None] * w[:, 1:]
        return (grad,)

    return make_op(total, (raw,), backward, "gmm_log_density")
