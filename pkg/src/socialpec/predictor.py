"""One-step location predictor and the autoregressive trajectory rollout."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import diffcore as dc
from .diffcore import ParamStore, Tensor
from .encoder import CONTEXT_ENCODER, TARGET_ENCODER, EncoderConfig, encode_batch, init_encoder, shape_plan
from .head import build_gmm, gmm_log_density, init_mlp, mlp_forward, raw_width, sample_raw
from .head import LocationDistribution
from .trajkit import Scene, from_ego, headings, to_ego

# value of an empty context pool: the lower bound of the tanh embedding range
EMPTY_POOL = -1.0


@dataclass(frozen=True)
class ModelConfig:
    context: EncoderConfig = CONTEXT_ENCODER
    target: EncoderConfig = TARGET_ENCODER
    hidden: tuple[int, ...] = (300, 120, 80)
    k: int = 1
    t_h: int = 8
    t_pred: int = 12
    init_scheme: str = "radial"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        raw_width(self.k)
        shape_plan(self.context, self.t_h)
        shape_plan(self.target, self.t_h)

    @property
    def widths(self) -> tuple[int, ...]:
        return self.hidden + (raw_width(self.k),)

    @property
    def mlp_input(self) -> int:
        return int(np.prod(shape_plan(self.target, self.t_h)[-1]) + np.prod(shape_plan(self.context, self.t_h)[-1]))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        for key in ("context", "target"):
            if isinstance(d.get(key), dict):
                d[key] = EncoderConfig(**d[key])
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        return cls(**d)


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> ParamStore:
    store = ParamStore()
    init_encoder(store, "tgt", cfg.target, rng, cfg.init_scheme)
    init_encoder(store, "ctx", cfg.context, rng, cfg.init_scheme)
    init_mlp(store, cfg.mlp_input, cfg.widths, rng)
    return store


def check_params(cfg: ModelConfig, store: ParamStore) -> None:
    """Raise KeyError/ValueError naming the first tensor inconsistent with ``cfg``."""
    expected = init_params(cfg, np.random.default_rng(0))
    for name in expected:
        if name not in store:
            raise KeyError(f"checkpoint is missing tensor {name!r}")
        if store[name].shape != expected[name].shape:
            raise ValueError(f"tensor {name!r} has shape {store[name].shape}, config expects {expected[name].shape}")
    extra = set(store.names()) - set(expected.names())
    if extra:
        raise KeyError(f"checkpoint has unexpected tensor {sorted(extra)[0]!r}")


@dataclass
class PredictionRollout:
    predicted: np.ndarray  # (M, t_pred, 2), world frame
    raw: np.ndarray | None = field(default=None, repr=False)  # (t_pred, M, 6K-1), ego frames


class LocPredictor:
    """Two encoders, context max-pooling and the MLP head over a shared ParamStore."""

    def __init__(self, config: ModelConfig, params: ParamStore):
        self.config = config
        self.params = params

    def raw(self, target, context, mask) -> Tensor:
        """Raw head outputs (B, 6K-1) for ego-frame target (B, T, 2) and context (B, C, T, 2)."""
        cfg = self.config
        leaves = self.params.leaves()
        w_t = encode_batch(target, leaves, "tgt", cfg.target)
        w_c = encode_batch(context, leaves, "ctx", cfg.context)
        pooled = dc.max_over_axis(w_c, axis=1, mask=np.asarray(mask, dtype=bool), initial=EMPTY_POOL)
        return mlp_forward(w_t, pooled, leaves, len(cfg.widths))

    def log_density(self, target, context, mask, truth) -> Tensor:
        return gmm_log_density(self.raw(target, context, mask), truth, self.config.k)


def context_pool(embeddings, shape=None) -> Tensor:
    """Elementwise max over a list of equally shaped embeddings; empty -> all ``EMPTY_POOL``."""
    if not embeddings:
        if shape is None:
            raise ValueError("context_pool needs a shape for an empty context")
        return Tensor(np.full(shape, EMPTY_POOL))
    ts = [e if isinstance(e, Tensor) else Tensor(e) for e in embeddings]
    ref = ts[0].shape
    for t in ts[1:]:
        if t.shape != ref:
            raise dc.ShapeError(f"context_pool: mixed embedding shapes {ref} and {t.shape}")
    stacked = dc.concat([dc.reshape(t, (1,) + ref) for t in ts], axis=0)
    return dc.max_over_axis(stacked, axis=0, initial=EMPTY_POOL)


def split_context(history: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All M targets of an ego-frame-ready (M, T, 2) window -> context (M, M-1, T, 2), mask (M, M-1)."""
    M = history.shape[0]
    if M == 1:
        return np.zeros((1, 0) + history.shape[1:]), np.zeros((1, 0), dtype=bool)
    idx = np.array([[j for j in range(M) if j != m] for m in range(M)])
    return history[idx], np.ones((M, M - 1), dtype=bool)


def ego_inputs(history: np.ndarray, targets=None):
    """Ego-frame network inputs for each target of a world-frame window (M, T, 2).

    Returns target (B, T, 2), context (B, M-1, T, 2), mask, origin (B, 2), heading (B,).
    """
    history = np.asarray(history, dtype=np.float64)
    M = history.shape[0]
    targets = np.arange(M) if targets is None else np.asarray(targets, dtype=int)
    origin = history[targets, -1]
    heading = headings(history[targets])
    others, mask = split_context(history)
    context = to_ego(others[targets], origin, heading)
    target = to_ego(history[targets], origin, heading)
    return target, context, mask[targets], origin, heading


def loc_predict(scene_ego: Scene, m: int, predictor: LocPredictor) -> LocationDistribution:
    """Distribution of pedestrian ``m``'s next location; ``scene_ego`` is already in m's frame."""
    pos = scene_ego.positions
    if pos.shape[1] != predictor.config.t_h:
        raise ValueError(f"expected history length {predictor.config.t_h}, got {pos.shape[1]}")
    others = np.delete(pos, m, axis=0)[None]
    with dc.no_grad():
        raw = predictor.raw(pos[m][None], others, np.ones(others.shape[:2], dtype=bool))
    return build_gmm(raw.data[0], predictor.config.k)


def traj_predict(scene: Scene, predictor: LocPredictor, rng: np.random.Generator, n_samples: int = 1,
                 t_pred: int | None = None, keep_raw: bool = False) -> list[PredictionRollout]:
    """Autoregressive rollouts from the first ``t_h`` steps of ``scene``.

    Within a timestep every pedestrian is predicted from the same window and
    all updates are committed together. Samples are independent full rollouts.
    """
    cfg = predictor.config
    t_pred = cfg.t_pred if t_pred is None else t_pred
    if scene.length < cfg.t_h:
        raise ValueError(f"scene has {scene.length} steps, need at least t_h={cfg.t_h}")
    M, S, t_h = scene.num_pedestrians, n_samples, cfg.t_h
    states = np.empty((S, M, t_h + t_pred, 2))
    states[:, :, :t_h] = scene.positions[:, :t_h]
    raws = np.empty((S, t_pred, M, raw_width(cfg.k))) if keep_raw else None
    idx = np.array([[j for j in range(M) if j != m] for m in range(M)], dtype=int).reshape(M, M - 1)
    mask = np.ones((M, M - 1), dtype=bool)
    for step in range(t_pred):
        window = states[:, :, step:step + t_h]            # (S, M, t_h, 2)
        origin = window[:, :, -1]
        heading = headings(window)
        target = to_ego(window, origin, heading)
        ctx = to_ego(window[:, idx], origin, heading)      # (S, M, M-1, t_h, 2)
        B = S * M
        with dc.no_grad():
            raw = predictor.raw(target.reshape(B, t_h, 2), ctx.reshape((B,) + ctx.shape[2:]),
                                np.broadcast_to(mask, (S,) + mask.shape).reshape(B, -1)).data
        if not np.all(np.isfinite(raw)):
            raise FloatingPointError(f"non-finite head output at rollout step {step}")
        draw = sample_raw(raw, cfg.k, rng).reshape(S, M, 2)
        states[:, :, t_h + step] = from_ego(draw, origin, heading)
        if keep_raw:
            raws[:, step] = raw.reshape(S, M, -1)
    return [PredictionRollout(states[s, :, t_h:].copy(), None if raws is None else raws[s]) for s in range(S)]
