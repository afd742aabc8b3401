"""Trajectory encoder: PEC -> tanh -> max-pool -> conv1d -> tanh.

Internally tensors are time-major, ``(..., T, channels)``; :func:`encode`
exposes the channel-first ``(channels, T)`` layout for single trajectories.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import ParamStore, Tensor
from .pec import init_bank, pec


@dataclass(frozen=True)
class EncoderConfig:
    n_patterns: int = 100
    pattern_len: int = 2
    n_conv_kernels: int = 160
    conv_len: int = 2
    pool_stride: int = 2

    def __post_init__(self):
        for name, v in vars(self).items():
            if int(v) < 1:
                raise ValueError(f"EncoderConfig.{name} must be >= 1, got {v}")


CONTEXT_ENCODER = EncoderConfig(100, 2, 160, 2, 2)
TARGET_ENCODER = EncoderConfig(50, 2, 80, 2, 2)


def shape_plan(cfg: EncoderConfig, t_h: int) -> list[tuple[int, int]]:
    """Channel-first shapes after PEC, pooling, conv and the final tanh."""
    if cfg.pattern_len > t_h:
        raise ValueError(f"pattern length {cfg.pattern_len} exceeds history length {t_h}")
    n_seg = t_h - cfg.pattern_len + 1
    pooled = -(-n_seg // cfg.pool_stride)
    t_out = pooled - cfg.conv_len + 1
    if t_out < 1:
        raise ValueError(f"conv length {cfg.conv_len} exceeds pooled length {pooled}")
    return [
        (cfg.n_patterns, n_seg),
        (cfg.n_patterns, pooled),
        (cfg.n_conv_kernels, t_out),
        (cfg.n_conv_kernels, t_out),
    ]


def init_encoder(store: ParamStore, prefix: str, cfg: EncoderConfig, rng: np.random.Generator,
                 scheme: str = "radial") -> None:
    bank = init_bank(cfg.n_patterns, cfg.pattern_len, rng, scheme)
    store.add(f"{prefix}.pec.P", bank.patterns)
    store.add(f"{prefix}.pec.scale", bank.scale)
    store.add(f"{prefix}.pec.bias", bank.bias)
    k = 1.0 / np.sqrt(cfg.conv_len * cfg.n_patterns)
    store.add(f"{prefix}.conv.w", rng.uniform(-k, k, (cfg.conv_len, cfg.n_patterns, cfg.n_conv_kernels)))
    store.add(f"{prefix}.conv.b", np.zeros(cfg.n_conv_kernels))


def conv1d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Valid, unit-stride 1-D convolution. x (..., T, C_in), w (len, C_in, C_out)."""
    n, c_in, c_out = w.shape
    if x.shape[-1] != c_in:
        raise dc.ShapeError(f"conv1d: incompatible shapes {x.shape} and {w.shape}")
    t_out = x.shape[-2] - n + 1
    if t_out < 1:
        raise dc.ShapeError(f"conv1d: input length {x.shape[-2]} shorter than kernel {n}")
    taps = [x[..., k:k + t_out, :] for k in range(n)]
    cols = taps[0] if n == 1 else dc.concat(taps, axis=-1)
    return dc.broadcast_add(dc.matmul(cols, dc.reshape(w, (n * c_in, c_out))), b)


def encode_batch(traj, leaves: dict[str, Tensor], prefix: str, cfg: EncoderConfig) -> Tensor:
    """Embed ego-frame trajectories (..., T, 2) into (..., T_out, n_conv_kernels)."""
    x = traj if isinstance(traj, Tensor) else Tensor(traj)
    psi = pec(x, leaves[f"{prefix}.pec.P"], leaves[f"{prefix}.pec.scale"], leaves[f"{prefix}.pec.bias"])
    h = dc.max_pool1d(dc.tanh(psi), cfg.pool_stride, axis=-2)
    return dc.tanh(conv1d(h, leaves[f"{prefix}.conv.w"], leaves[f"{prefix}.conv.b"]))


def encode(traj, params, cfg: EncoderConfig, prefix: str = "ctx") -> Tensor:
    """Channel-first embedding of one (2, T_h) trajectory -> (n_conv_kernels, T_out).

    ``params`` is a ParamStore or a dict of leaves from ``ParamStore.leaves``.
    """
    x = traj if isinstance(traj, Tensor) else Tensor(traj)
    if x.ndim != 2 or x.shape[0] != 2:
        raise ValueError(f"expected a (2, T_h) trajectory, got {x.shape}")
    shape_plan(cfg, x.shape[1])
    leaves = params.leaves() if isinstance(params, ParamStore) else params
    w = leaves[f"{prefix}.conv.w"]
    if leaves[f"{prefix}.pec.P"].shape[0] != cfg.n_patterns or w.shape[-1] != cfg.n_conv_kernels:
        raise ValueError(f"parameters under {prefix!r} do not match {cfg}")
    omega = encode_batch(dc.transpose(x, (1, 0)), leaves, prefix, cfg)
    return dc.transpose(omega, (1, 0))
