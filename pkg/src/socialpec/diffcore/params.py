"""Named parameter storage, Adam, RNG plumbing and the binary checkpoint format."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensor import Tensor

CHECKPOINT_VERSION = 1
# optimizer state rides in the same file under reserved names
_OPT_PREFIX = "opt."


def seeded_rng(seed) -> np.random.Generator:
    """The only source of randomness handed to init, sampling and shuffling."""
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        for name in ("beta1", "beta2"):
            v = getattr(self, name)
            if not 0 <= v < 1:
                raise ValueError(f"{name} must lie in [0, 1), got {v}")


class ParamStore:
    """Ordered name -> array map with gradient accumulators and Adam moments."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self.params:
            raise KeyError(f"parameter {name!r} already registered")
        arr = np.array(value, dtype=np.float64)
        self.params[name] = arr
        self.grads[name] = np.zeros_like(arr)
        self.m[name] = np.zeros_like(arr)
        self.v[name] = np.zeros_like(arr)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def __len__(self) -> int:
        return len(self.params)

    def names(self) -> list[str]:
        return list(self.params)

    @property
    def num_values(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def leaves(self) -> dict[str, Tensor]:
        """Fresh tape leaves for one forward pass; their gradients land in ``self.grads``."""
        return {k: Tensor(p, requires_grad=True, grad=self.grads[k]) for k, p in self.params.items()}

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g[...] = 0.0

    def grad_norm(self) -> float:
        return float(np.sqrt(sum(np.sum(g * g) for g in self.grads.values())))

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for k, p in self.params.items():
            out.add(k, p)
            out.grads[k][...] = self.grads[k]
            out.m[k][...] = self.m[k]
            out.v[k][...] = self.v[k]
        out.step = self.step
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params.values()])

    def flat_grad(self) -> np.ndarray:
        return np.concatenate([g.ravel() for g in self.grads.values()])

    def set_flat(self, values: np.ndarray) -> None:
        i = 0
        for p in self.params.values():
            p[...] = values[i:i + p.size].reshape(p.shape)
            i += p.size

    # -- checkpoints --------------------------------------------------------

    def save(self, path, include_optimizer: bool = True) -> None:
        entries = list(self.params.items())
        if include_optimizer:
            entries += [(f"{_OPT_PREFIX}m.{k}", a) for k, a in self.m.items()]
            entries += [(f"{_OPT_PREFIX}v.{k}", a) for k, a in self.v.items()]
            entries.append((f"{_OPT_PREFIX}step", np.array([self.step], dtype=np.float64)))
        Path(path).write_bytes(encode_checkpoint(entries))

    @classmethod
    def load(cls, path) -> "ParamStore":
        entries = decode_checkpoint(Path(path).read_bytes())
        store = cls()
        opt = {}
        for name, arr in entries:
            if name.startswith(_OPT_PREFIX):
                opt[name[len(_OPT_PREFIX):]] = arr
            else:
                store.add(name, arr)
        for k in store.params:
            if f"m.{k}" in opt:
                store.m[k][...] = opt[f"m.{k}"]
                store.v[k][...] = opt[f"v.{k}"]
        if "step" in opt:
            store.step = int(opt["step"][0])
        return store


def encode_checkpoint(entries) -> bytes:
    """Serialize ``(name, array)`` pairs.

    Layout (little-endian): u32 version, u32 count, then per entry
    u32 name length, utf-8 name, u32 ndim, ndim x u64 dims, f64 values.
    """
    parts = [struct.pack("<II", CHECKPOINT_VERSION, len(entries))]
    for name, arr in entries:
        raw = name.encode("utf-8")
        arr = np.asarray(arr, dtype="<f8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def decode_checkpoint(buf: bytes) -> list[tuple[str, np.ndarray]]:
    try:
        version, count = struct.unpack_from("<II", buf, 0)
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        off = 8
        out = []
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", buf, off)
            off += 4
            name = buf[off:off + nlen].decode("utf-8")
            off += nlen
            (ndim,) = struct.unpack_from("<I", buf, off)
            off += 4
            shape = struct.unpack_from(f"<{ndim}Q", buf, off)
            off += 8 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            arr = np.frombuffer(buf, dtype="<f8", count=size, offset=off).astype(np.float64).reshape(shape)
            off += 8 * size
            out.append((name, arr))
    except struct.error as exc:
        raise ValueError(f"truncated checkpoint: {exc}") from None
    if off != len(buf):
        raise ValueError(f"checkpoint has {len(buf) - off} trailing bytes")
    return out


def clip_grad_norm(store: ParamStore, max_norm: float) -> float:
    norm = store.grad_norm()
    if norm > max_norm:
        factor = max_norm / norm
        for g in store.grads.values():
            g *= factor
    return norm


def adam_step(store: ParamStore, cfg: AdamConfig) -> None:
    """One bias-corrected Adam update in place, then zero the gradients."""
    store.step += 1
    t = store.step
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for k, p in store.params.items():
        g = store.grads[k]
        m, v = store.m[k], store.v[k]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        p -= cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.epsilon)
    store.zero_grad()
