"""Dense float64 layers with hand-written backward passes, Adam, and gradient checking.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. Every forward
function has a matching ``*_backward`` that returns gradients instead of
mutating global state; model code accumulates them into a :class:`ParamStore`.
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Mapping

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    pass


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, name: str):
        super().__init__(f"non-finite gradient in parameter {name!r}; optimizer step aborted")
        self.name = name


def _as_tensor(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=DTYPE)


# --------------------------------------------------------------------------- layers


def affine(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``x @ W + b`` for ``x`` of shape [n, in] (or [in])."""
    if x.shape[-1] != W.shape[0] or W.ndim != 2 or b.shape != (W.shape[1],):
        raise ShapeError(
            f"affine: cannot apply W{tuple(W.shape)}, b{tuple(b.shape)} to x{tuple(x.shape)}"
        )
    return x @ W + b


def affine_backward(dy: np.ndarray, x: np.ndarray, W: np.ndarray):
    """Returns ``(dx, dW, db)``; leading axes of ``x``/``dy`` are flattened for dW, db."""
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    dW = x2.T @ dy2
    db = dy2.sum(axis=0)
    dx = dy @ W.T
    return dx, dW, db


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(dy: np.ndarray, y: np.ndarray) -> np.ndarray:
    return dy * y * (1.0 - y)


def tanh_backward(dy: np.ndarray, y: np.ndarray) -> np.ndarray:
    return dy * (1.0 - y * y)


def log_softmax(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    if x.shape[-1] < 1:
        raise ShapeError("log_softmax over an empty axis")
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def log_softmax_backward(dy: np.ndarray, logp: np.ndarray) -> np.ndarray:
    return dy - np.exp(logp) * dy.sum(axis=-1, keepdims=True)


def logsumexp(x: np.ndarray, axis=None) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis) if axis is not None else out.reshape(())


def outer_add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Unsqueeze-and-add: [T, D] + [U1, D] -> [T, U1, D]."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"outer_add: incompatible shapes {a.shape} and {b.shape}")
    return a[:, None, :] + b[None, :, :]


def outer_add_backward(dy: np.ndarray):
    return dy.sum(axis=1), dy.sum(axis=0)


def recurrent_step(state: np.ndarray, embedding: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """One tanh recurrence step: ``tanh([state; embedding] @ W + b)``."""
    h = W.shape[1]
    if state.shape != (h,) or W.shape[0] != h + embedding.shape[-1]:
        raise ShapeError(
            f"recurrent_step: state{tuple(state.shape)} / embedding{tuple(embedding.shape)} "
            f"do not match W{tuple(W.shape)}"
        )
    return np.tanh(affine(np.concatenate([state, embedding]), W, b))


def recurrent_step_backward(dnew, state, embedding, W, new):
    """Returns ``(dstate, dembedding, dW, db)`` for a single step."""
    dz = tanh_backward(dnew, new)
    inp = np.concatenate([state, embedding])
    dW = np.outer(inp, dz)
    dinp = W @ dz
    h = state.shape[0]
    return dinp[:h], dinp[h:], dW, dz


# --------------------------------------------------------------------------- parameters


class ParamStore:
    """Ordered name -> (value, grad, adam moments) map plus a global step counter."""

    def __init__(self):
        self._values: "OrderedDict[str, np.ndarray]" = OrderedDict()
        self._grads: dict[str, np.ndarray] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value) -> np.ndarray:
        if name in self._values:
            raise KeyError(f"duplicate parameter name {name!r}")
        value = _as_tensor(value).copy()
        self._values[name] = value
        self._grads[name] = np.zeros_like(value)
        self._m[name] = np.zeros_like(value)
        self._v[name] = np.zeros_like(value)
        return value

    def __getitem__(self, name: str) -> np.ndarray:
        return self._values[name]

    def __contains__(self, name: str) -> bool:
        return name in self._values

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def names(self) -> list[str]:
        return list(self._values)

    def items(self):
        return self._values.items()

    def grad(self, name: str) -> np.ndarray:
        return self._grads[name]

    def accumulate(self, name: str, g: np.ndarray) -> None:
        self._grads[name] += g

    def zero_grad(self) -> None:
        for g in self._grads.values():
            g.fill(0.0)

    def reset_optimizer(self) -> None:
        for name in self._values:
            self._m[name].fill(0.0)
            self._v[name].fill(0.0)
        self.step = 0

    def set_value(self, name: str, value) -> None:
        value = _as_tensor(value)
        if value.shape != self._values[name].shape:
            raise ShapeError(f"{name}: shape {value.shape} != {self._values[name].shape}")
        self._values[name][...] = value

    def num_params(self, prefix: str = "") -> int:
        return sum(v.size for n, v in self._values.items() if n.startswith(prefix))

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for name, value in self._values.items():
            out.add(name, value)
            out._m[name][...] = self._m[name]
            out._v[name][...] = self._v[name]
        out.step = self.step
        return out

    def equals(self, other: "ParamStore") -> bool:
        """Bit-exact equality of names, shapes and values."""
        if self.names() != other.names():
            return False
        return all(
            a.shape == other[n].shape and a.tobytes() == other[n].tobytes()
            for n, a in self._values.items()
        )


@dataclass
class OptimConfig:
    lr: float = 3e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    warmup_steps: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if not self.eps > 0:
            raise ValueError("Adam epsilon must be positive")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")


def adam_step(store: ParamStore, cfg: OptimConfig, names: Iterable[str] | None = None) -> ParamStore:
    """Bias-corrected Adam update of ``names`` (default: all); zeroes every gradient."""
    names = store.names() if names is None else list(names)
    for name in names:
        if not np.all(np.isfinite(store.grad(name))):
            raise NonFiniteGradientError(name)
    store.step += 1
    t = store.step
    lr = cfg.lr
    if cfg.warmup_steps:
        lr *= min(1.0, t / cfg.warmup_steps)
    c1 = 1.0 - cfg.beta1**t
    c2 = 1.0 - cfg.beta2**t
    for name in names:
        g = store._grads[name]
        m = store._m[name]
        v = store._v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        store._values[name] -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
    store.zero_grad()
    return store


def grad_check(
    f: Callable[[ParamStore], float],
    store: ParamStore,
    h: float = 1e-5,
    names: Iterable[str] | None = None,
    floor: float = 1e-4,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` must zero the store's gradients, return the scalar loss and leave
    d(loss)/d(param) in the store. Relative error per entry is
    ``|a - n| / max(|a|, |n|, floor)``; the floor keeps entries whose true
    gradient is ~0 from being judged on round-off alone.
    """
    if not h > 0:
        raise ValueError("step h must be positive")
    f(store)
    names = store.names() if names is None else list(names)
    analytic = {n: store.grad(n).copy() for n in names}
    worst = 0.0
    for name in names:
        value = store[name]
        flat = value.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f(store)
            flat[i] = orig - h
            fm = f(store)
            flat[i] = orig
            num = (fp - fm) / (2.0 * h)
            err = abs(a_flat[i] - num) / max(abs(a_flat[i]), abs(num), floor)
            worst = max(worst, err)
    f(store)
    return worst


# --------------------------------------------------------------------------- container format
#
# Layout (all integers little-endian):
#   8 bytes   magic b"FNTCKPT1"
#   8 bytes   uint64 header length H
#   H bytes   UTF-8 JSON: {"meta": {...}, "tensors": [{"name", "shape", "offset"}, ...]}
#   rest      concatenated float64 little-endian payloads; offsets are relative
#             to the start of this section, in bytes

MAGIC = b"FNTCKPT1"


def dumps_tensors(tensors: Mapping[str, np.ndarray], meta: Mapping | None = None) -> bytes:
    entries = []
    chunks = []
    offset = 0
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(np.shape(arr)), "offset": offset})
        chunks.append(data)
        offset += len(data)
    header = json.dumps({"meta": dict(meta or {}), "tensors": entries}, sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(header)) + header + b"".join(chunks)


def loads_tensors(blob: bytes) -> tuple["OrderedDict[str, np.ndarray]", dict]:
    if blob[:8] != MAGIC:
        raise ValueError("not a tensor container (bad magic)")
    (hlen,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16 : 16 + hlen].decode("utf-8"))
    body = memoryview(blob)[16 + hlen :]
    out: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for e in header["tensors"]:
        count = int(np.prod(e["shape"], dtype=np.int64))
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=e["offset"])
        out[e["name"]] = arr.astype(DTYPE).reshape(e["shape"])
    return out, header["meta"]


def save_tensors(path, tensors: Mapping[str, np.ndarray], meta: Mapping | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_tensors(tensors, meta))


def load_tensors(path):
    with open(path, "rb") as fh:
        return loads_tensors(fh.read())


def store_from_tensors(tensors: Mapping[str, np.ndarray], step: int = 0) -> ParamStore:
    store = ParamStore()
    for name, arr in tensors.items():
        store.add(name, arr)
    store.step = step
    return store
