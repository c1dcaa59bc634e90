"""Dense float64 tensors with a recorded-operation tape for reverse-mode gradients.

The engine is deliberately small: a ``Tensor`` wraps a numpy array, a ``Tape``
records every operation applied through it (inputs, output, backward rule),
and ``Tape.backward`` replays the records in exact reverse order, accumulating
gradients additively wherever a tensor fans out to several consumers.  One
tape serves one forward/backward cycle; parameters are plain ``Tensor``
objects that outlive tapes and carry their accumulated ``grad`` between
optimizer steps.

Everything is double precision.  Shapes are validated when an operation is
recorded, never during backward.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "BatchNormState",
    "Adam",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_FORMAT_VERSION",
]

_GELU_C = np.sqrt(2.0 / np.pi)


class Tensor:
    """A dense float64 array plus gradient bookkeeping.

    ``grad`` is allocated (zeros) for ``requires_grad`` tensors and accumulates
    across ``Tape.backward`` calls until ``zero_grad`` resets it.  ``node_id``
    is assigned by whichever tape last recorded this tensor; tensors may be
    reused across consecutive tapes.
    """

    __slots__ = ("values", "requires_grad", "grad", "node_id")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.values) if requires_grad else None
        self.node_id: int | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


@dataclass
class _TapeEntry:
    input_ids: tuple[int, ...]
    output_id: int
    backward: Callable[[np.ndarray], tuple[np.ndarray | None, ...]]


@dataclass
class BatchNormState:
    """Running statistics for one batch-norm layer (inference path)."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1

    @classmethod
    def for_features(cls, n_features: int, momentum: float = 0.1) -> "BatchNormState":
        return cls(
            running_mean=np.zeros(n_features, dtype=np.float64),
            running_var=np.ones(n_features, dtype=np.float64),
            momentum=momentum,
        )


class Tape:
    """Operation recorder.  Recording order is topological order; backward
    walks it in exact reverse.  Single-threaded by contract."""

    def __init__(self) -> None:
        self._tensors: list[Tensor] = []
        self._entries: list[_TapeEntry] = []

    # -- bookkeeping ---------------------------------------------------

    def _register(self, t: Tensor) -> int:
        nid = t.node_id
        if nid is not None and nid < len(self._tensors) and self._tensors[nid] is t:
            return nid
        nid = len(self._tensors)
        self._tensors.append(t)
        t.node_id = nid
        return nid

    def _lift(self, x) -> Tensor:
        if isinstance(x, Tensor):
            return x
        return Tensor(x)

    def _record(self, inputs: Sequence[Tensor], out_values: np.ndarray, backward) -> Tensor:
        input_ids = tuple(self._register(t) for t in inputs)
        out = Tensor(out_values)
        out_id = self._register(out)
        self._entries.append(_TapeEntry(input_ids, out_id, backward))
        return out

    @property
    def n_ops(self) -> int:
        return len(self._entries)

    # -- elementwise arithmetic -----------------------------------------

    def add(self, a, b) -> Tensor:
        a, b = self._lift(a), self._lift(b)
        out = a.values + b.values

        def bwd(g):
            return _unbroadcast(g, a.values.shape), _unbroadcast(g, b.values.shape)

        return self._record((a, b), out, bwd)

    def sub(self, a, b) -> Tensor:
        a, b = self._lift(a), self._lift(b)
        out = a.values - b.values

        def bwd(g):
            return _unbroadcast(g, a.values.shape), _unbroadcast(-g, b.values.shape)

        return self._record((a, b), out, bwd)

    def mul(self, a, b) -> Tensor:
        a, b = self._lift(a), self._lift(b)
        av, bv = a.values, b.values
        out = av * bv

        def bwd(g):
            return _unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)

        return self._record((a, b), out, bwd)

    def div(self, a, b) -> Tensor:
        a, b = self._lift(a), self._lift(b)
        av, bv = a.values, b.values
        out = av / bv

        def bwd(g):
            return (
                _unbroadcast(g / bv, av.shape),
                _unbroadcast(-g * out / bv, bv.shape),
            )

        return self._record((a, b), out, bwd)

    def neg(self, a) -> Tensor:
        a = self._lift(a)
        return self._record((a,), -a.values, lambda g: (-g,))

    def add_scalar(self, a, c: float) -> Tensor:
        a = self._lift(a)
        return self._record((a,), a.values + float(c), lambda g: (g,))

    def mul_scalar(self, a, c: float) -> Tensor:
        a = self._lift(a)
        c = float(c)
        return self._record((a,), a.values * c, lambda g: (g * c,))

    def sqrt(self, a) -> Tensor:
        a = self._lift(a)
        out = np.sqrt(a.values)

        def bwd(g):
            return (g / (2.0 * out),)

        return self._record((a,), out, bwd)

    def exp(self, a) -> Tensor:
        a = self._lift(a)
        out = np.exp(a.values)

        def bwd(g):
            return (g * out,)

        return self._record((a,), out, bwd)

    def relu(self, a) -> Tensor:
        a = self._lift(a)
        mask = a.values > 0.0
        out = np.where(mask, a.values, 0.0)

        def bwd(g):
            return (g * mask,)

        return self._record((a,), out, bwd)

    def gelu(self, a) -> Tensor:
        # tanh approximation; closed-form derivative keeps it gradient-checkable
        a = self._lift(a)
        x = a.values
        inner = _GELU_C * (x + 0.044715 * x**3)
        t = np.tanh(inner)
        out = 0.5 * x * (1.0 + t)

        def bwd(g):
            sech2 = 1.0 - t * t
            d = 0.5 * (1.0 + t) + 0.5 * x * sech2 * _GELU_C * (1.0 + 3 * 0.044715 * x**2)
            return (g * d,)

        return self._record((a,), out, bwd)

    # -- linear algebra and shape ----------------------------------------

    def matmul(self, a, b) -> Tensor:
        """Matrix product.  2D @ 2D, 3D @ 3D (matched batch), or 2D broadcast
        against a batched 3D operand."""
        a, b = self._lift(a), self._lift(b)
        av, bv = a.values, b.values
        if av.ndim not in (2, 3) or bv.ndim not in (2, 3):
            raise ValueError(f"matmul expects 2D/3D operands, got {av.shape} @ {bv.shape}")
        if av.shape[-1] != bv.shape[-2]:
            raise ValueError(f"matmul inner dims disagree: {av.shape} @ {bv.shape}")
        if av.ndim == 3 and bv.ndim == 3 and av.shape[0] != bv.shape[0]:
            raise ValueError(f"matmul batch dims disagree: {av.shape} @ {bv.shape}")
        out = np.matmul(av, bv)

        def bwd(g):
            ga = np.matmul(g, np.swapaxes(bv, -1, -2))
            gb = np.matmul(np.swapaxes(av, -1, -2), g)
            if ga.ndim > av.ndim:
                ga = ga.sum(axis=0)
            if gb.ndim > bv.ndim:
                gb = gb.sum(axis=0)
            return ga, gb

        return self._record((a, b), out, bwd)

    def transpose(self, a) -> Tensor:
        """Swap the last two axes."""
        a = self._lift(a)
        if a.ndim < 2:
            raise ValueError(f"transpose needs ndim >= 2, got shape {a.shape}")
        out = np.swapaxes(a.values, -1, -2)

        def bwd(g):
            return (np.swapaxes(g, -1, -2),)

        return self._record((a,), out, bwd)

    def reshape(self, a, shape: tuple[int, ...]) -> Tensor:
        a = self._lift(a)
        old_shape = a.values.shape
        out = a.values.reshape(shape)

        def bwd(g):
            return (g.reshape(old_shape),)

        return self._record((a,), out, bwd)

    def slice(self, a, key) -> Tensor:
        """Basic (view) slicing; ``key`` is anything numpy basic indexing takes."""
        a = self._lift(a)
        out = a.values[key]
        shape = a.values.shape

        def bwd(g):
            full = np.zeros(shape, dtype=np.float64)
            full[key] = g
            return (full,)

        return self._record((a,), out, bwd)

    def concat(self, tensors: Sequence, axis: int = 0) -> Tensor:
        ts = [self._lift(t) for t in tensors]
        out = np.concatenate([t.values for t in ts], axis=axis)
        sizes = [t.values.shape[axis] for t in ts]
        splits = np.cumsum(sizes)[:-1]

        def bwd(g):
            return tuple(np.split(g, splits, axis=axis))

        return self._record(tuple(ts), out, bwd)

    # -- reductions ------------------------------------------------------

    def sum(self, a, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        a = self._lift(a)
        out = a.values.sum(axis=axis, keepdims=keepdims)
        shape = a.values.shape

        def bwd(g):
            if axis is None:
                return (np.broadcast_to(g, shape).copy(),)
            gx = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(gx, shape).copy(),)

        return self._record((a,), out, bwd)

    def mean(self, a, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        a = self._lift(a)
        out = a.values.mean(axis=axis, keepdims=keepdims)
        shape = a.values.shape
        count = a.values.size if axis is None else np.prod(
            [shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))]
        )

        def bwd(g):
            if axis is None:
                return (np.broadcast_to(g / count, shape).copy(),)
            gx = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(gx / count, shape).copy(),)

        return self._record((a,), out, bwd)

    # -- nonlinear blocks --------------------------------------------------

    def softmax(self, a, axis: int = -1) -> Tensor:
        a = self._lift(a)
        shifted = a.values - a.values.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        out = e / e.sum(axis=axis, keepdims=True)

        def bwd(g):
            dot = (g * out).sum(axis=axis, keepdims=True)
            return (out * (g - dot),)

        return self._record((a,), out, bwd)

    def mse(self, pred, target) -> Tensor:
        """Mean squared difference, reduced to a scalar."""
        pred, target = self._lift(pred), self._lift(target)
        if pred.shape != target.shape:
            raise ValueError(f"mse shape mismatch: {pred.shape} vs {target.shape}")
        diff = pred.values - target.values
        out = np.asarray((diff * diff).mean())
        scale = 2.0 / diff.size

        def bwd(g):
            gd = g * scale * diff
            return gd, -gd

        return self._record((pred, target), out, bwd)

    def batch_norm(
        self,
        x,
        gamma: Tensor,
        beta: Tensor,
        state: BatchNormState | None = None,
        training: bool = True,
        eps: float = 1e-5,
    ) -> Tensor:
        """Per-feature normalization over the batch axis (and token axis for 3D
        ``[batch, features, tokens]`` input), with trainable scale/shift.

        Training mode normalizes by batch statistics and folds them into
        ``state`` with its momentum; eval mode normalizes by the running
        statistics in ``state``.
        """
        x = self._lift(x)
        xv = x.values
        if xv.ndim == 2:
            axes: tuple[int, ...] = (0,)
            pshape = (1, xv.shape[1])
        elif xv.ndim == 3:
            axes = (0, 2)
            pshape = (1, xv.shape[1], 1)
        else:
            raise ValueError(f"batch_norm expects 2D/3D input, got shape {xv.shape}")
        n_features = xv.shape[1]
        if gamma.shape != (n_features,) or beta.shape != (n_features,):
            raise ValueError(
                f"batch_norm scale/shift must have shape ({n_features},), "
                f"got {gamma.shape} and {beta.shape}"
            )
        gv = gamma.values.reshape(pshape)

        if training:
            mu = xv.mean(axis=axes, keepdims=True)
            var = xv.var(axis=axes, keepdims=True)
            if state is not None:
                m = state.momentum
                state.running_mean += m * (mu.reshape(n_features) - state.running_mean)
                state.running_var += m * (var.reshape(n_features) - state.running_var)
        else:
            if state is None:
                raise ValueError("batch_norm eval mode needs running statistics")
            mu = state.running_mean.reshape(pshape)
            var = state.running_var.reshape(pshape)

        inv = 1.0 / np.sqrt(var + eps)
        xhat = (xv - mu) * inv
        out = gv * xhat + beta.values.reshape(pshape)

        def bwd(g):
            dgamma = (g * xhat).sum(axis=axes)
            dbeta = g.sum(axis=axes)
            if training:
                gm = g.mean(axis=axes, keepdims=True)
                gxm = (g * xhat).mean(axis=axes, keepdims=True)
                dx = gv * inv * (g - gm - xhat * gxm)
            else:
                dx = g * gv * inv
            return dx, dgamma, dbeta

        return self._record((x, gamma, beta), out, bwd)

    def layer_norm(self, x, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
        """Per-position normalization over the feature axis (axis 1)."""
        x = self._lift(x)
        xv = x.values
        if xv.ndim not in (2, 3):
            raise ValueError(f"layer_norm expects 2D/3D input, got shape {xv.shape}")
        n_features = xv.shape[1]
        axis = 1
        pshape = (1, n_features) if xv.ndim == 2 else (1, n_features, 1)
        if gamma.shape != (n_features,) or beta.shape != (n_features,):
            raise ValueError(
                f"layer_norm scale/shift must have shape ({n_features},), "
                f"got {gamma.shape} and {beta.shape}"
            )
        gv = gamma.values.reshape(pshape)
        mu = xv.mean(axis=axis, keepdims=True)
        var = xv.var(axis=axis, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (xv - mu) * inv
        out = gv * xhat + beta.values.reshape(pshape)

        def bwd(g):
            dgamma = (g * xhat).sum(axis=tuple(i for i in range(xv.ndim) if i != axis))
            dbeta = g.sum(axis=tuple(i for i in range(xv.ndim) if i != axis))
            gm = (g * gv).mean(axis=axis, keepdims=True)
            gxm = (g * gv * xhat).mean(axis=axis, keepdims=True)
            dx = inv * (g * gv - gm - xhat * gxm)
            return dx, dgamma, dbeta

        return self._record((x, gamma, beta), out, bwd)

    # -- backward ----------------------------------------------------------

    def backward(self, loss: Tensor) -> dict[Tensor, np.ndarray]:
        """Reverse sweep from a scalar loss.

        Returns the gradient for every ``requires_grad`` tensor registered on
        this tape (zeros for tensors with no path to the loss) and accumulates
        the same values into each tensor's ``grad``.
        """
        if loss.values.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss.node_id is None or (
            loss.node_id >= len(self._tensors) or self._tensors[loss.node_id] is not loss
        ):
            raise ValueError("loss tensor was not produced on this tape")

        grads: dict[int, np.ndarray] = {
            loss.node_id: np.ones_like(loss.values)
        }
        for entry in reversed(self._entries):
            g = grads.get(entry.output_id)
            if g is None:
                continue
            input_grads = entry.backward(g)
            for nid, ig in zip(entry.input_ids, input_grads):
                if ig is None:
                    continue
                acc = grads.get(nid)
                grads[nid] = ig if acc is None else acc + ig

        result: dict[Tensor, np.ndarray] = {}
        for nid, t in enumerate(self._tensors):
            if not t.requires_grad:
                continue
            g = grads.get(nid)
            if g is None:
                g = np.zeros_like(t.values)
            else:
                g = np.asarray(g, dtype=np.float64).reshape(t.values.shape)
            t.grad += g
            result[t] = g
        return result


@dataclass
class AdamState:
    """First/second moment buffers and step counter for one parameter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0


class Adam:
    """Adam with bias correction: m <- b1*m + (1-b1)*g, v <- b2*v + (1-b2)*g^2,
    update = -lr * m_hat / (sqrt(v_hat) + eps)."""

    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float = 0.001,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        # lr = 0 is allowed: it freezes the parameters while still advancing
        # moment estimates, which some harnesses use as a control run
        if lr < 0:
            raise ValueError("lr must be >= 0")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.states = [
            AdamState(m=np.zeros_like(p.values), v=np.zeros_like(p.values))
            for p in self.params
        ]

    def step(self) -> None:
        for p, s in zip(self.params, self.states):
            g = p.grad
            if g is None:
                continue
            s.t += 1
            s.m += (1.0 - self.beta1) * (g - s.m)
            s.v += (1.0 - self.beta2) * (g * g - s.v)
            m_hat = s.m / (1.0 - self.beta1**s.t)
            v_hat = s.v / (1.0 - self.beta2**s.t)
            p.values -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


# -- checkpoint format -------------------------------------------------------

CHECKPOINT_FORMAT_VERSION = 1

_META_KEY = "__checkpoint_meta__"


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write a versioned key->array map.  Reload is bit-exact (float64 kept)."""
    payload = dict(meta or {})
    payload["format_version"] = CHECKPOINT_FORMAT_VERSION
    blobs = {k: np.ascontiguousarray(v) for k, v in arrays.items()}
    if _META_KEY in blobs:
        raise ValueError(f"array key {_META_KEY!r} is reserved")
    blobs[_META_KEY] = np.frombuffer(json.dumps(payload, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(path, **blobs)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint written by :func:`save_checkpoint`."""
    with np.load(path) as data:
        if _META_KEY not in data:
            raise ValueError(f"{path}: not a checkpoint file (missing metadata)")
        meta = json.loads(bytes(data[_META_KEY]).decode())
        version = meta.get("format_version")
        if version != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version!r}")
        arrays = {k: data[k] for k in data.files if k != _META_KEY}
    return arrays, meta
