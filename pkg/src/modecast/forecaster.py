"""Channel-independent patch-based attention forecaster.

One model owns one univariate channel.  A forward pass normalizes each window
to zero mean/unit variance, slices it into overlapping patches (the last value
is first repeated ``stride`` times so the tail is never dropped), projects
patches into a latent space with an additive learned positional encoding, runs
them through a stack of multi-head self-attention encoder layers, and maps the
flattened token matrix to the forecast horizon through a linear head.  The
per-window statistics are applied back to the head output, so predictions
return at the input's scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Adam, BatchNormState, Tape, Tensor

__all__ = [
    "ForecasterConfig",
    "InstanceStats",
    "PatchForecaster",
    "instance_normalize",
    "instance_denormalize",
    "patchify",
    "n_patches",
    "embed",
    "train_epoch",
]

INSTANCE_STD_FLOOR = 1e-5


@dataclass(frozen=True)
class ForecasterConfig:
    lookback: int = 96
    horizon: int = 1
    patch_len: int = 16
    stride: int = 8
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 128
    norm: str = "batch"   # batch | layer
    dropout: float = 0.0  # reserved knob; nonzero is rejected

    def __post_init__(self) -> None:
        if self.lookback < 2:
            raise ValueError("lookback must be >= 2")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not 1 <= self.patch_len <= self.lookback:
            raise ValueError("patch_len must satisfy 1 <= patch_len <= lookback")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if min(self.d_model, self.n_heads, self.n_layers, self.d_ff) < 1:
            raise ValueError("model dimensions must be positive")
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model ({self.d_model}) must be divisible by n_heads ({self.n_heads})"
            )
        if self.norm not in ("batch", "layer"):
            raise ValueError(f"unknown norm {self.norm!r}")
        if self.dropout != 0.0:
            raise ValueError("dropout is not supported; set it to 0")

    @property
    def n_patches(self) -> int:
        return n_patches(self.lookback, self.patch_len, self.stride)

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    def to_dict(self) -> dict:
        return {
            "lookback": self.lookback,
            "horizon": self.horizon,
            "patch_len": self.patch_len,
            "stride": self.stride,
            "d_model": self.d_model,
            "n_heads": self.n_heads,
            "n_layers": self.n_layers,
            "d_ff": self.d_ff,
            "norm": self.norm,
            "dropout": self.dropout,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ForecasterConfig":
        return cls(**data)


@dataclass(frozen=True)
class InstanceStats:
    """Per-window mean and (floored) standard deviation, shaped to broadcast
    over ``[batch, time]`` arrays."""

    mean: np.ndarray  # [batch, 1]
    std: np.ndarray   # [batch, 1], >= INSTANCE_STD_FLOOR


def n_patches(lookback: int, patch_len: int, stride: int) -> int:
    """Patch count after the stride-long tail pad: floor((L - P) / S) + 2."""
    if patch_len > lookback:
        raise ValueError(f"patch_len {patch_len} exceeds lookback {lookback}")
    return (lookback - patch_len) // stride + 2


def instance_normalize(window: np.ndarray) -> tuple[np.ndarray, InstanceStats]:
    """Zero-mean/unit-variance scaling per window.  Accepts ``[L]`` or
    ``[batch, L]``; a constant window hits the std floor and normalizes to
    zeros."""
    x = np.asarray(window, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.shape[1] < 2:
        raise ValueError("instance normalization needs windows of length >= 2")
    mean = x.mean(axis=1, keepdims=True)
    std = np.maximum(x.std(axis=1, keepdims=True), INSTANCE_STD_FLOOR)
    normed = (x - mean) / std
    if squeeze:
        normed = normed[0]
    return normed, InstanceStats(mean=mean, std=std)


def instance_denormalize(pred: np.ndarray, stats: InstanceStats) -> np.ndarray:
    """Undo :func:`instance_normalize` on model output."""
    p = np.asarray(pred, dtype=np.float64)
    squeeze = p.ndim == 1
    if squeeze:
        p = p[None, :]
    out = p * stats.std + stats.mean
    return out[0] if squeeze else out


def patchify(window: np.ndarray, patch_len: int, stride: int) -> np.ndarray:
    """Slice a window into overlapping patches after repeating the final value
    ``stride`` times.  ``[L] -> [P, N]`` or ``[batch, L] -> [batch, P, N]``;
    patch ``j`` covers padded indices ``[j*stride, j*stride + patch_len)``."""
    x = np.asarray(window, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    lookback = x.shape[1]
    count = n_patches(lookback, patch_len, stride)
    pad = np.repeat(x[:, -1:], stride, axis=1)
    padded = np.concatenate([x, pad], axis=1)
    patches = np.stack(
        [padded[:, j * stride: j * stride + patch_len] for j in range(count)],
        axis=2,
    )  # [batch, P, N]
    return patches[0] if squeeze else patches


def embed(tape: Tape, patches, w_patch: Tensor, w_pos: Tensor) -> Tensor:
    """Project patches into the latent space and add the positional encoding:
    ``w_patch @ patches + w_pos``.  Accepts ``[P, N]`` or batched ``[B, P, N]``
    patches."""
    if not isinstance(patches, Tensor):
        patches = Tensor(patches)
    return tape.add(tape.matmul(w_patch, patches), w_pos)


class PatchForecaster:
    """One channel's forecaster: parameters, forward pass, and persistence.

    Parameters are initialized uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) in a
    fixed draw order, so a seed fully determines the model.
    """

    def __init__(self, config: ForecasterConfig, rng: np.random.Generator):
        self.config = config
        self.params: dict[str, Tensor] = {}
        self.bn_states: dict[str, BatchNormState] = {}
        d, p, n, t = config.d_model, config.patch_len, config.n_patches, config.horizon

        def init(name: str, shape: tuple[int, ...], fan_in: int) -> None:
            bound = 1.0 / math.sqrt(fan_in)
            self.params[name] = Tensor(
                rng.uniform(-bound, bound, size=shape), requires_grad=True
            )

        def init_norm(name: str) -> None:
            self.params[f"{name}.gamma"] = Tensor(np.ones(d), requires_grad=True)
            self.params[f"{name}.beta"] = Tensor(np.zeros(d), requires_grad=True)
            if config.norm == "batch":
                self.bn_states[name] = BatchNormState.for_features(d)

        init("w_patch", (d, p), p)
        init("w_pos", (d, n), d)
        dk, dv = config.head_dim, config.head_dim
        for i in range(config.n_layers):
            for h in range(config.n_heads):
                init(f"layer{i}.head{h}.w_q", (d, dk), d)
                init(f"layer{i}.head{h}.w_k", (d, dk), d)
                init(f"layer{i}.head{h}.w_v", (d, dv), d)
            init(f"layer{i}.w_attn_out", (d, d), d)
            init_norm(f"layer{i}.norm1")
            init(f"layer{i}.w_ff1", (config.d_ff, d), d)
            init(f"layer{i}.b_ff1", (config.d_ff, 1), d)
            init(f"layer{i}.w_ff2", (d, config.d_ff), config.d_ff)
            init(f"layer{i}.b_ff2", (d, 1), config.d_ff)
            init_norm(f"layer{i}.norm2")
        init("w_head", (t, d * n), d * n)
        init("b_head", (t,), d * n)

    # -- parameter access -------------------------------------------------

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def num_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def param_arrays(self) -> dict[str, np.ndarray]:
        """Flat name -> array map, including batch-norm running statistics."""
        out = {name: p.values.copy() for name, p in self.params.items()}
        for name, state in self.bn_states.items():
            out[f"{name}.running_mean"] = state.running_mean.copy()
            out[f"{name}.running_var"] = state.running_var.copy()
        return out

    def load_param_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        expected = set(self.param_arrays())
        got = set(arrays)
        if expected != got:
            missing, extra = expected - got, got - expected
            raise ValueError(f"checkpoint key mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, p in self.params.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != p.values.shape:
                raise ValueError(f"{name}: shape {arr.shape} != expected {p.values.shape}")
            p.values = arr.copy()
        for name, state in self.bn_states.items():
            state.running_mean = np.asarray(arrays[f"{name}.running_mean"], dtype=np.float64).copy()
            state.running_var = np.asarray(arrays[f"{name}.running_var"], dtype=np.float64).copy()

    # -- forward ----------------------------------------------------------

    def _norm(self, tape: Tape, x, name: str, training: bool):
        gamma = self.params[f"{name}.gamma"]
        beta = self.params[f"{name}.beta"]
        if self.config.norm == "batch":
            return tape.batch_norm(x, gamma, beta, state=self.bn_states[name], training=training)
        return tape.layer_norm(x, gamma, beta)

    def _attention_layer(self, tape: Tape, x, index: int, training: bool, attn_sink=None):
        cfg = self.config
        xt = tape.transpose(x)  # [B, N, D]
        heads = []
        scale = 1.0 / math.sqrt(cfg.head_dim)
        for h in range(cfg.n_heads):
            q = tape.matmul(xt, self.params[f"layer{index}.head{h}.w_q"])
            k = tape.matmul(xt, self.params[f"layer{index}.head{h}.w_k"])
            v = tape.matmul(xt, self.params[f"layer{index}.head{h}.w_v"])
            scores = tape.mul_scalar(tape.matmul(q, tape.transpose(k)), scale)
            attn = tape.softmax(scores, axis=-1)
            if attn_sink is not None:
                attn_sink.append(attn.values)
            heads.append(tape.matmul(attn, v))
        merged = tape.concat(heads, axis=-1)                       # [B, N, D]
        projected = tape.matmul(merged, self.params[f"layer{index}.w_attn_out"])
        z = tape.add(x, tape.transpose(projected))                 # residual, [B, D, N]
        z = self._norm(tape, z, f"layer{index}.norm1", training)
        hidden = tape.add(
            tape.matmul(self.params[f"layer{index}.w_ff1"], z),
            self.params[f"layer{index}.b_ff1"],
        )
        hidden = tape.gelu(hidden)
        ff = tape.add(
            tape.matmul(self.params[f"layer{index}.w_ff2"], hidden),
            self.params[f"layer{index}.b_ff2"],
        )
        z = tape.add(z, ff)                                        # residual
        return self._norm(tape, z, f"layer{index}.norm2", training)

    def forward_on_tape(
        self, tape: Tape, windows: np.ndarray, training: bool = False, attn_sink=None
    ) -> Tensor:
        """Record the full forward pass on ``tape``; returns the ``[batch,
        horizon]`` prediction at the input's original scale."""
        cfg = self.config
        x = np.asarray(windows, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != cfg.lookback:
            raise ValueError(f"expected windows of shape [batch, {cfg.lookback}], got {x.shape}")
        batch = x.shape[0]
        normed, stats = instance_normalize(x)
        patches = patchify(normed, cfg.patch_len, cfg.stride)      # [B, P, N]
        z = embed(tape, patches, self.params["w_patch"], self.params["w_pos"])
        for i in range(cfg.n_layers):
            z = self._attention_layer(tape, z, i, training, attn_sink)
        flat = tape.reshape(z, (batch, cfg.d_model * cfg.n_patches))
        pred = tape.add(
            tape.matmul(flat, tape.transpose(self.params["w_head"])),
            self.params["b_head"],
        )                                                          # [B, T]
        pred = tape.add(tape.mul(pred, Tensor(stats.std)), Tensor(stats.mean))
        return pred

    def predict(self, windows: np.ndarray) -> np.ndarray:
        """Inference forward pass (running statistics, no state mutation)."""
        squeeze = np.asarray(windows).ndim == 1
        out = self.forward_on_tape(Tape(), windows, training=False).values
        return out[0] if squeeze else out


def train_epoch(
    model: PatchForecaster,
    inputs: np.ndarray,
    targets: np.ndarray,
    optimizer: Adam,
    batch_size: int,
    rng: np.random.Generator,
) -> float:
    """One pass of minibatch MSE training for a single channel; returns the
    mean minibatch loss.  Aborts on a non-finite loss."""
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if inputs.shape[0] != targets.shape[0] or inputs.shape[0] == 0:
        raise ValueError("inputs and targets must be nonempty and aligned")
    order = rng.permutation(inputs.shape[0])
    losses = []
    for start in range(0, len(order), batch_size):
        idx = order[start: start + batch_size]
        tape = Tape()
        pred = model.forward_on_tape(tape, inputs[idx], training=True)
        loss = tape.mse(pred, Tensor(targets[idx]))
        value = float(loss.values)
        if not math.isfinite(value):
            raise FloatingPointError(
                f"non-finite training loss {value} at minibatch starting {start}"
            )
        optimizer.zero_grad()
        tape.backward(loss)
        optimizer.step()
        losses.append(value)
    return float(np.mean(losses))
