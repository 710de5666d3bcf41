"""Token-to-mel alignment and a small conditional flow-matching stack.

The pieces here are deliberately self-contained numpy: a frame container, the
1.6:1 linear-interpolation upsampler that bridges 50 Hz token sequences to
80 Hz mel sequences, the linear interpolation path used for flow-matching
targets, a fully-connected time-conditioned vector field with hand-written
backprop under an L1 objective, explicit Euler integration of the learned
field, and length-prefixed binary artifacts for checkpoints and frames.

Everything numerical runs in float64.  The vector field consumes the
concatenation ``[state, conditioning, speaker, t]`` in that order; hidden
layers are tanh, the output layer is linear.

Training notes, learned the hard way on this loss: the mean-over-everything
L1 makes each weight's gradient magnitude scale like 1/state_dim (the sign
pattern is dense but tiny), so useful learning rates grow with the output
dimension; and because sign gradients never shrink near the optimum, a fixed
step size leaves the parameters jittering at a floor proportional to the
rate.  The loop in :func:`train_vector_field` therefore decays the step
linearly to zero by default, which is what lets the toy tasks actually
converge instead of orbiting.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatchError,
    FormatError,
    IntegrationDivergenceError,
    InvalidParameterError,
    MalformedHeaderError,
    NonFiniteValueError,
    TrainingDivergenceError,
)
from .util import atomic_write_bytes

TOKEN_RATE_HZ = 50.0
MEL_RATE_HZ = 80.0
UPSAMPLE_RATIO = MEL_RATE_HZ / TOKEN_RATE_HZ  # 1.6
DEFAULT_MEL_DIM = 80


@dataclass(eq=False)
class FrameSequence:
    """A (num_frames, dim) float64 array with an attached frame rate."""

    frames: np.ndarray
    frame_rate_hz: float

    def __post_init__(self):
        arr = np.asarray(self.frames, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionMismatchError(f"frames must be 2-D, got shape {arr.shape}")
        if arr.shape[1] == 0:
            raise DimensionMismatchError("frame dim must be positive")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValueError("frames contain NaN or infinity")
        rate = float(self.frame_rate_hz)
        if not math.isfinite(rate) or rate <= 0.0:
            raise InvalidParameterError(f"frame_rate_hz must be positive, got {rate}")
        arr = arr.copy()
        arr.flags.writeable = False
        self.frames = arr
        self.frame_rate_hz = rate

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def dim(self) -> int:
        return int(self.frames.shape[1])


@dataclass(eq=False)
class SpeakerEmbedding:
    """Speaker conditioning vector, float64."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64).copy()
        if arr.ndim != 1 or arr.size == 0:
            raise DimensionMismatchError("speaker embedding must be a non-empty 1-D vector")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValueError("speaker embedding contains NaN or infinity")
        arr.flags.writeable = False
        self.values = arr

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def upsample_tokens(seq: FrameSequence, ratio: float = UPSAMPLE_RATIO) -> FrameSequence:
    """Linearly interpolate a frame sequence to ``round(T * ratio)`` frames.

    The output grid spans the input endpoints exactly: output frame j sits at
    source position ``j * (T - 1) / (T' - 1)``, so the first and last input
    frames are reproduced bit-for-bit and every interior frame is a convex
    combination of its two neighbours.  Rounding of the output length is
    half-away-from-zero.  Needs at least two input frames.
    """
    ratio = float(ratio)
    if not math.isfinite(ratio) or ratio <= 0.0:
        raise InvalidParameterError(f"ratio must be positive, got {ratio}")
    T = seq.num_frames
    if T < 2:
        raise InvalidParameterError(f"upsampling needs at least 2 frames, got {T}")
    T_out = int(math.floor(T * ratio + 0.5))
    if T_out < 2:
        raise InvalidParameterError(
            f"ratio {ratio} maps {T} frames to {T_out}; output must keep both endpoints"
        )
    src = np.arange(T_out, dtype=np.float64) * (T - 1) / (T_out - 1)
    i0 = np.minimum(src.astype(np.int64), T - 2)
    w = (src - i0)[:, None]
    frames = (1.0 - w) * seq.frames[i0] + w * seq.frames[i0 + 1]
    return FrameSequence(frames=frames, frame_rate_hz=seq.frame_rate_hz * ratio)


def cfm_sample_path(x0: np.ndarray, x1: np.ndarray, t):
    """Linear interpolation path and its velocity target.

    ``x_t = (1 - t) x0 + t x1`` and ``u = x1 - x0``; ``t`` may be a scalar or
    a per-row vector in [0, 1].
    """
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise DimensionMismatchError(f"endpoint shapes differ: {x0.shape} vs {x1.shape}")
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0.0) or np.any(t_arr > 1.0) or not np.all(np.isfinite(t_arr)):
        raise InvalidParameterError("t must lie in [0, 1]")
    if t_arr.ndim == 1 and x0.ndim == 2:
        if t_arr.shape[0] != x0.shape[0]:
            raise DimensionMismatchError("per-row t must match the batch size")
        t_arr = t_arr[:, None]
    elif t_arr.ndim != 0:
        raise InvalidParameterError("t must be a scalar or a 1-D batch vector")
    xt = (1.0 - t_arr) * x0 + t_arr * x1
    return xt, x1 - x0


# ---------------------------------------------------------------------------
# vector field


@dataclass(eq=False)
class VectorFieldModel:
    """Fully-connected vector field v(x, t | cond, spk).

    ``weights[l]`` has shape (fan_out, fan_in); tanh between layers, linear
    output.  Input layout is ``[state, cond, spk, t]``.
    """

    state_dim: int
    cond_dim: int
    spk_dim: int
    hidden: tuple
    weights: list
    biases: list

    def __post_init__(self):
        for name in ("state_dim", "cond_dim", "spk_dim"):
            v = int(getattr(self, name))
            if v <= 0:
                raise InvalidParameterError(f"{name} must be positive, got {v}")
            setattr(self, name, v)
        self.hidden = tuple(int(h) for h in self.hidden)
        if any(h <= 0 for h in self.hidden):
            raise InvalidParameterError(f"hidden sizes must be positive, got {self.hidden}")
        sizes = self.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise DimensionMismatchError(
                f"expected {len(sizes) - 1} weight/bias pairs, got "
                f"{len(self.weights)}/{len(self.biases)}"
            )
        ws, bs = [], []
        for l, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            W = np.asarray(self.weights[l], dtype=np.float64)
            b = np.asarray(self.biases[l], dtype=np.float64)
            if W.shape != (fan_out, fan_in):
                raise DimensionMismatchError(
                    f"layer {l}: weight shape {W.shape}, expected {(fan_out, fan_in)}"
                )
            if b.shape != (fan_out,):
                raise DimensionMismatchError(
                    f"layer {l}: bias shape {b.shape}, expected {(fan_out,)}"
                )
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise NonFiniteValueError(f"layer {l}: parameters contain NaN or infinity")
            ws.append(W.copy())
            bs.append(b.copy())
        self.weights = ws
        self.biases = bs

    @property
    def input_dim(self) -> int:
        return self.state_dim + self.cond_dim + self.spk_dim + 1

    @property
    def layer_sizes(self) -> tuple:
        return (self.input_dim, *self.hidden, self.state_dim)

    @property
    def num_parameters(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))


def init_vector_field(
    state_dim: int,
    cond_dim: int,
    spk_dim: int,
    hidden: tuple = (64, 64),
    seed: int = 0,
) -> VectorFieldModel:
    """Glorot-uniform weights, zero biases, deterministic under ``seed``."""
    sizes = (state_dim + cond_dim + spk_dim + 1, *tuple(hidden), state_dim)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return VectorFieldModel(
        state_dim=state_dim,
        cond_dim=cond_dim,
        spk_dim=spk_dim,
        hidden=tuple(hidden),
        weights=weights,
        biases=biases,
    )


def _forward_cached(model: VectorFieldModel, features: np.ndarray):
    """Forward pass keeping each layer's input; returns (activations, output)."""
    hs = [features]
    last = len(model.weights) - 1
    h = features
    for l in range(last):
        h = np.tanh(h @ model.weights[l].T + model.biases[l])
        hs.append(h)
    out = h @ model.weights[last].T + model.biases[last]
    return hs, out


def _forward_rows(model, X, t, cond, spk) -> np.ndarray:
    feats = np.concatenate([X, cond, spk, t[:, None]], axis=1)
    _, out = _forward_cached(model, feats)
    return out


def vf_forward(model: VectorFieldModel, x, t, cond, spk) -> np.ndarray:
    """Evaluate the field at a single point; returns a (state_dim,) vector."""
    x = np.asarray(x, dtype=np.float64)
    cond = np.asarray(cond, dtype=np.float64)
    s = spk.values if isinstance(spk, SpeakerEmbedding) else np.asarray(spk, dtype=np.float64)
    if x.shape != (model.state_dim,):
        raise DimensionMismatchError(f"state shape {x.shape}, expected ({model.state_dim},)")
    if cond.shape != (model.cond_dim,):
        raise DimensionMismatchError(f"cond shape {cond.shape}, expected ({model.cond_dim},)")
    if s.shape != (model.spk_dim,):
        raise DimensionMismatchError(f"speaker shape {s.shape}, expected ({model.spk_dim},)")
    t = float(t)
    if not math.isfinite(t):
        raise NonFiniteValueError("t must be finite")
    out = _forward_rows(model, x[None, :], np.array([t]), cond[None, :], s[None, :])
    return out[0]


@dataclass(eq=False)
class FlowBatch:
    """One training batch: endpoints, times, and conditioning, row-aligned."""

    x0: np.ndarray
    x1: np.ndarray
    t: np.ndarray
    cond: np.ndarray
    spk: np.ndarray

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=np.float64)
        x1 = np.asarray(self.x1, dtype=np.float64)
        t = np.asarray(self.t, dtype=np.float64)
        cond = np.asarray(self.cond, dtype=np.float64)
        spk = np.asarray(self.spk, dtype=np.float64)
        if x0.ndim != 2 or x0.shape[0] == 0:
            raise DimensionMismatchError("x0 must be a non-empty (batch, dim) array")
        if x1.shape != x0.shape:
            raise DimensionMismatchError(f"x1 shape {x1.shape} != x0 shape {x0.shape}")
        B = x0.shape[0]
        if t.shape != (B,):
            raise DimensionMismatchError(f"t shape {t.shape}, expected ({B},)")
        if cond.ndim != 2 or cond.shape[0] != B:
            raise DimensionMismatchError(f"cond must be ({B}, cond_dim), got {cond.shape}")
        if spk.ndim == 1:
            spk = np.broadcast_to(spk, (B, spk.shape[0])).copy()
        if spk.ndim != 2 or spk.shape[0] != B:
            raise DimensionMismatchError(f"spk must be ({B}, spk_dim), got {spk.shape}")
        for name, arr in (("x0", x0), ("x1", x1), ("t", t), ("cond", cond), ("spk", spk)):
            if not np.all(np.isfinite(arr)):
                raise NonFiniteValueError(f"batch field {name} contains NaN or infinity")
        if np.any(t < 0.0) or np.any(t > 1.0):
            raise InvalidParameterError("batch times must lie in [0, 1]")
        self.x0, self.x1, self.t, self.cond, self.spk = x0, x1, t, cond, spk

    @property
    def size(self) -> int:
        return int(self.x0.shape[0])


def _check_batch_dims(model: VectorFieldModel, batch: FlowBatch) -> None:
    if batch.x0.shape[1] != model.state_dim:
        raise DimensionMismatchError(
            f"batch state dim {batch.x0.shape[1]} != model state dim {model.state_dim}"
        )
    if batch.cond.shape[1] != model.cond_dim:
        raise DimensionMismatchError(
            f"batch cond dim {batch.cond.shape[1]} != model cond dim {model.cond_dim}"
        )
    if batch.spk.shape[1] != model.spk_dim:
        raise DimensionMismatchError(
            f"batch spk dim {batch.spk.shape[1]} != model spk dim {model.spk_dim}"
        )


def vf_loss(model: VectorFieldModel, batch: FlowBatch) -> float:
    """Mean absolute error between the field and the path velocity target."""
    _check_batch_dims(model, batch)
    xt, u = cfm_sample_path(batch.x0, batch.x1, batch.t)
    out = _forward_rows(model, xt, batch.t, batch.cond, batch.spk)
    return float(np.mean(np.abs(out - u)))


def vf_train_step(model: VectorFieldModel, batch: FlowBatch, learning_rate: float) -> float:
    """One full-batch gradient step on the L1 flow-matching objective.

    Plain gradient descent, parameters updated in place; returns the loss
    evaluated *before* the update.  The L1 subgradient uses sign(0) = 0.
    Non-finite loss or gradients abort with :class:`TrainingDivergenceError`.
    """
    lr = float(learning_rate)
    if not math.isfinite(lr) or lr < 0.0:
        raise InvalidParameterError(f"learning_rate must be finite and >= 0, got {lr}")
    _check_batch_dims(model, batch)
    xt, u = cfm_sample_path(batch.x0, batch.x1, batch.t)
    feats = np.concatenate([xt, batch.cond, batch.spk, batch.t[:, None]], axis=1)
    hs, out = _forward_cached(model, feats)
    res = out - u
    loss = float(np.mean(np.abs(res)))
    if not math.isfinite(loss):
        raise TrainingDivergenceError(f"loss is not finite: {loss}")

    delta = np.sign(res) / res.size
    last = len(model.weights) - 1
    grads_W = [None] * (last + 1)
    grads_b = [None] * (last + 1)
    grads_W[last] = delta.T @ hs[last]
    grads_b[last] = delta.sum(axis=0)
    for l in range(last - 1, -1, -1):
        delta = (delta @ model.weights[l + 1]) * (1.0 - hs[l + 1] ** 2)
        grads_W[l] = delta.T @ hs[l]
        grads_b[l] = delta.sum(axis=0)

    for gW, gb in zip(grads_W, grads_b):
        if not (np.all(np.isfinite(gW)) and np.all(np.isfinite(gb))):
            raise TrainingDivergenceError("gradient is not finite")
    for l in range(last + 1):
        model.weights[l] -= lr * grads_W[l]
        model.biases[l] -= lr * grads_b[l]
    return loss


# ---------------------------------------------------------------------------
# integration


def ode_integrate_batch(
    model: VectorFieldModel,
    x_init: np.ndarray,
    cond: np.ndarray,
    spk: np.ndarray,
    n_steps: int = 32,
) -> np.ndarray:
    """Explicit Euler from t=0 to t=1, rows integrated independently.

    Steps evaluate the field at the left endpoint t_i = i / n_steps.  A
    non-finite state aborts with :class:`IntegrationDivergenceError`.
    """
    if int(n_steps) < 1:
        raise InvalidParameterError(f"n_steps must be >= 1, got {n_steps}")
    n_steps = int(n_steps)
    X = np.asarray(x_init, dtype=np.float64).copy()
    cond = np.asarray(cond, dtype=np.float64)
    spk = np.asarray(spk, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.state_dim:
        raise DimensionMismatchError(
            f"x_init must be (rows, {model.state_dim}), got {X.shape}"
        )
    B = X.shape[0]
    if spk.ndim == 1:
        spk = np.broadcast_to(spk, (B, spk.shape[0]))
    if cond.shape != (B, model.cond_dim):
        raise DimensionMismatchError(
            f"cond must be ({B}, {model.cond_dim}), got {cond.shape}"
        )
    if spk.shape != (B, model.spk_dim):
        raise DimensionMismatchError(
            f"spk must be ({B}, {model.spk_dim}), got {spk.shape}"
        )
    if not np.all(np.isfinite(X)):
        raise NonFiniteValueError("x_init contains NaN or infinity")
    dt = 1.0 / n_steps
    t_col = np.empty(B)
    for i in range(n_steps):
        t_col.fill(i * dt)
        X = X + dt * _forward_rows(model, X, t_col, cond, spk)
        if not np.all(np.isfinite(X)):
            raise IntegrationDivergenceError(
                f"state became non-finite at step {i + 1} of {n_steps}"
            )
    return X


def ode_integrate(model, x_init, cond, spk, n_steps: int = 32) -> np.ndarray:
    """Single-sample convenience wrapper around :func:`ode_integrate_batch`."""
    x = np.asarray(x_init, dtype=np.float64)
    if x.shape != (model.state_dim,):
        raise DimensionMismatchError(f"x_init shape {x.shape}, expected ({model.state_dim},)")
    c = np.asarray(cond, dtype=np.float64)
    s = spk.values if isinstance(spk, SpeakerEmbedding) else np.asarray(spk, dtype=np.float64)
    return ode_integrate_batch(model, x[None, :], c[None, :], s[None, :], n_steps)[0]


def generate_mel(
    model: VectorFieldModel,
    tokens: FrameSequence,
    speaker: SpeakerEmbedding,
    *,
    n_steps: int = 32,
    seed: int = 0,
    ratio: float = UPSAMPLE_RATIO,
) -> FrameSequence:
    """Upsample tokens, then transport seeded noise along the learned field.

    Each upsampled token frame conditions one mel frame; all frames integrate
    in parallel from an N(0, I) start drawn with ``seed``.
    """
    if tokens.dim != model.cond_dim:
        raise DimensionMismatchError(
            f"token dim {tokens.dim} does not match model cond dim {model.cond_dim}"
        )
    s = speaker.values if isinstance(speaker, SpeakerEmbedding) else np.asarray(speaker)
    if s.shape != (model.spk_dim,):
        raise DimensionMismatchError(
            f"speaker dim {s.shape} does not match model spk dim ({model.spk_dim},)"
        )
    up = upsample_tokens(tokens, ratio)
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal((up.num_frames, model.state_dim))
    mel = ode_integrate_batch(model, x0, up.frames, s, n_steps)
    return FrameSequence(frames=mel, frame_rate_hz=up.frame_rate_hz)


# ---------------------------------------------------------------------------
# training loop and synthetic tasks


@dataclass
class FlowTrainConfig:
    """Desk-scale training hyperparameters.

    ``total_steps=0`` is allowed (a checkpoint of the fresh initialization);
    everything else must be strictly positive.
    """

    learning_rate: float = 0.03
    batch_size: int = 64
    total_steps: int = 2000
    ode_steps: int = 32
    seed: int = 0

    def __post_init__(self):
        if not math.isfinite(self.learning_rate) or self.learning_rate <= 0.0:
            raise InvalidParameterError(
                f"learning_rate must be positive, got {self.learning_rate}"
            )
        if int(self.batch_size) < 1:
            raise InvalidParameterError(f"batch_size must be >= 1, got {self.batch_size}")
        if int(self.total_steps) < 0:
            raise InvalidParameterError(f"total_steps must be >= 0, got {self.total_steps}")
        if int(self.ode_steps) < 1:
            raise InvalidParameterError(f"ode_steps must be >= 1, got {self.ode_steps}")
        self.batch_size = int(self.batch_size)
        self.total_steps = int(self.total_steps)
        self.ode_steps = int(self.ode_steps)
        self.seed = int(self.seed)


def train_vector_field(
    model: VectorFieldModel,
    sampler,
    config: FlowTrainConfig,
    *,
    decay: bool = True,
) -> list:
    """Run the training loop; returns the per-step loss history.

    ``sampler(rng, batch_size)`` must yield a :class:`FlowBatch`.  With
    ``decay=True`` the step size shrinks linearly, lr_t = lr (1 - t/T), which
    drains the sign-gradient jitter floor at the end of the run.
    """
    rng = np.random.default_rng(config.seed)
    losses = []
    total = config.total_steps
    for step in range(total):
        lr_t = config.learning_rate * (1.0 - step / total) if decay else config.learning_rate
        batch = sampler(rng, config.batch_size)
        losses.append(vf_train_step(model, batch, lr_t))
    return losses


def linear_map_task(state_dim: int, cond_dim: int, spk_dim: int, *, scale: float = 1.0, seed: int = 0):
    """Noiseless synthetic task: transport zero to A·cond.

    The target field is exactly reachable (u = A·cond, no irreducible error),
    which is what makes large loss-reduction factors observable at all under
    an L1 objective.
    """
    A = np.random.default_rng(seed).standard_normal((state_dim, cond_dim)) * (
        scale / math.sqrt(cond_dim)
    )

    def sampler(rng: np.random.Generator, batch_size: int) -> FlowBatch:
        cond = rng.standard_normal((batch_size, cond_dim))
        t = rng.uniform(0.0, 1.0, size=batch_size)
        spk = rng.standard_normal((batch_size, spk_dim))
        x1 = cond @ A.T
        return FlowBatch(
            x0=np.zeros((batch_size, state_dim)),
            x1=x1,
            t=t,
            cond=cond,
            spk=spk,
        )

    return sampler


def transport_toy_task(
    *, offset=(3.0, 3.0), spread: float = 0.5, spk_dim: int = 8
):
    """2-D sanity task: move N(0, I) mass to a small blob at ``offset``."""
    offset = np.asarray(offset, dtype=np.float64)
    dim = offset.shape[0]

    def sampler(rng: np.random.Generator, batch_size: int) -> FlowBatch:
        x0 = rng.standard_normal((batch_size, dim))
        x1 = offset + spread * rng.standard_normal((batch_size, dim))
        t = rng.uniform(0.0, 1.0, size=batch_size)
        spk = rng.standard_normal((batch_size, spk_dim))
        return FlowBatch(x0=x0, x1=x1, t=t, cond=np.zeros((batch_size, dim)), spk=spk)

    return sampler


# ---------------------------------------------------------------------------
# artifacts: checkpoints and frame sequences

CHECKPOINT_FORMAT = "emorag-checkpoint"
FRAMES_FORMAT = "emorag-frames"
ARTIFACT_VERSION = 1


def _pack_artifact(header: dict, payload: bytes) -> bytes:
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return struct.pack("<I", len(raw)) + raw + payload


def _unpack_artifact(data: bytes, expected_format: str):
    if len(data) < 4:
        raise MalformedHeaderError("file too short for header length")
    (hlen,) = struct.unpack_from("<I", data, 0)
    if 4 + hlen > len(data):
        raise MalformedHeaderError("declared header length exceeds file size")
    try:
        header = json.loads(data[4 : 4 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedHeaderError(f"header is not valid JSON: {exc}") from None
    if not isinstance(header, dict) or header.get("format") != expected_format:
        raise MalformedHeaderError(
            f"expected a {expected_format!r} artifact, got {header.get('format')!r}"
            if isinstance(header, dict)
            else "header is not an object"
        )
    if header.get("version") != ARTIFACT_VERSION:
        raise MalformedHeaderError(f"unsupported version {header.get('version')!r}")
    return header, data[4 + hlen :]


def save_checkpoint(model: VectorFieldModel, path) -> None:
    arrays = []
    blobs = []
    for l, (W, b) in enumerate(zip(model.weights, model.biases)):
        arrays.append({"name": f"W{l}", "shape": list(W.shape)})
        blobs.append(np.ascontiguousarray(W, dtype="<f8").tobytes())
        arrays.append({"name": f"b{l}", "shape": list(b.shape)})
        blobs.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": ARTIFACT_VERSION,
        "state_dim": model.state_dim,
        "cond_dim": model.cond_dim,
        "spk_dim": model.spk_dim,
        "hidden": list(model.hidden),
        "arrays": arrays,
    }
    atomic_write_bytes(path, _pack_artifact(header, b"".join(blobs)))


def load_checkpoint(path) -> VectorFieldModel:
    header, payload = _unpack_artifact(Path(path).read_bytes(), CHECKPOINT_FORMAT)
    try:
        state_dim = int(header["state_dim"])
        cond_dim = int(header["cond_dim"])
        spk_dim = int(header["spk_dim"])
        hidden = tuple(int(h) for h in header["hidden"])
        arrays = header["arrays"]
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedHeaderError(f"checkpoint header missing or malformed field: {exc}") from None
    parsed = {}
    pos = 0
    for entry in arrays:
        shape = tuple(int(s) for s in entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        need = 8 * n
        if pos + need > len(payload):
            raise FormatError("checkpoint payload ends before all declared arrays")
        parsed[entry["name"]] = np.frombuffer(
            payload[pos : pos + need], dtype="<f8"
        ).reshape(shape)
        pos += need
    if pos != len(payload):
        raise FormatError(f"{len(payload) - pos} trailing bytes in checkpoint payload")
    n_layers = len(hidden) + 1
    try:
        weights = [parsed[f"W{l}"] for l in range(n_layers)]
        biases = [parsed[f"b{l}"] for l in range(n_layers)]
    except KeyError as exc:
        raise FormatError(f"checkpoint is missing array {exc}") from None
    return VectorFieldModel(
        state_dim=state_dim,
        cond_dim=cond_dim,
        spk_dim=spk_dim,
        hidden=hidden,
        weights=weights,
        biases=biases,
    )


def save_frames(seq: FrameSequence, path) -> None:
    header = {
        "format": FRAMES_FORMAT,
        "version": ARTIFACT_VERSION,
        "num_frames": seq.num_frames,
        "dim": seq.dim,
        "frame_rate_hz": seq.frame_rate_hz,
    }
    payload = np.ascontiguousarray(seq.frames, dtype="<f8").tobytes()
    atomic_write_bytes(path, _pack_artifact(header, payload))


def load_frames(path) -> FrameSequence:
    header, payload = _unpack_artifact(Path(path).read_bytes(), FRAMES_FORMAT)
    try:
        T = int(header["num_frames"])
        D = int(header["dim"])
        rate = float(header["frame_rate_hz"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedHeaderError(f"frames header missing or malformed field: {exc}") from None
    if len(payload) != 8 * T * D:
        raise FormatError(
            f"frames payload has {len(payload)} bytes, header declares {8 * T * D}"
        )
    frames = np.frombuffer(payload, dtype="<f8").reshape(T, D)
    return FrameSequence(frames=frames, frame_rate_hz=rate)
