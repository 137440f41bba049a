"""Recurrent cell primitives as plain functions over parameter dataclasses.

These are the reference (single-vector) forms; the batched training layers in
layers.py share the same parameter objects and arithmetic.

GRU step, with update gate z and reset gate r:
    z = sigmoid(W_z x + U_z h_prev + b_z)
    r = sigmoid(W_r x + U_r h_prev + b_r)
    hc = tanh(W_h x + U_h (r * h_prev) + b_h)
    h = (1 - z) * h_prev + z * hc
i.e. the standard interpolation between the previous state and the candidate.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from ..errors import ConfigError


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def _check_vec(name, v, dim):
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (dim,):
        raise ConfigError(f"{name} has shape {v.shape}, expected ({dim},)")
    return v


@dataclass
class GruParams:
    """Update-gate (w_z/u_z), reset-gate (w_r/u_r) and candidate (w_h/u_h)
    weights; w_* map input->hidden, u_* map hidden->hidden."""

    w_z: np.ndarray
    u_z: np.ndarray
    w_r: np.ndarray
    u_r: np.ndarray
    w_h: np.ndarray
    u_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_h: np.ndarray

    def __post_init__(self):
        h, i = self.w_z.shape
        for name in ("w_z", "w_r", "w_h"):
            if getattr(self, name).shape != (h, i):
                raise ConfigError(f"{name} shape mismatch")
        for name in ("u_z", "u_r", "u_h"):
            if getattr(self, name).shape != (h, h):
                raise ConfigError(f"{name} shape mismatch")
        for name in ("b_z", "b_r", "b_h"):
            if getattr(self, name).shape != (h,):
                raise ConfigError(f"{name} shape mismatch")

    @property
    def hidden_dim(self) -> int:
        return self.w_z.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_z.shape[1]

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int,
             rng: np.random.Generator) -> "GruParams":
        return cls(
            w_z=_glorot(rng, hidden_dim, input_dim), u_z=_glorot(rng, hidden_dim, hidden_dim),
            w_r=_glorot(rng, hidden_dim, input_dim), u_r=_glorot(rng, hidden_dim, hidden_dim),
            w_h=_glorot(rng, hidden_dim, input_dim), u_h=_glorot(rng, hidden_dim, hidden_dim),
            b_z=np.zeros(hidden_dim), b_r=np.zeros(hidden_dim), b_h=np.zeros(hidden_dim))


@dataclass
class RnnParams:
    """Vanilla recurrence h = activation(w_hh h_prev + w_xh x + b)."""

    w_hh: np.ndarray
    w_xh: np.ndarray
    b: np.ndarray
    activation: str = "tanh"  # "tanh" or "identity"

    def __post_init__(self):
        h = self.w_hh.shape[0]
        if self.w_hh.shape != (h, h) or self.w_xh.shape[0] != h or self.b.shape != (h,):
            raise ConfigError("RnnParams shape mismatch")
        if self.activation not in ("tanh", "identity"):
            raise ConfigError(f"unsupported activation {self.activation!r}")

    @property
    def hidden_dim(self) -> int:
        return self.w_hh.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_xh.shape[1]

    @classmethod
    def init(cls, input_dim, hidden_dim, rng):
        return cls(w_hh=_glorot(rng, hidden_dim, hidden_dim),
                   w_xh=_glorot(rng, hidden_dim, input_dim),
                   b=np.zeros(hidden_dim))


@dataclass
class LstmParams:
    """Standard LSTM gates: input i, forget f, output o, candidate g."""

    w_i: np.ndarray; u_i: np.ndarray; b_i: np.ndarray
    w_f: np.ndarray; u_f: np.ndarray; b_f: np.ndarray
    w_o: np.ndarray; u_o: np.ndarray; b_o: np.ndarray
    w_g: np.ndarray; u_g: np.ndarray; b_g: np.ndarray

    def __post_init__(self):
        h, i = self.w_i.shape
        for f_ in fields(self):
            a = getattr(self, f_.name)
            if f_.name.startswith("w_") and a.shape != (h, i):
                raise ConfigError(f"{f_.name} shape mismatch")
            if f_.name.startswith("u_") and a.shape != (h, h):
                raise ConfigError(f"{f_.name} shape mismatch")
            if f_.name.startswith("b_") and a.shape != (h,):
                raise ConfigError(f"{f_.name} shape mismatch")

    @property
    def hidden_dim(self) -> int:
        return self.w_i.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_i.shape[1]

    @classmethod
    def init(cls, input_dim, hidden_dim, rng):
        kw = {}
        for g in "ifog":
            kw[f"w_{g}"] = _glorot(rng, hidden_dim, input_dim)
            kw[f"u_{g}"] = _glorot(rng, hidden_dim, hidden_dim)
            # forget-gate bias at 1 helps gradient flow early in training
            kw[f"b_{g}"] = np.ones(hidden_dim) if g == "f" else np.zeros(hidden_dim)
        return cls(**kw)


def gru_step(params: GruParams, x_t, h_prev) -> np.ndarray:
    x_t = _check_vec("x_t", x_t, params.input_dim)
    h_prev = _check_vec("h_prev", h_prev, params.hidden_dim)
    z = sigmoid(params.w_z @ x_t + params.u_z @ h_prev + params.b_z)
    r = sigmoid(params.w_r @ x_t + params.u_r @ h_prev + params.b_r)
    hc = np.tanh(params.w_h @ x_t + params.u_h @ (r * h_prev) + params.b_h)
    return (1.0 - z) * h_prev + z * hc


def rnn_step(params: RnnParams, x_t, h_prev) -> np.ndarray:
    x_t = _check_vec("x_t", x_t, params.input_dim)
    h_prev = _check_vec("h_prev", h_prev, params.hidden_dim)
    a = params.w_hh @ h_prev + params.w_xh @ x_t + params.b
    return np.tanh(a) if params.activation == "tanh" else a


def lstm_step(params: LstmParams, x_t, h_prev, c_prev) -> tuple[np.ndarray, np.ndarray]:
    x_t = _check_vec("x_t", x_t, params.input_dim)
    h_prev = _check_vec("h_prev", h_prev, params.hidden_dim)
    c_prev = _check_vec("c_prev", c_prev, params.hidden_dim)
    i = sigmoid(params.w_i @ x_t + params.u_i @ h_prev + params.b_i)
    f = sigmoid(params.w_f @ x_t + params.u_f @ h_prev + params.b_f)
    o = sigmoid(params.w_o @ x_t + params.u_o @ h_prev + params.b_o)
    g = np.tanh(params.w_g @ x_t + params.u_g @ h_prev + params.b_g)
    c = f * c_prev + i * g
    return o * np.tanh(c), c


def run_sequence(cell: str, params, inputs: np.ndarray) -> np.ndarray:
    """Iterate a cell over [T, input] starting from h_0 = 0; returns [T, hidden]."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[0] < 1:
        raise ConfigError(f"inputs must be [T >= 1, input], got shape {inputs.shape}")
    h = np.zeros(params.hidden_dim)
    out = np.empty((inputs.shape[0], params.hidden_dim))
    if cell == "lstm":
        c = np.zeros(params.hidden_dim)
        for t, x_t in enumerate(inputs):
            h, c = lstm_step(params, x_t, h, c)
            out[t] = h
        return out
    step = {"gru": gru_step, "rnn": rnn_step}.get(cell)
    if step is None:
        raise ConfigError(f"unknown cell {cell!r}")
    for t, x_t in enumerate(inputs):
        h = step(params, x_t, h)
        out[t] = h
    return out


def bigru_sequence(fwd: GruParams, bwd: GruParams, inputs: np.ndarray) -> np.ndarray:
    """Step-wise concatenation of forward and (time-reversed) backward GRU
    outputs; returns [T, 2*hidden]."""
    if fwd.hidden_dim != bwd.hidden_dim:
        raise ConfigError(f"hidden sizes differ: {fwd.hidden_dim} vs {bwd.hidden_dim}")
    forward = run_sequence("gru", fwd, inputs)
    backward = run_sequence("gru", bwd, np.asarray(inputs)[::-1])[::-1]
    return np.concatenate([forward, backward], axis=1)
