"""Batched layers with hand-written reverse-mode gradients.

Every layer exposes params()/grads() dicts of same-keyed arrays, forward(x)
and backward(dout); backward accumulates into grads and returns dL/dx.
Inputs are [batch, time, features] for recurrent layers.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from .cells import GruParams, LstmParams, RnnParams, sigmoid


class Layer:
    def params(self) -> dict[str, np.ndarray]:
        return {}

    def grads(self) -> dict[str, np.ndarray]:
        return {}

    def zero_grads(self) -> None:
        for g in self.grads().values():
            g[...] = 0.0


def _params_dict(obj, names):
    return {n: getattr(obj, n) for n in names}


class GruLayer(Layer):
    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator):
        self.p = GruParams.init(input_dim, hidden_dim, rng)
        self._names = ["w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h"]
        self._g = {n: np.zeros_like(getattr(self.p, n)) for n in self._names}
        self._cache = None

    @property
    def output_dim(self):
        return self.p.hidden_dim

    def params(self):
        return _params_dict(self.p, self._names)

    def grads(self):
        return self._g

    def forward(self, x: np.ndarray) -> np.ndarray:
        p = self.p
        b, t_steps, _ = x.shape
        h = np.zeros((b, p.hidden_dim))
        hs, zs, rs, hcs, hprevs = [], [], [], [], []
        for t in range(t_steps):
            x_t = x[:, t]
            z = sigmoid(x_t @ p.w_z.T + h @ p.u_z.T + p.b_z)
            r = sigmoid(x_t @ p.w_r.T + h @ p.u_r.T + p.b_r)
            hc = np.tanh(x_t @ p.w_h.T + (r * h) @ p.u_h.T + p.b_h)
            hprevs.append(h)
            h = (1.0 - z) * h + z * hc
            hs.append(h); zs.append(z); rs.append(r); hcs.append(hc)
        self._cache = (x, hprevs, zs, rs, hcs)
        return np.stack(hs, axis=1)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        p, g = self.p, self._g
        x, hprevs, zs, rs, hcs = self._cache
        b, t_steps, _ = x.shape
        dx = np.zeros_like(x)
        dh_next = np.zeros((b, p.hidden_dim))
        for t in range(t_steps - 1, -1, -1):
            x_t, h_prev, z, r, hc = x[:, t], hprevs[t], zs[t], rs[t], hcs[t]
            dh = dout[:, t] + dh_next
            dz = dh * (hc - h_prev)
            dhc = dh * z
            dh_prev = dh * (1.0 - z)

            da_c = dhc * (1.0 - hc ** 2)
            g["w_h"] += da_c.T @ x_t
            g["u_h"] += da_c.T @ (r * h_prev)
            g["b_h"] += da_c.sum(axis=0)
            drh = da_c @ p.u_h
            dr = drh * h_prev
            dh_prev += drh * r

            da_z = dz * z * (1.0 - z)
            g["w_z"] += da_z.T @ x_t
            g["u_z"] += da_z.T @ h_prev
            g["b_z"] += da_z.sum(axis=0)
            dh_prev += da_z @ p.u_z

            da_r = dr * r * (1.0 - r)
            g["w_r"] += da_r.T @ x_t
            g["u_r"] += da_r.T @ h_prev
            g["b_r"] += da_r.sum(axis=0)
            dh_prev += da_r @ p.u_r

            dx[:, t] = da_c @ p.w_h + da_z @ p.w_z + da_r @ p.w_r
            dh_next = dh_prev
        return dx


class RnnLayer(Layer):
    def __init__(self, input_dim, hidden_dim, rng):
        self.p = RnnParams.init(input_dim, hidden_dim, rng)
        self._names = ["w_hh", "w_xh", "b"]
        self._g = {n: np.zeros_like(getattr(self.p, n)) for n in self._names}
        self._cache = None

    @property
    def output_dim(self):
        return self.p.hidden_dim

    def params(self):
        return _params_dict(self.p, self._names)

    def grads(self):
        return self._g

    def forward(self, x):
        p = self.p
        b, t_steps, _ = x.shape
        h = np.zeros((b, p.hidden_dim))
        hs, hprevs = [], []
        for t in range(t_steps):
            hprevs.append(h)
            h = np.tanh(x[:, t] @ p.w_xh.T + h @ p.w_hh.T + p.b)
            hs.append(h)
        self._cache = (x, hprevs, hs)
        return np.stack(hs, axis=1)

    def backward(self, dout):
        p, g = self.p, self._g
        x, hprevs, hs = self._cache
        b, t_steps, _ = x.shape
        dx = np.zeros_like(x)
        dh_next = np.zeros((b, p.hidden_dim))
        for t in range(t_steps - 1, -1, -1):
            dh = dout[:, t] + dh_next
            da = dh * (1.0 - hs[t] ** 2)
            g["w_xh"] += da.T @ x[:, t]
            g["w_hh"] += da.T @ hprevs[t]
            g["b"] += da.sum(axis=0)
            dx[:, t] = da @ p.w_xh
            dh_next = da @ p.w_hh
        return dx


class LstmLayer(Layer):
    def __init__(self, input_dim, hidden_dim, rng):
        self.p = LstmParams.init(input_dim, hidden_dim, rng)
        self._names = [f"{k}_{gate}" for gate in "ifog" for k in ("w", "u", "b")]
        self._g = {n: np.zeros_like(getattr(self.p, n)) for n in self._names}
        self._cache = None

    @property
    def output_dim(self):
        return self.p.hidden_dim

    def params(self):
        return _params_dict(self.p, self._names)

    def grads(self):
        return self._g

    def forward(self, x):
        p = self.p
        b, t_steps, _ = x.shape
        h = np.zeros((b, p.hidden_dim))
        c = np.zeros((b, p.hidden_dim))
        cache = []
        hs = []
        for t in range(t_steps):
            x_t = x[:, t]
            i = sigmoid(x_t @ p.w_i.T + h @ p.u_i.T + p.b_i)
            f = sigmoid(x_t @ p.w_f.T + h @ p.u_f.T + p.b_f)
            o = sigmoid(x_t @ p.w_o.T + h @ p.u_o.T + p.b_o)
            gc = np.tanh(x_t @ p.w_g.T + h @ p.u_g.T + p.b_g)
            c_new = f * c + i * gc
            tc = np.tanh(c_new)
            cache.append((h, c, i, f, o, gc, tc))
            h, c = o * tc, c_new
            hs.append(h)
        self._cache = (x, cache)
        return np.stack(hs, axis=1)

    def backward(self, dout):
        p, g = self.p, self._g
        x, cache = self._cache
        b, t_steps, _ = x.shape
        dx = np.zeros_like(x)
        dh_next = np.zeros((b, p.hidden_dim))
        dc_next = np.zeros((b, p.hidden_dim))
        for t in range(t_steps - 1, -1, -1):
            h_prev, c_prev, i, f, o, gc, tc = cache[t]
            x_t = x[:, t]
            dh = dout[:, t] + dh_next
            do = dh * tc
            dc = dh * o * (1.0 - tc ** 2) + dc_next
            di, df, dg = dc * gc, dc * c_prev, dc * i
            dc_next = dc * f

            da_i = di * i * (1.0 - i)
            da_f = df * f * (1.0 - f)
            da_o = do * o * (1.0 - o)
            da_g = dg * (1.0 - gc ** 2)
            dh_prev = np.zeros_like(dh)
            for gate, da in (("i", da_i), ("f", da_f), ("o", da_o), ("g", da_g)):
                g[f"w_{gate}"] += da.T @ x_t
                g[f"u_{gate}"] += da.T @ h_prev
                g[f"b_{gate}"] += da.sum(axis=0)
                dh_prev += da @ getattr(p, f"u_{gate}")
                dx[:, t] += da @ getattr(p, f"w_{gate}")
            dh_next = dh_prev
        return dx


class BiGruLayer(Layer):
    """Forward GRU over the sequence plus a backward GRU over the reversed
    sequence, outputs concatenated step-wise: output dim = 2 * hidden."""

    def __init__(self, input_dim, hidden_dim, rng):
        self.fwd = GruLayer(input_dim, hidden_dim, rng)
        self.bwd = GruLayer(input_dim, hidden_dim, rng)

    @property
    def output_dim(self):
        return 2 * self.fwd.output_dim

    def params(self):
        out = {f"fwd.{k}": v for k, v in self.fwd.params().items()}
        out.update({f"bwd.{k}": v for k, v in self.bwd.params().items()})
        return out

    def grads(self):
        out = {f"fwd.{k}": v for k, v in self.fwd.grads().items()}
        out.update({f"bwd.{k}": v for k, v in self.bwd.grads().items()})
        return out

    def forward(self, x):
        f = self.fwd.forward(x)
        b = self.bwd.forward(x[:, ::-1])[:, ::-1]
        return np.concatenate([f, b], axis=2)

    def backward(self, dout):
        h = self.fwd.output_dim
        dxf = self.fwd.backward(dout[:, :, :h])
        dxb = self.bwd.backward(dout[:, ::-1, h:])[:, ::-1]
        return dxf + dxb


class MeanPool(Layer):
    """Mean over the time axis: [B, T, H] -> [B, H]."""

    def __init__(self):
        self._t = None

    def forward(self, x):
        self._t = x.shape[1]
        return x.mean(axis=1)

    def backward(self, dout):
        return np.repeat(dout[:, None, :] / self._t, self._t, axis=1)


class Dense(Layer):
    def __init__(self, input_dim, output_dim, rng):
        limit = np.sqrt(6.0 / (input_dim + output_dim))
        self.w = rng.uniform(-limit, limit, size=(output_dim, input_dim))
        self.b = np.zeros(output_dim)
        self._g = {"w": np.zeros_like(self.w), "b": np.zeros_like(self.b)}
        self._x = None

    @property
    def output_dim(self):
        return self.w.shape[0]

    def params(self):
        return {"w": self.w, "b": self.b}

    def grads(self):
        return self._g

    def forward(self, x):
        self._x = x
        return x @ self.w.T + self.b

    def backward(self, dout):
        self._g["w"] += dout.T @ self._x
        self._g["b"] += dout.sum(axis=0)
        return dout @ self.w


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray,
                          ) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch; returns (loss, dL/dlogits)."""
    if logits.shape[0] != labels.shape[0]:
        raise ConfigError("batch size mismatch between logits and labels")
    n = logits.shape[0]
    probs = softmax(logits)
    loss = -np.log(np.maximum(probs[np.arange(n), labels], 1e-300)).mean()
    d = probs.copy()
    d[np.arange(n), labels] -= 1.0
    return float(loss), d / n


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over all entries; returns (loss, dL/dpred)."""
    if pred.shape != target.shape:
        raise ConfigError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff ** 2))
    return loss, 2.0 * diff / diff.size


class Adam:
    """Adaptive-moment gradient descent over named parameter dicts."""

    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            p -= self.lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)
