"""Sequence models (shared recurrent trunk + one or more heads), the training
loop and the "NNCK" checkpoint format."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DataError, TrainingError
from .layers import (Adam, BiGruLayer, Dense, GruLayer, LstmLayer, MeanPool,
                     RnnLayer, mse_loss, softmax, softmax_cross_entropy)

CELLS = {"rnn": RnnLayer, "lstm": LstmLayer, "gru": GruLayer, "bigru": BiGruLayer}

# head kind -> (loss fn, is_classifier)
HEAD_KINDS = ("softmax", "linear")


class SequenceModel:
    """Recurrent trunk -> mean pooling over time -> parallel dense heads.

    heads: {name: (kind, dim)} with kind "softmax" (classifier logits) or
    "linear" (regressor). A single-head model is the degenerate case.
    """

    def __init__(self, cell: str, input_dim: int, hidden_dim: int,
                 num_layers: int, heads: dict[str, tuple[str, int]], seed: int = 0):
        if cell not in CELLS:
            raise ConfigError(f"unknown cell {cell!r}; choose from {sorted(CELLS)}")
        if num_layers < 1 or hidden_dim < 1:
            raise ConfigError("hidden_dim and num_layers must be >= 1")
        if not heads:
            raise ConfigError("at least one head required")
        for name, (kind, dim) in heads.items():
            if kind not in HEAD_KINDS or dim < 1:
                raise ConfigError(f"bad head {name}: ({kind}, {dim})")

        self.spec = {"cell": cell, "input_dim": input_dim, "hidden_dim": hidden_dim,
                     "num_layers": num_layers,
                     "heads": {k: list(v) for k, v in sorted(heads.items())},
                     "seed": seed}
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5E0]))
        layer_cls = CELLS[cell]
        self.trunk = []
        dim = input_dim
        for _ in range(num_layers):
            layer = layer_cls(dim, hidden_dim, rng)
            self.trunk.append(layer)
            dim = layer.output_dim
        self.pool = MeanPool()
        self.heads = {name: Dense(dim, hdim, rng)
                      for name, (kind, hdim) in sorted(heads.items())}
        self.head_kinds = {name: kind for name, (kind, _) in heads.items()}

    # -- parameter plumbing --------------------------------------------------

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.trunk):
            out.update({f"trunk{i}.{k}": v for k, v in layer.params().items()})
        for name, head in self.heads.items():
            out.update({f"head.{name}.{k}": v for k, v in head.params().items()})
        return out

    def grads(self) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.trunk):
            out.update({f"trunk{i}.{k}": v for k, v in layer.grads().items()})
        for name, head in self.heads.items():
            out.update({f"head.{name}.{k}": v for k, v in head.grads().items()})
        return out

    def zero_grads(self) -> None:
        for g in self.grads().values():
            g[...] = 0.0

    # -- forward / backward ---------------------------------------------------

    def forward(self, x: np.ndarray) -> dict[str, np.ndarray]:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[2] != self.spec["input_dim"]:
            raise ConfigError(
                f"input shape {x.shape} incompatible with input_dim {self.spec['input_dim']}")
        h = x
        for layer in self.trunk:
            h = layer.forward(h)
        pooled = self.pool.forward(h)
        return {name: head.forward(pooled) for name, head in self.heads.items()}

    def predict(self, x: np.ndarray) -> dict[str, np.ndarray]:
        """Softmax heads yield probability vectors, linear heads raw outputs."""
        outs = self.forward(x)
        return {name: softmax(o) if self.head_kinds[name] == "softmax" else o
                for name, o in outs.items()}

    def train_batch(self, x: np.ndarray, targets: dict[str, np.ndarray],
                    loss_weights: dict[str, float] | None = None,
                    ) -> tuple[float, dict[str, float]]:
        """One forward/backward pass; grads are zeroed first and left populated."""
        self.zero_grads()
        outs = self.forward(x)
        weights = loss_weights or {name: 1.0 for name in self.heads}
        losses: dict[str, float] = {}
        dpooled = None
        for name, head in self.heads.items():
            if name not in targets:
                raise DataError(f"missing target for head {name!r}")
            if self.head_kinds[name] == "softmax":
                loss, dout = softmax_cross_entropy(outs[name], targets[name])
            else:
                loss, dout = mse_loss(outs[name], targets[name])
            losses[name] = loss
            d = head.backward(dout * weights.get(name, 0.0))
            dpooled = d if dpooled is None else dpooled + d
        dh = self.pool.backward(dpooled)
        for layer in reversed(self.trunk):
            dh = layer.backward(dh)
        total = sum(weights.get(name, 0.0) * losses[name] for name in self.heads)
        return float(total), losses

    def eval_loss(self, x, targets, loss_weights=None,
                  batch_size: int = 256) -> tuple[float, dict[str, float]]:
        weights = loss_weights or {name: 1.0 for name in self.heads}
        totals = {name: 0.0 for name in self.heads}
        n = x.shape[0]
        for i in range(0, n, batch_size):
            outs = self.forward(x[i:i + batch_size])
            m = min(batch_size, n - i)
            for name in self.heads:
                if self.head_kinds[name] == "softmax":
                    loss, _ = softmax_cross_entropy(outs[name], targets[name][i:i + m])
                else:
                    loss, _ = mse_loss(outs[name], targets[name][i:i + m])
                totals[name] += loss * m
        losses = {name: v / n for name, v in totals.items()}
        total = sum(weights.get(name, 0.0) * losses[name] for name in self.heads)
        return float(total), losses

    def predict_batched(self, x: np.ndarray, batch_size: int = 256,
                        ) -> dict[str, np.ndarray]:
        parts: dict[str, list[np.ndarray]] = {name: [] for name in self.heads}
        for i in range(0, x.shape[0], batch_size):
            for name, out in self.predict(x[i:i + batch_size]).items():
                parts[name].append(out)
        return {name: np.concatenate(chunks) for name, chunks in parts.items()}


@dataclass
class TrainConfig:
    epochs: int = 60
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    seed: int = 0
    loss_weights: dict[str, float] | None = None
    patience: int | None = None   # early stop on val loss; default off
    target_accuracy: float | None = None  # stop once every classifier head's
                                          # val accuracy reaches this level


def train_model(model: SequenceModel, train_x: np.ndarray,
                train_targets: dict[str, np.ndarray],
                val_x: np.ndarray | None = None,
                val_targets: dict[str, np.ndarray] | None = None,
                cfg: TrainConfig = TrainConfig()) -> list[dict]:
    """Mini-batch Adam training. Deterministic given cfg.seed.

    Returns one history row per epoch with train/val losses and, for
    classifier heads, validation accuracy.
    """
    if train_x.shape[0] == 0:
        raise DataError("empty training set")
    opt = Adam(model.params(), lr=cfg.learning_rate, beta1=cfg.beta1, beta2=cfg.beta2)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x7124]))
    n = train_x.shape[0]
    history = []
    best_val = np.inf
    since_best = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        head_totals = {name: 0.0 for name in model.heads}
        for i in range(0, n, cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            batch_targets = {k: v[idx] for k, v in train_targets.items()}
            loss, losses = model.train_batch(train_x[idx], batch_targets,
                                             cfg.loss_weights)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}", epoch=epoch)
            total += loss * len(idx)
            for name, v in losses.items():
                head_totals[name] += v * len(idx)
            opt.step(model.grads())
        row = {"epoch": epoch, "train_loss": total / n}
        row.update({f"train_{name}_loss": v / n for name, v in head_totals.items()})
        if val_x is not None and val_x.shape[0]:
            val_loss, val_losses = model.eval_loss(val_x, val_targets, cfg.loss_weights)
            row["val_loss"] = val_loss
            row.update({f"val_{name}_loss": v for name, v in val_losses.items()})
            preds = model.predict_batched(val_x)
            accs = []
            for name, kind in model.head_kinds.items():
                if kind == "softmax":
                    acc = float((preds[name].argmax(axis=1) == val_targets[name]).mean())
                    row[f"val_{name}_accuracy"] = acc
                    accs.append(acc)
            if cfg.target_accuracy is not None and accs \
                    and min(accs) >= cfg.target_accuracy:
                history.append(row)
                break
            if cfg.patience is not None:
                if val_loss < best_val - 1e-12:
                    best_val, since_best = val_loss, 0
                else:
                    since_best += 1
                    if since_best > cfg.patience:
                        history.append(row)
                        break
        history.append(row)
    return history


# ---------------------------------------------------------------------------
# Checkpoint format: magic "NNCK", JSON header (model spec + parameter table
# + caller metadata), then packed float32 blobs in header order.
# ---------------------------------------------------------------------------

_CKPT_MAGIC = b"NNCK"


def save_checkpoint(path, model: SequenceModel, meta: dict | None = None) -> None:
    params = model.params()
    names = sorted(params)
    header = {
        "spec": model.spec,
        "params": [{"name": n, "shape": list(params[n].shape)} for n in names],
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for n in names:
            f.write(np.ascontiguousarray(params[n], dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[SequenceModel, dict]:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != _CKPT_MAGIC:
        raise DataError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8:8 + hlen].decode())
    spec = header["spec"]
    model = SequenceModel(cell=spec["cell"], input_dim=spec["input_dim"],
                          hidden_dim=spec["hidden_dim"], num_layers=spec["num_layers"],
                          heads={k: tuple(v) for k, v in spec["heads"].items()},
                          seed=spec["seed"])
    params = model.params()
    off = 8 + hlen
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=off)
        off += arr.nbytes
        params[entry["name"]][...] = arr.reshape(shape).astype(np.float64)
    return model, header["meta"]
