"""Task networks: activity recognition, authentication, tracking, and the
combined multi-task net; plus weighted-voting ensembles and confidence
thresholding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .csi import AREA_X, AREA_Y, NUM_ACTIVITIES
from .errors import ConfigError, DataError, NumericError
from .neural import SequenceModel

TASKS = ("activity", "auth", "track", "combined")

# Head names used on SequenceModel instances.
HEAD_ACTIVITY = "activity"
HEAD_IDENTITY = "identity"
HEAD_COORDS = "coords"

_AREA_SCALE = np.array([AREA_X, AREA_Y])


@dataclass(frozen=True)
class TaskModelSpec:
    """Architecture of one task network."""

    task: str
    cell: str = "gru"
    hidden_dim: int = 128
    num_layers: int = 2
    num_users: int = 2

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; choose from {TASKS}")
        if self.num_users < 2 and self.task in ("auth", "combined"):
            raise ConfigError("auth requires >= 2 users")

    def heads(self) -> dict[str, tuple[str, int]]:
        heads = {
            "activity": {HEAD_ACTIVITY: ("softmax", NUM_ACTIVITIES)},
            "auth": {HEAD_IDENTITY: ("softmax", self.num_users)},
            "track": {HEAD_COORDS: ("linear", 2)},
        }
        if self.task == "combined":
            return {**heads["activity"], **heads["auth"], **heads["track"]}
        return heads[self.task]


def build_task_model(spec: TaskModelSpec, input_dim: int, seed: int = 0) -> SequenceModel:
    return SequenceModel(cell=spec.cell, input_dim=input_dim,
                         hidden_dim=spec.hidden_dim, num_layers=spec.num_layers,
                         heads=spec.heads(), seed=seed)


def coords_to_norm(coords_cm: np.ndarray) -> np.ndarray:
    """cm -> sensing-area fractions, the regression target space."""
    return np.asarray(coords_cm, dtype=np.float64) / _AREA_SCALE


def norm_to_cm(coords_norm: np.ndarray) -> np.ndarray:
    return np.asarray(coords_norm, dtype=np.float64) * _AREA_SCALE


@dataclass(frozen=True)
class MultiTaskWeights:
    """Loss mix for the combined net; the best-performing values are
    (0.15, 0.15, 0.70)."""

    alpha: float = 0.15   # activity
    beta: float = 0.15    # authentication
    gamma: float = 0.70   # tracking

    def __post_init__(self):
        for v in (self.alpha, self.beta, self.gamma):
            if v < 0:
                raise ConfigError("weights must be non-negative")
        if abs(self.alpha + self.beta + self.gamma - 1.0) > 1e-9:
            raise ConfigError("weights must sum to 1")

    def as_loss_weights(self) -> dict[str, float]:
        return {HEAD_ACTIVITY: self.alpha, HEAD_IDENTITY: self.beta,
                HEAD_COORDS: self.gamma}


def multitask_loss(act_loss: float, auth_loss: float, track_loss: float,
                   w: MultiTaskWeights) -> float:
    """alpha*activity + beta*auth + gamma*track. Track loss is expected in
    area-normalized units so the mix is unit-comparable with cross-entropy."""
    for v in (act_loss, auth_loss, track_loss):
        if not np.isfinite(v):
            raise NumericError(f"non-finite task loss {v}")
    return w.alpha * act_loss + w.beta * auth_loss + w.gamma * track_loss


@dataclass(frozen=True)
class Prediction:
    """Per-frame outputs; fields are None for heads the model lacks."""

    activity_probs: np.ndarray | None = None
    identity_probs: np.ndarray | None = None
    coords: tuple[float, float] | None = None   # cm

    @property
    def activity(self) -> int:
        return int(np.argmax(self.activity_probs))

    @property
    def identity(self) -> int:
        return int(np.argmax(self.identity_probs))

    @property
    def activity_confidence(self) -> float:
        return float(np.max(self.activity_probs))

    @property
    def identity_confidence(self) -> float:
        return float(np.max(self.identity_probs))


def _outputs_to_predictions(outs: dict[str, np.ndarray], n: int) -> list[Prediction]:
    act = outs.get(HEAD_ACTIVITY)
    ident = outs.get(HEAD_IDENTITY)
    coords = outs.get(HEAD_COORDS)
    if coords is not None:
        coords = norm_to_cm(coords)
    return [Prediction(
        activity_probs=None if act is None else act[i],
        identity_probs=None if ident is None else ident[i],
        coords=None if coords is None else (float(coords[i, 0]), float(coords[i, 1])),
    ) for i in range(n)]


def predict_frames(model: SequenceModel, frames: np.ndarray) -> list[Prediction]:
    """frames: [N, T, F] (standardized). One Prediction per frame."""
    outs = model.predict_batched(frames)
    return _outputs_to_predictions(outs, frames.shape[0])


def ensemble_outputs(members: list[tuple[SequenceModel, float]],
                     frames: np.ndarray) -> dict[str, np.ndarray]:
    """Weighted soft voting over member outputs.

    Classification heads: weighted sum of probability distributions,
    renormalized. Regression heads: weighted mean.
    """
    if not members:
        raise ConfigError("empty ensemble")
    weights = np.array([w for _, w in members], dtype=np.float64)
    if (weights < 0).any() or weights.sum() <= 0:
        raise ConfigError("ensemble weights must be >= 0 and not all zero")
    head_kinds = members[0][0].head_kinds
    for m, _ in members[1:]:
        if m.head_kinds != head_kinds:
            raise ConfigError("ensemble members expose different heads")
    combined: dict[str, np.ndarray] = {}
    for (m, w) in members:
        for name, out in m.predict_batched(frames).items():
            contrib = w * out
            combined[name] = combined.get(name, 0) + contrib
    for name in combined:
        combined[name] = combined[name] / weights.sum()
        if head_kinds[name] == "softmax":
            combined[name] /= combined[name].sum(axis=1, keepdims=True)
    return combined


def ensemble_predict(members: list[tuple[SequenceModel, float]],
                     frame: np.ndarray) -> Prediction:
    """Weighted-voting prediction for a single frame [T, F]."""
    frame = np.asarray(frame, dtype=np.float64)
    outs = ensemble_outputs(members, frame[None])
    return _outputs_to_predictions(outs, 1)[0]


def authenticate(prediction: Prediction, threshold: float) -> int | None:
    """Accept the argmax identity iff its confidence >= threshold, else reject
    (returns None for an unknown person)."""
    if not 0 < threshold <= 1:
        raise ConfigError(f"threshold {threshold} outside (0, 1]")
    if prediction.identity_probs is None:
        raise DataError("prediction carries no identity distribution")
    return prediction.identity if prediction.identity_confidence >= threshold else None


def classify_activity(prediction: Prediction, threshold: float = 0.75) -> int | None:
    """Emit the argmax activity iff its confidence >= threshold, else abstain."""
    if not 0 < threshold <= 1:
        raise ConfigError(f"threshold {threshold} outside (0, 1]")
    if prediction.activity_probs is None:
        raise DataError("prediction carries no activity distribution")
    return prediction.activity if prediction.activity_confidence >= threshold else None


def confidence_rate(confidences: np.ndarray, threshold: float) -> float:
    return float(np.mean(np.asarray(confidences) >= threshold))


def robustness_report(model: SequenceModel, seen, unseen,
                      thresholds, head: str = HEAD_IDENTITY) -> list[dict]:
    """Fraction of predictions whose confidence clears each threshold, on a
    seen-user set vs an unseen-user set.

    seen/unseen are FrameDatasets; their user label sets must be disjoint.
    """
    seen_users = set(np.unique(seen.user[seen.user >= 0]).tolist())
    unseen_users = set(np.unique(unseen.user[unseen.user >= 0]).tolist())
    overlap = seen_users & unseen_users
    if overlap:
        raise DataError(f"users {sorted(overlap)} appear in both sets")
    conf_seen = model.predict_batched(seen.data)[head].max(axis=1)
    conf_unseen = model.predict_batched(unseen.data)[head].max(axis=1)
    return [{"threshold": float(t),
             "seen_rate": confidence_rate(conf_seen, t),
             "unseen_rate": confidence_rate(conf_unseen, t)}
            for t in thresholds]
