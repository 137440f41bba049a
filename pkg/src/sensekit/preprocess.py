"""Raw CSI streams -> balanced, labeled frame datasets.

Pipeline order: dead-subcarrier detection (train streams only), sparsity
reduction to amplitudes, zero-phase Butterworth low-pass, windowing into
frames, class balancing, per-feature standardization from train statistics.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .csi import (ACTIVITIES, AREA_CENTER, NOAC, Annotation, CsiStream, Frame)
from .errors import ConfigError, DataError


@dataclass(frozen=True)
class PreprocessConfig:
    zero_threshold: float = 0.01      # fraction of stream median amplitude
    filter_order: int = 10
    cutoff: float = 200.0             # Hz; clamped to 0.45 * fs when needed
    window_seconds: float = 0.8
    hop: int = 80                     # samples
    balance_tolerance: float = 0.05

    def __post_init__(self):
        if self.filter_order < 1:
            raise ConfigError("filter_order must be >= 1")
        if self.cutoff <= 0:
            raise ConfigError("cutoff must be positive")
        if self.hop < 1:
            raise ConfigError("hop must be >= 1")

    def effective_cutoff(self, fs: float) -> float:
        """The configured cutoff, clamped to 0.45*fs so the digital filter
        stays realizable at low sampling rates (e.g. 45 Hz at fs=100)."""
        return min(self.cutoff, 0.45 * fs)

    def window_samples(self, fs: float) -> int:
        n = self.window_seconds * fs
        if abs(n - round(n)) > 1e-9:
            raise ConfigError(f"window T*fs = {n} is not an integer")
        return round(n)


# ---------------------------------------------------------------------------
# Sparsity reduction
# ---------------------------------------------------------------------------

def _dead_from_amplitude(amp: np.ndarray, threshold: float) -> set[int]:
    """amp: [time, channels, S]. Dead = time/channel-mean amplitude below
    threshold * median of all amplitude entries."""
    median = float(np.median(amp))
    if median <= 0:
        raise DataError("degenerate stream: median amplitude is zero")
    per_sub = amp.mean(axis=(0, 1))
    dead = set(np.flatnonzero(per_sub < threshold * median).tolist())
    if len(dead) == amp.shape[2]:
        raise DataError("degenerate stream: every subcarrier is dead")
    return dead


def detect_dead_subcarriers(stream: CsiStream, threshold: float = 0.01) -> set[int]:
    """Subcarrier indices (0-based) whose mean amplitude is ~zero."""
    if stream.num_samples == 0:
        raise DataError("empty stream")
    return _dead_from_amplitude(stream.amplitudes(), threshold)


def detect_dead_subcarriers_pooled(streams: list[CsiStream],
                                   threshold: float = 0.01) -> set[int]:
    """Dead set computed jointly over several (training) streams."""
    if not streams:
        raise DataError("no streams")
    amp = np.concatenate([s.amplitudes() for s in streams], axis=0)
    return _dead_from_amplitude(amp, threshold)


def sparsity_reduce(stream: CsiStream, dead_set: set[int]) -> np.ndarray:
    """Amplitude tensor [time, M*N, S_retained]; phase discarded, retained
    subcarriers keep their original order."""
    s = stream.config.num_subcarriers
    if any(not 0 <= d < s for d in dead_set):
        raise ConfigError(f"dead set {sorted(dead_set)} outside [0, {s})")
    keep = [i for i in range(s) if i not in dead_set]
    return stream.amplitudes()[:, :, keep]


# ---------------------------------------------------------------------------
# Butterworth low-pass
# ---------------------------------------------------------------------------

def butterworth_sos(fs: float, cutoff: float, order: int) -> np.ndarray:
    """Second-order sections of the bilinear-transformed (prewarped)
    Butterworth low-pass."""
    if not 0 < cutoff < fs / 2:
        raise ConfigError(f"cutoff {cutoff} Hz not in (0, fs/2 = {fs / 2}) Hz")
    if order < 1:
        raise ConfigError("order must be >= 1")
    return signal.butter(order, cutoff, btype="low", fs=fs, output="sos")


def butterworth_lowpass(x: np.ndarray, fs: float, cutoff: float,
                        order: int = 10, axis: int = 0) -> np.ndarray:
    """Zero-phase (forward-backward) Butterworth low-pass; output length equals
    input length."""
    sos = butterworth_sos(fs, cutoff, order)
    return signal.sosfiltfilt(sos, np.asarray(x, dtype=np.float64), axis=axis)


# ---------------------------------------------------------------------------
# Framing
# ---------------------------------------------------------------------------

def _annotation_covering(annotations, t: float, duration: float) -> Annotation:
    for a in annotations[:-1]:
        if a.contains(t):
            return a
    return annotations[-1]


def make_frames(tensor: np.ndarray, annotations: tuple[Annotation, ...], fs: float,
                window: int, hop: int, stream_id: str = "") -> list[Frame]:
    """Cut [time, C, S_ret] into labeled frames of [window, C*S_ret].

    Labels come from the annotation covering the window midpoint; windows
    straddling a boundary by more than 20% of their length are discarded.
    """
    n_time = tensor.shape[0]
    feats = tensor.reshape(n_time, -1)
    frames = []
    for w in range(0, n_time - window + 1, hop):
        t0, t1 = w / fs, (w + window) / fs
        ann = _annotation_covering(annotations, (t0 + t1) / 2.0, n_time / fs)
        overlap = min(ann.end, t1) - max(ann.start, t0)
        if (t1 - t0) - overlap > 0.2 * (t1 - t0) + 1e-12:
            continue
        if ann.position_track is not None:
            a0 = round(ann.start * fs)
            idx = np.clip(np.arange(w, w + window) - a0, 0, len(ann.position_track) - 1)
            coord = tuple(ann.position_track[idx].mean(axis=0))
        else:
            coord = AREA_CENTER
        frames.append(Frame(data=feats[w:w + window], activity_label=ann.activity,
                            user_label=ann.user, coord_label=coord,
                            source_window=(stream_id, w)))
    return frames


# ---------------------------------------------------------------------------
# Class balancing
# ---------------------------------------------------------------------------

def balance_classes(frames: list[Frame], plan: dict[str, int] | None = None,
                    seed: int = 0) -> list[Frame]:
    """Down-sample over-represented classes; never fabricates frames.

    Default plan: NoAc is reduced to the mean count of the other classes.
    An explicit plan maps activity name -> maximum frame count.
    """
    counts = {k: 0 for k in range(len(ACTIVITIES))}
    for f in frames:
        counts[f.activity_label] += 1
    missing = [ACTIVITIES[k] for k, n in counts.items() if n == 0]
    if missing:
        raise DataError(f"classes with zero frames: {', '.join(missing)}")

    targets = dict(counts)
    if plan is None:
        others = [n for k, n in counts.items() if k != NOAC]
        targets[NOAC] = min(counts[NOAC], round(np.mean(others)))
    else:
        for name, cap in plan.items():
            k = ACTIVITIES.index(name)
            targets[k] = min(counts[k], int(cap))

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xBA1]))
    keep_mask = np.ones(len(frames), dtype=bool)
    for k in sorted(targets):
        if targets[k] >= counts[k]:
            continue
        idx = np.flatnonzero([f.activity_label == k for f in frames])
        drop = rng.choice(idx, size=counts[k] - targets[k], replace=False)
        keep_mask[drop] = False
    return [f for f, keep in zip(frames, keep_mask) if keep]


# ---------------------------------------------------------------------------
# Frame dataset container + file format ("FRM1")
# ---------------------------------------------------------------------------

_FRAME_MAGIC = b"FRM1"


@dataclass
class FrameDataset:
    """Packed frames ready for training. `data` may be standardized; the
    statistics used are kept in `norm_mean` / `norm_std` (None if raw)."""

    data: np.ndarray                 # [N, T, F] float64
    activity: np.ndarray             # [N] int16
    user: np.ndarray                 # [N] int16, -1 for none
    coords: np.ndarray               # [N, 2] float64, cm
    stream_ids: list[str]
    source_stream: np.ndarray        # [N] int32, index into stream_ids
    source_start: np.ndarray         # [N] int32, window start sample
    dead_subcarriers: list[int] = field(default_factory=list)
    norm_mean: np.ndarray | None = None
    norm_std: np.ndarray | None = None

    def __len__(self):
        return self.data.shape[0]

    @property
    def num_features(self) -> int:
        return self.data.shape[2]

    @classmethod
    def from_frames(cls, frames: list[Frame], dead_subcarriers=()) -> "FrameDataset":
        if not frames:
            raise DataError("no frames")
        ids: list[str] = []
        index: dict[str, int] = {}
        src = np.empty(len(frames), dtype=np.int32)
        for i, f in enumerate(frames):
            sid = f.source_window[0]
            if sid not in index:
                index[sid] = len(ids)
                ids.append(sid)
            src[i] = index[sid]
        return cls(
            data=np.ascontiguousarray(np.stack([f.data for f in frames]),
                                      dtype=np.float64),
            activity=np.asarray([f.activity_label for f in frames], dtype=np.int16),
            user=np.asarray([-1 if f.user_label is None else f.user_label
                             for f in frames], dtype=np.int16),
            coords=np.asarray([f.coord_label for f in frames], dtype=np.float64),
            stream_ids=ids, source_stream=src,
            source_start=np.asarray([f.source_window[1] for f in frames], dtype=np.int32),
            dead_subcarriers=sorted(dead_subcarriers),
        )

    def compute_stats(self) -> tuple[np.ndarray, np.ndarray]:
        mean = self.data.mean(axis=(0, 1))
        std = np.maximum(self.data.std(axis=(0, 1)), 1e-8)
        return mean, std

    def standardize(self, mean: np.ndarray, std: np.ndarray) -> None:
        if self.norm_mean is not None:
            raise DataError("dataset already standardized")
        self.data = (self.data - mean) / std
        self.norm_mean = np.asarray(mean, dtype=np.float64)
        self.norm_std = np.asarray(std, dtype=np.float64)

    def save(self, path) -> None:
        header = {
            "count": len(self),
            "t_steps": int(self.data.shape[1]),
            "features": int(self.data.shape[2]),
            "activities": list(ACTIVITIES),
            "stream_ids": self.stream_ids,
            "dead_subcarriers": list(self.dead_subcarriers),
            "normalization": None if self.norm_mean is None else {
                "mean": self.norm_mean.tolist(),
                "std": self.norm_std.tolist(),
            },
        }
        blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
        with open(path, "wb") as f:
            f.write(_FRAME_MAGIC)
            f.write(struct.pack("<I", len(blob)))
            f.write(blob)
            f.write(np.ascontiguousarray(self.data, dtype=np.float32).tobytes())
            f.write(self.activity.astype("<i2").tobytes())
            f.write(self.user.astype("<i2").tobytes())
            f.write(self.coords.astype("<f4").tobytes())
            f.write(self.source_stream.astype("<i4").tobytes())
            f.write(self.source_start.astype("<i4").tobytes())

    @classmethod
    def load(cls, path) -> "FrameDataset":
        with open(path, "rb") as f:
            raw = f.read()
        if raw[:4] != _FRAME_MAGIC:
            raise DataError(f"{path}: not a frame dataset file")
        (hlen,) = struct.unpack("<I", raw[4:8])
        header = json.loads(raw[8:8 + hlen].decode())
        n, t, fdim = header["count"], header["t_steps"], header["features"]
        off = 8 + hlen

        def take(dtype, shape):
            nonlocal off
            arr = np.frombuffer(raw, dtype=dtype, count=int(np.prod(shape)), offset=off)
            off += arr.nbytes
            return arr.reshape(shape).copy()

        data = take("<f4", (n, t, fdim)).astype(np.float64)
        activity = take("<i2", (n,)).astype(np.int16)
        user = take("<i2", (n,)).astype(np.int16)
        coords = take("<f4", (n, 2)).astype(np.float64)
        src = take("<i4", (n,)).astype(np.int32)
        start = take("<i4", (n,)).astype(np.int32)
        norm = header["normalization"]
        return cls(data=data, activity=activity, user=user, coords=coords,
                   stream_ids=header["stream_ids"], source_stream=src,
                   source_start=start, dead_subcarriers=header["dead_subcarriers"],
                   norm_mean=None if norm is None else np.asarray(norm["mean"]),
                   norm_std=None if norm is None else np.asarray(norm["std"]))


# ---------------------------------------------------------------------------
# End-to-end pipeline
# ---------------------------------------------------------------------------

def stream_to_frames(stream: CsiStream, dead_set: set[int],
                     cfg: PreprocessConfig) -> list[Frame]:
    fs = stream.config.sampling_rate
    amp = sparsity_reduce(stream, dead_set)
    filt = butterworth_lowpass(amp, fs, cfg.effective_cutoff(fs), cfg.filter_order)
    filt = np.maximum(filt, 0.0)  # amplitudes stay non-negative
    return make_frames(filt, stream.annotations, fs,
                       cfg.window_samples(fs), cfg.hop, stream.stream_id)


def preprocess_splits(streams_by_split: dict[str, list[CsiStream]],
                      cfg: PreprocessConfig, seed: int = 0,
                      balance: bool = True) -> dict[str, FrameDataset]:
    """Full preprocessing over manifest splits.

    The dead-subcarrier set and normalization statistics are computed on the
    train split only and frozen for every other split.
    """
    if not streams_by_split.get("train"):
        raise DataError("no train split in the input")
    dead = detect_dead_subcarriers_pooled(streams_by_split["train"], cfg.zero_threshold)

    datasets = {}
    for i, (split, streams) in enumerate(sorted(streams_by_split.items())):
        if not streams:
            continue
        frames = []
        for s in streams:
            frames.extend(stream_to_frames(s, dead, cfg))
        if balance:
            frames = balance_classes(frames, seed=seed + i)
        datasets[split] = FrameDataset.from_frames(frames, dead_subcarriers=dead)

    mean, std = datasets["train"].compute_stats()
    for ds in datasets.values():
        ds.standardize(mean, std)
    return datasets
