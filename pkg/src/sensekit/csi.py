"""Domain types for CSI streams, annotations, frames and dataset manifests.

All containers are frozen dataclasses; array payloads are marked read-only
after construction so instances are safe to share across threads.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError

SPEED_OF_LIGHT = 299792458.0  # m/s

ACTIVITIES = ("sit", "jump", "fall", "run", "NoAc", "walk1", "walk2", "walk3", "walk4")
NUM_ACTIVITIES = len(ACTIVITIES)
NOAC = ACTIVITIES.index("NoAc")

# Sensing area in cm; origin at the corner, x along the TX->RX1 axis.
AREA_X = 340.0
AREA_Y = 250.0
AREA_CENTER = (AREA_X / 2.0, AREA_Y / 2.0)
AREA_DIAGONAL = float(np.hypot(AREA_X, AREA_Y))


def activity_id(name: str) -> int:
    try:
        return ACTIVITIES.index(name)
    except ValueError:
        raise DataError(f"unknown activity {name!r}") from None


@dataclass(frozen=True)
class SimoConfig:
    """Radio-side configuration of the simulated SIMO deployment."""

    num_subcarriers: int = 64
    sampling_rate: float = 100.0
    carrier_freq: float = 2.45e9
    num_receivers: int = 2
    antennas_per_receiver: int = 1

    def __post_init__(self):
        for name in ("num_subcarriers", "num_receivers", "antennas_per_receiver"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.sampling_rate <= 0 or self.carrier_freq <= 0:
            raise ConfigError("sampling_rate and carrier_freq must be positive")

    @property
    def wavelength(self) -> float:
        """Carrier wavelength in meters (~0.1223 m at 2.45 GHz)."""
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def num_channels(self) -> int:
        """Total antenna channels M*N."""
        return self.num_receivers * self.antennas_per_receiver


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Annotation:
    """One labeled time segment of a stream.

    `user` is None only for no-activity segments of an empty room.
    `position_track`, when present, holds per-sample (x, y) cm ground truth.
    """

    start: float
    end: float
    activity: int
    user: int | None = None
    position_track: np.ndarray | None = None

    def __post_init__(self):
        if self.end <= self.start:
            raise DataError(f"annotation end {self.end} <= start {self.start}")
        if not 0 <= self.activity < NUM_ACTIVITIES:
            raise DataError(f"activity id {self.activity} outside [0, {NUM_ACTIVITIES})")
        if self.position_track is not None:
            object.__setattr__(self, "position_track",
                               _readonly(np.asarray(self.position_track, dtype=np.float64)))

    @property
    def duration(self) -> float:
        return self.end - self.start

    def contains(self, t: float, closed: bool = False) -> bool:
        if closed:
            return self.start <= t <= self.end
        return self.start <= t < self.end


@dataclass(frozen=True)
class CsiStream:
    """Time-ordered complex channel estimates for one trial.

    samples has shape [count, M, N, S], complex64.
    """

    config: SimoConfig
    samples: np.ndarray
    duration: float
    annotations: tuple[Annotation, ...]
    stream_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "samples",
                           _readonly(np.asarray(self.samples, dtype=np.complex64)))
        object.__setattr__(self, "annotations", tuple(self.annotations))

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]

    def amplitudes(self) -> np.ndarray:
        """|h| as float64, shape [count, M*N, S]."""
        c = self.config
        return np.abs(self.samples).astype(np.float64).reshape(
            self.num_samples, c.num_channels, c.num_subcarriers)


def validate_stream(stream: CsiStream) -> list[str]:
    """Return a list of invariant violations; empty iff the stream is valid."""
    c = stream.config
    out = []
    expected = round(stream.duration * c.sampling_rate)
    if stream.num_samples != expected:
        out.append(f"sample count {stream.num_samples} != round(duration*fs) = {expected}")
    shape = (stream.num_samples, c.num_receivers, c.antennas_per_receiver, c.num_subcarriers)
    if stream.samples.shape != shape:
        out.append(f"sample shape {stream.samples.shape} != {shape}")
    anns = stream.annotations
    if not anns:
        out.append("no annotations")
        return out
    for i, a in enumerate(anns[:-1]):
        if a.end > anns[i + 1].start + 1e-12:
            out.append(f"annotation {i} [{a.start},{a.end}) overlaps next at {anns[i+1].start}")
            break
        if a.end < anns[i + 1].start - 1e-12:
            out.append(f"gap after annotation {i} at {a.end}")
            break
    if abs(anns[0].start) > 1e-12:
        out.append(f"annotations start at {anns[0].start}, expected 0")
    if abs(anns[-1].end - stream.duration) > 1e-12:
        out.append(f"annotations end at {anns[-1].end}, expected duration {stream.duration}")
    for i, a in enumerate(anns):
        if a.position_track is not None:
            n = round((a.end - a.start) * c.sampling_rate)
            if len(a.position_track) != n:
                out.append(f"annotation {i} track length {len(a.position_track)} != {n}")
            else:
                p = a.position_track
                if (p[:, 0].min() < 0 or p[:, 0].max() > AREA_X
                        or p[:, 1].min() < 0 or p[:, 1].max() > AREA_Y):
                    out.append(f"annotation {i} track leaves the sensing area")
    return out


def annotation_at(stream: CsiStream, t: float) -> Annotation:
    """Annotation whose [start, end) contains t; the last segment is closed at duration."""
    if not 0 <= t <= stream.duration:
        raise DataError(f"t={t} outside [0, {stream.duration}]")
    anns = stream.annotations
    for a in anns[:-1]:
        if a.contains(t):
            return a
    last = anns[-1]
    if last.contains(t, closed=True):
        return last
    raise DataError(f"no annotation covers t={t}")  # unreachable for valid streams


@dataclass(frozen=True)
class Frame:
    """One network input window: real amplitude features [T_steps, F] plus labels."""

    data: np.ndarray
    activity_label: int
    user_label: int | None
    coord_label: tuple[float, float]
    source_window: tuple[str, int]

    def __post_init__(self):
        object.__setattr__(self, "data", _readonly(np.asarray(self.data, dtype=np.float64)))


# ---------------------------------------------------------------------------
# CSI stream file format: magic "CSI1", fixed little-endian header, complex64
# samples in (t, m, n, s) order, then a JSON trailer whose byte offset is in
# the header.
# ---------------------------------------------------------------------------

_STREAM_MAGIC = b"CSI1"
_HEADER_FMT = "<4sIdIIddQQ"
_HEADER_SIZE = struct.calcsize(_HEADER_FMT)


def save_stream(stream: CsiStream, path) -> None:
    c = stream.config
    body = np.ascontiguousarray(stream.samples, dtype=np.complex64).tobytes()
    trailer = {
        "stream_id": stream.stream_id,
        "annotations": [
            {
                "start": a.start,
                "end": a.end,
                "activity": ACTIVITIES[a.activity],
                "user": a.user,
                "position_track": None if a.position_track is None
                else np.asarray(a.position_track).tolist(),
            }
            for a in stream.annotations
        ],
    }
    trailer_offset = _HEADER_SIZE + len(body)
    header = struct.pack(
        _HEADER_FMT, _STREAM_MAGIC, c.num_subcarriers, c.sampling_rate,
        c.num_receivers, c.antennas_per_receiver, c.carrier_freq,
        stream.duration, stream.num_samples, trailer_offset)
    with open(path, "wb") as f:
        f.write(header)
        f.write(body)
        f.write(json.dumps(trailer, sort_keys=True, separators=(",", ":")).encode())


def load_stream(path) -> CsiStream:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER_SIZE or raw[:4] != _STREAM_MAGIC:
        raise DataError(f"{path}: not a CSI stream file")
    (_, s, fs, m, n, fc, duration, count, trailer_offset) = struct.unpack(
        _HEADER_FMT, raw[:_HEADER_SIZE])
    config = SimoConfig(num_subcarriers=s, sampling_rate=fs, carrier_freq=fc,
                        num_receivers=m, antennas_per_receiver=n)
    samples = np.frombuffer(raw[_HEADER_SIZE:trailer_offset], dtype=np.complex64)
    samples = samples.reshape(count, m, n, s)
    trailer = json.loads(raw[trailer_offset:].decode())
    anns = tuple(
        Annotation(
            start=a["start"], end=a["end"], activity=activity_id(a["activity"]),
            user=a["user"],
            position_track=None if a["position_track"] is None
            else np.asarray(a["position_track"], dtype=np.float64),
        )
        for a in trailer["annotations"]
    )
    return CsiStream(config=config, samples=samples, duration=duration,
                     annotations=anns, stream_id=trailer.get("stream_id", ""))


# ---------------------------------------------------------------------------
# Dataset manifest: JSON listing stream files, split assignment and seed.
# ---------------------------------------------------------------------------

SPLITS = ("train", "val", "test", "unseen_user")


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    stream_id: str
    user: int
    activity: str
    split: str


def save_manifest(path, entries: list[ManifestEntry], seed: int, extra: dict | None = None) -> None:
    doc = {
        "seed": seed,
        "streams": [
            {"path": e.path, "stream_id": e.stream_id, "user": e.user,
             "activity": e.activity, "split": e.split}
            for e in entries
        ],
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True, indent=1)
        f.write("\n")


def load_manifest(path) -> tuple[list[ManifestEntry], dict]:
    with open(path) as f:
        doc = json.load(f)
    entries = []
    for s in doc["streams"]:
        if s["split"] not in SPLITS:
            raise DataError(f"manifest split {s['split']!r} not in {SPLITS}")
        entries.append(ManifestEntry(path=s["path"], stream_id=s["stream_id"],
                                     user=s["user"], activity=s["activity"],
                                     split=s["split"]))
    return entries, doc
