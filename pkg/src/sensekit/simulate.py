"""Synthetic SIMO OFDM channel simulator.

Produces labeled CsiStreams for configured activities, users and walking
paths using a two-ray-plus-scatterers geometric model with a single moving
point reflector per body. Deterministic given the configured seeds.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .csi import (ACTIVITIES, AREA_X, AREA_Y, SPEED_OF_LIGHT, Annotation,
                  CsiStream, ManifestEntry, SimoConfig, activity_id)
from .errors import ConfigError

# 802.11 OFDM convention; only relative cross-subcarrier structure matters.
SUBCARRIER_SPACING = 312.5e3

# Guard-band / DC null pattern (0-based); amplitudes of these are zeroed.
DEAD_SUBCARRIERS = frozenset({0, 1, 2, 3, 4, 5, 32, 59, 60, 61, 62, 63})

MAX_BODY_SPEED = 1000.0  # cm/s, assumed human-speed bound

# Straight walking paths inside the sensing area, endpoints in cm.
WALK_PATHS = {
    1: ((40.0, 40.0), (300.0, 40.0)),
    2: ((40.0, 125.0), (300.0, 125.0)),
    3: ((40.0, 210.0), (300.0, 210.0)),
    4: ((170.0, 40.0), (170.0, 210.0)),
}

# Activity durations (s) roughly inversely proportional to trial counts so
# the per-class frame yield comes out balanced.
DEFAULT_DURATIONS = {"sit": 1.0, "jump": 1.0, "fall": 1.13, "run": 1.35, "walk": 1.35}
# Trial counts per person keep the 5:5:4:3:3 ratio of a realistic collection
# session; synthetic trials are cheap, so the default is three sessions' worth
# to cover the random positions and headings well enough to generalize.
DEFAULT_TRIAL_PLAN = {"sit": 40, "jump": 40, "fall": 32, "run": 24, "walk": 24}
SESSION_TRIAL_PLAN = {"sit": 10, "jump": 10, "fall": 8, "run": 6, "walk": 6}

WALK_SPEED = 100.0  # cm/s

_AMP_REF = 100.0       # cm, reference distance for path gains
_SCATTER_GAIN = _AMP_REF ** 2


@dataclass(frozen=True)
class SceneConfig:
    """Geometry and noise of one deployment: TX on one side, RX1 opposite,
    RX2 on the perpendicular."""

    tx_position: tuple[float, float] = (0.0, 125.0)
    rx_positions: tuple[tuple[float, float], ...] = ((340.0, 125.0), (170.0, 0.0))
    static_scatterers: tuple[tuple[tuple[float, float], float], ...] = (
        ((20.0, 20.0), 0.30),
        ((320.0, 230.0), 0.25),
    )
    noise_std: float = 0.02
    rng_seed: int = 0
    radio: SimoConfig = field(default_factory=SimoConfig)

    def __post_init__(self):
        if len(self.rx_positions) != self.radio.num_receivers:
            raise ConfigError(
                f"{len(self.rx_positions)} rx positions for M={self.radio.num_receivers}")
        for p in (self.tx_position, *self.rx_positions):
            if not (0 <= p[0] <= AREA_X and 0 <= p[1] <= AREA_Y):
                raise ConfigError(f"position {p} outside sensing area")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")


@dataclass(frozen=True)
class BodyModel:
    """Per-user micro-motion signature standing in for a human participant."""

    user: int
    base_reflectivity: float = 1.0
    gait_frequency: float = 1.2   # Hz
    gait_amplitude: float = 4.0   # cm
    height_factor: float = 1.0
    harmonic_ratio: float = 0.3   # 2nd-harmonic share of the gait sway
    modulation_depth: float = 0.2  # reflectivity wobble over the gait cycle

    def __post_init__(self):
        if self.base_reflectivity <= 0:
            raise ConfigError("base_reflectivity must be > 0")
        if not 0 < self.gait_frequency <= 5.0:
            raise ConfigError("gait_frequency must be in (0, 5] Hz")
        if not 0 <= self.modulation_depth < 1:
            raise ConfigError("modulation_depth must be in [0, 1)")


def make_users(num_users: int, seed: int) -> list[BodyModel]:
    """Population of distinct bodies; parameters spread plus seeded jitter.

    The highest user id (the one reserved as unseen by plan_trials) is placed
    in the middle of the parameter grid gap rather than at its edge, so an
    unseen body is genuinely between the enrolled ones instead of an
    extrapolation of the last.
    """
    if num_users < 1:
        raise ConfigError("need at least one user")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x0B0D]))
    users = []
    n_grid = max(1, num_users - 1)
    for u in range(num_users):
        if u == num_users - 1 and num_users > 2:
            frac = ((n_grid - 1) // 2 + 0.5) / n_grid
        else:
            frac = u / n_grid
        users.append(BodyModel(
            user=u,
            base_reflectivity=float(0.8 + 0.6 * frac + 0.02 * rng.standard_normal()),
            gait_frequency=float(0.6 + 2.0 * frac + 0.03 * rng.standard_normal()),
            gait_amplitude=float(2.0 + 4.0 * frac + 0.1 * rng.standard_normal()),
            height_factor=float(0.8 + 0.5 * frac + 0.01 * rng.standard_normal()),
            harmonic_ratio=float(np.clip(0.1 + 0.6 * frac + 0.02 * rng.standard_normal(),
                                         0.0, 1.0)),
            modulation_depth=float(np.clip(0.1 + 0.5 * frac + 0.02 * rng.standard_normal(),
                                           0.0, 0.95)),
        ))
    return users


@dataclass(frozen=True)
class MotionScript:
    """Parametric body motion for one activity: position p(t) in cm plus a
    reflectivity envelope (downward ramps for sit/fall, a bump for jump)."""

    activity: int
    duration: float
    position: Callable[[np.ndarray], np.ndarray]   # t [n] -> [n, 2] cm
    envelope: Callable[[np.ndarray], np.ndarray]   # t [n] -> [n] scale
    moving: bool = False

    def check_speed(self, fs: float) -> None:
        n = max(4, round(self.duration * fs))
        t = np.linspace(0.0, self.duration, n)
        p = self.position(t)
        v = np.hypot(*np.gradient(p, t, axis=0).T)
        if v.max() > MAX_BODY_SPEED:
            raise ConfigError(
                f"script speed {v.max():.1f} cm/s exceeds the {MAX_BODY_SPEED:.0f} cm/s bound")


def _const(value):
    def f(t):
        return np.full(len(t), value, dtype=np.float64)
    return f


def _fixed(pos):
    def f(t):
        return np.tile(np.asarray(pos, dtype=np.float64), (len(t), 1))
    return f


def _ramp(duration, frac, depth):
    """Smooth ramp from 1 down to 1 - depth over the first `frac` of the script."""
    def f(t):
        u = np.clip(t / (duration * frac), 0.0, 1.0)
        return 1.0 - depth * (3 * u ** 2 - 2 * u ** 3)
    return f


def _static_offset(activity: str, t: np.ndarray, duration: float) -> np.ndarray:
    """Scalar displacement (cm) along the script direction; each activity's
    profile fills the whole duration so any window catches its signature.

    sit: slow steady slump; fall: fast drop plus a damped settling bounce;
    jump: smooth up-down bump; NoAc: none.
    """
    u = np.clip(t / duration, 0.0, 1.0)
    if activity == "sit":
        return 30.0 * (3 * u ** 2 - 2 * u ** 3)
    if activity == "fall":
        v = np.clip(u / 0.3, 0.0, 1.0)
        drop = 60.0 * (3 * v ** 2 - 2 * v ** 3)
        bounce = 12.0 * np.exp(-1.5 * u) * np.sin(2 * np.pi * 4.5 * t)
        return drop + bounce
    if activity == "jump":
        return 18.0 * np.sin(2 * np.pi * u) ** 2
    return np.zeros_like(u)


def script_static(activity: str, duration: float, position,
                  direction=(0.7071, 0.7071)) -> MotionScript:
    """sit / fall / jump / NoAc around a fixed position.

    The body's effective scattering point shifts along `direction` with an
    activity-specific motion profile; even a few cm of displacement sweeps
    amplitude fringes, which is what makes the classes separable.
    """
    aid = activity_id(activity)
    p0 = np.asarray(position, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.hypot(*d)

    def position_fn(t, p0=p0, d=d, activity=activity, dur=duration):
        return p0 + _static_offset(activity, t, dur)[:, None] * d

    if activity == "sit":
        env = _ramp(duration, 0.8, 0.55)
    elif activity == "fall":
        env = _ramp(duration, 0.35, 0.75)
    elif activity == "jump":
        def env(t, d_=duration):
            return 1.0 + 0.6 * np.sin(np.pi * np.clip(t / d_, 0.0, 1.0))
    else:
        env = _const(1.0)
    return MotionScript(activity=aid, duration=duration,
                        position=position_fn, envelope=env)


def script_line(activity: str, duration: float, start, end) -> MotionScript:
    """Constant-velocity traversal from start to end (walk / run)."""
    a = np.asarray(start, dtype=np.float64)
    b = np.asarray(end, dtype=np.float64)

    def position(t, a=a, b=b, d=duration):
        u = np.clip(t / d, 0.0, 1.0)[:, None]
        return a + u * (b - a)

    return MotionScript(activity=activity_id(activity), duration=duration,
                        position=position, envelope=_const(1.0), moving=True)


def script_walk(path: int, duration: float, start_frac: float = 0.0,
                speed: float = WALK_SPEED, activity: str | None = None) -> MotionScript:
    """Partial traversal of one of the marked paths at the given speed."""
    a, b = (np.asarray(p, dtype=np.float64) for p in WALK_PATHS[path])
    length = float(np.hypot(*(b - a)))
    span = min(1.0, speed * duration / length)
    start_frac = min(start_frac, 1.0 - span)
    p0 = a + start_frac * (b - a)
    p1 = a + (start_frac + span) * (b - a)
    return script_line(activity or f"walk{path}", duration, p0, p1)


def script_run(path: int, duration: float) -> MotionScript:
    """Full traversal of a path within `duration` (walk at higher speed)."""
    a, b = (np.asarray(p, dtype=np.float64) for p in WALK_PATHS[path])
    length = float(np.hypot(*(b - a)))
    return script_walk(path, duration, 0.0, speed=length / duration, activity="run")


def _distances(points: np.ndarray, ref: np.ndarray) -> np.ndarray:
    return np.hypot(points[..., 0] - ref[0], points[..., 1] - ref[1])


def _antenna_positions(scene: SceneConfig) -> np.ndarray:
    """[M*N, 2] antenna positions; extra antennas offset by half a wavelength."""
    lam_cm = scene.radio.wavelength * 100.0
    out = []
    for rx in scene.rx_positions:
        for n in range(scene.radio.antennas_per_receiver):
            out.append((rx[0], rx[1] + n * lam_cm / 2.0))
    return np.asarray(out, dtype=np.float64)


def _path_term(f_sub: np.ndarray, dist_cm: np.ndarray, amp) -> np.ndarray:
    """amp * exp(-j 2 pi f tau) for every (time/channel) x subcarrier."""
    tau = dist_cm[..., None] / 100.0 / SPEED_OF_LIGHT
    return np.asarray(amp)[..., None] * np.exp(-2j * np.pi * f_sub * tau)


def simulate_trial(scene: SceneConfig, body: BodyModel | None, script: MotionScript,
                   pre_idle: float = 1.0, post_idle: float = 1.0) -> CsiStream:
    """One trial: idle, activity, idle. Returns a fully annotated CsiStream."""
    radio = scene.radio
    fs = radio.sampling_rate
    total = pre_idle + script.duration + post_idle
    if total > 60.0:
        raise ConfigError(f"trial duration {total:.1f} s exceeds 60 s")
    script.check_speed(fs)

    n_pre = round(pre_idle * fs)
    n_mid = round(script.duration * fs)
    n_total = round(total * fs)
    n_post = n_total - n_pre - n_mid
    duration = n_total / fs
    t = np.arange(n_total) / fs

    s_idx = np.arange(radio.num_subcarriers)
    f_sub = radio.carrier_freq + (s_idx - radio.num_subcarriers / 2) * SUBCARRIER_SPACING
    tx = np.asarray(scene.tx_position, dtype=np.float64)
    ants = _antenna_positions(scene)  # [C, 2]
    n_ch = len(ants)

    # Static part: direct path + fixed scatterers, identical at every t.
    h_static = np.zeros((n_ch, radio.num_subcarriers), dtype=np.complex128)
    d_direct = _distances(ants, tx)
    h_static += _path_term(f_sub, d_direct, _AMP_REF / d_direct)
    for (pos, refl) in scene.static_scatterers:
        pos = np.asarray(pos, dtype=np.float64)
        d1 = float(np.hypot(*(pos - tx)))
        d2 = _distances(ants, pos)
        h_static += _path_term(f_sub, d1 + d2, refl * _SCATTER_GAIN / (d1 * d2))

    h = np.broadcast_to(h_static, (n_total, n_ch, radio.num_subcarriers)).copy()

    track = None
    if body is not None:
        # Script position, extended constantly into the idle segments.
        t_mid = np.clip(t - pre_idle, 0.0, script.duration)
        p = script.position(t_mid)
        env = script.envelope(t_mid)

        # Gait micro-motion: lateral wobble while moving, small sway otherwise,
        # nearly still during idle. This is the learnable identity signature.
        phase = 2 * np.pi * body.gait_frequency * t
        gait_wave = np.sin(phase) + body.harmonic_ratio * np.sin(2 * phase)
        if script.moving:
            d = np.gradient(p, axis=0)
            norm = np.hypot(d[:, 0], d[:, 1])
            norm[norm == 0] = 1.0
            lateral = np.stack([-d[:, 1] / norm, d[:, 0] / norm], axis=1)
        else:
            lateral = np.tile([np.sqrt(0.5), np.sqrt(0.5)], (n_total, 1))
        sway_scale = np.full(n_total, 0.25)
        sway_scale[n_pre:n_pre + n_mid] = 0.6
        p = p + (body.gait_amplitude * sway_scale * gait_wave)[:, None] * lateral
        p[:, 0] = np.clip(p[:, 0], 0.0, AREA_X)
        p[:, 1] = np.clip(p[:, 1], 0.0, AREA_Y)
        track = p

        refl = (body.base_reflectivity * body.height_factor * env
                * (1.0 + body.modulation_depth * np.sin(phase + 0.7)))
        d1 = _distances(p, tx)                                  # [n]
        d2 = np.hypot(p[:, None, 0] - ants[None, :, 0],         # [n, C]
                      p[:, None, 1] - ants[None, :, 1])
        amp = refl[:, None] * _SCATTER_GAIN / (d1[:, None] * d2)
        h += _path_term(f_sub, d1[:, None] + d2, amp)

    if scene.noise_std > 0:
        rng = np.random.default_rng(scene.rng_seed)
        noise = rng.normal(0.0, scene.noise_std, size=(n_total, n_ch, radio.num_subcarriers, 2))
        h += noise[..., 0] + 1j * noise[..., 1]

    dead = sorted(d for d in DEAD_SUBCARRIERS if d < radio.num_subcarriers)
    h[:, :, dead] = 0.0

    user = None if body is None else body.user
    bounds = [(0, n_pre, activity_id("NoAc")),
              (n_pre, n_pre + n_mid, script.activity),
              (n_pre + n_mid, n_total, activity_id("NoAc"))]
    annotations = []
    for (i0, i1, aid) in bounds:
        if i1 <= i0:
            continue
        annotations.append(Annotation(
            start=i0 / fs, end=i1 / fs, activity=aid, user=user,
            position_track=None if track is None else track[i0:i1]))

    samples = h.reshape(n_total, radio.num_receivers, radio.antennas_per_receiver,
                        radio.num_subcarriers).astype(np.complex64)
    return CsiStream(config=radio, samples=samples, duration=duration,
                     annotations=tuple(annotations))


# ---------------------------------------------------------------------------
# Dataset generation
# ---------------------------------------------------------------------------

_STATIC_BOX = (70.0, 270.0, 70.0, 180.0)  # x0, x1, y0, y1 for static positions


@dataclass(frozen=True)
class _TrialSpec:
    user: int
    activity: str
    trial: int
    stream_id: str
    split: str
    seed: np.random.SeedSequence


def _displacement_direction(scene: SceneConfig, pos: np.ndarray,
                            rng: np.random.Generator) -> np.ndarray:
    """Direction along which body displacement changes the TX-body-RX path
    sums the most (the gradient of the summed path lengths), jittered a
    little for diversity.

    A uniformly random direction occasionally lands tangential to every
    constant-path ellipse, making sit/fall/jump displacements sweep no
    amplitude fringes at all and collapse onto NoAc.
    """
    grad = np.zeros(2)
    u_tx = pos - np.asarray(scene.tx_position)
    u_tx /= np.hypot(*u_tx)
    for rx in scene.rx_positions:
        u_rx = pos - np.asarray(rx)
        grad += u_tx + u_rx / np.hypot(*u_rx)
    theta = np.arctan2(grad[1], grad[0]) + rng.uniform(-0.45, 0.45)
    return np.array([np.cos(theta), np.sin(theta)])


def _make_script(scene: SceneConfig, activity: str, duration: float,
                 rng: np.random.Generator, trial: int) -> MotionScript:
    if activity in ("sit", "jump", "fall", "NoAc"):
        x0, x1, y0, y1 = _STATIC_BOX
        pos = np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])
        return script_static(activity, duration, pos,
                             direction=_displacement_direction(scene, pos, rng))
    if activity == "run":
        return script_run(1 + trial % len(WALK_PATHS), duration)
    if activity.startswith("walk"):
        path = int(activity[4:])
        a, b = (np.asarray(p) for p in WALK_PATHS[path])
        span = min(1.0, WALK_SPEED * duration / float(np.hypot(*(b - a))))
        start_frac = rng.uniform(0.0, 1.0 - span) if span < 1.0 else 0.0
        return script_walk(path, duration, start_frac)
    raise ConfigError(f"no script for activity {activity!r}")


def _assign_splits(n_trials: int, rng: np.random.Generator) -> list[str]:
    n_test = max(1, round(0.2 * n_trials))
    n_val = max(1, round(0.1 * n_trials))
    order = rng.permutation(n_trials)
    splits = ["train"] * n_trials
    for i in order[:n_test]:
        splits[i] = "test"
    for i in order[n_test:n_test + n_val]:
        splits[i] = "val"
    return splits


def plan_trials(users: list[BodyModel], trial_plan: dict[str, int], seed: int,
                ) -> list[_TrialSpec]:
    if len(users) < 2:
        raise ConfigError("need >= 2 users (one is reserved as unseen)")
    for act, n in trial_plan.items():
        if n < 1:
            raise ConfigError(f"trial count for {act} must be >= 1")
    per_user = []
    for act in ("sit", "jump", "fall", "run"):
        per_user += [(act, i) for i in range(trial_plan[act])]
    for path in sorted(WALK_PATHS):
        per_user += [(f"walk{path}", i) for i in range(trial_plan["walk"])]

    ss = np.random.SeedSequence([seed, 0x51])
    split_rng = np.random.default_rng(ss.spawn(1)[0])
    unseen = max(u.user for u in users)

    specs = []
    for user in sorted(u.user for u in users):
        by_activity: dict[str, list[int]] = {}
        for act, i in per_user:
            by_activity.setdefault(act, []).append(i)
        for act, idxs in by_activity.items():
            splits = _assign_splits(len(idxs), split_rng)
            for i in idxs:
                split = "unseen_user" if user == unseen else splits[i]
                specs.append(_TrialSpec(
                    user=user, activity=act, trial=i,
                    stream_id=f"u{user:02d}_{act}_t{i:02d}", split=split,
                    seed=np.random.SeedSequence([seed, user, activity_id(act), i])))
    return specs


def _simulate_spec(scene: SceneConfig, users_by_id: dict[int, BodyModel],
                   durations: dict[str, float], spec: _TrialSpec) -> CsiStream:
    trial_rng = np.random.default_rng(spec.seed.spawn(1)[0])
    noise_seed = int(spec.seed.generate_state(1)[0])
    base = spec.activity[:-1] if spec.activity.startswith("walk") else spec.activity
    script = _make_script(scene, spec.activity, durations[base], trial_rng,
                          spec.trial)
    pre = 0.9 + trial_rng.uniform(0.0, 0.2)
    post = 0.9 + trial_rng.uniform(0.0, 0.2)
    stream = simulate_trial(replace(scene, rng_seed=noise_seed),
                            users_by_id[spec.user], script, pre, post)
    return replace(stream, stream_id=spec.stream_id)


def generate_dataset(scene: SceneConfig, users: list[BodyModel],
                     trial_plan: dict[str, int] | None = None, seed: int = 0,
                     durations: dict[str, float] | None = None,
                     ) -> tuple[list[CsiStream], list[ManifestEntry]]:
    """Simulate the full trial plan for every user.

    Deterministic given the seed; one user (the highest id) is reserved
    entirely for the unseen-user split. Trials may be simulated in parallel
    (SENSEKIT_THREADS caps workers); output order never depends on schedule.
    """
    trial_plan = dict(DEFAULT_TRIAL_PLAN, **(trial_plan or {}))
    durations = dict(DEFAULT_DURATIONS, **(durations or {}))
    specs = plan_trials(users, trial_plan, seed)
    users_by_id = {u.user: u for u in users}

    workers = int(os.environ.get("SENSEKIT_THREADS", "1") or "1")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            streams = list(pool.map(
                lambda sp: _simulate_spec(scene, users_by_id, durations, sp), specs))
    else:
        streams = [_simulate_spec(scene, users_by_id, durations, sp) for sp in specs]

    entries = [ManifestEntry(path=f"{sp.stream_id}.csi", stream_id=sp.stream_id,
                             user=sp.user, activity=sp.activity, split=sp.split)
               for sp in specs]
    return streams, entries
