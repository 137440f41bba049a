"""Sparsity reduction, Butterworth filtering, framing, balancing and the
frame-dataset container."""

import numpy as np
import pytest
from scipy import signal

from sensekit.csi import (ACTIVITIES, AREA_CENTER, Annotation, CsiStream,
                          SimoConfig, activity_id)
from sensekit.errors import ConfigError, DataError
from sensekit.preprocess import (FrameDataset, PreprocessConfig, balance_classes,
                                 butterworth_lowpass, butterworth_sos,
                                 detect_dead_subcarriers,
                                 detect_dead_subcarriers_pooled, make_frames,
                                 preprocess_splits, sparsity_reduce,
                                 stream_to_frames)
from sensekit.simulate import (DEAD_SUBCARRIERS, SceneConfig, generate_dataset,
                               make_users)


def make_stream(count=300, dead=DEAD_SUBCARRIERS, seed=0):
    cfg = SimoConfig()
    rng = np.random.default_rng(seed)
    samples = (1.0 + 0.1 * rng.standard_normal((count, 2, 1, 64))
               + 0.1j * rng.standard_normal((count, 2, 1, 64)))
    samples[:, :, :, sorted(dead)] = 0.0
    duration = count / cfg.sampling_rate
    anns = (Annotation(0.0, duration, activity_id("sit"), user=0),)
    return CsiStream(config=cfg, samples=samples.astype(np.complex64),
                     duration=duration, annotations=anns, stream_id=f"s{seed}")


class TestPreprocessConfig:
    def test_cutoff_clamped_to_passband(self):
        cfg = PreprocessConfig()
        assert cfg.effective_cutoff(100.0) == 45.0
        assert cfg.effective_cutoff(1000.0) == 200.0

    def test_window_samples(self):
        assert PreprocessConfig().window_samples(100.0) == 80

    def test_rejects_fractional_window(self):
        with pytest.raises(ConfigError):
            PreprocessConfig().window_samples(101.0)

    @pytest.mark.parametrize("kwargs", [
        {"filter_order": 0}, {"cutoff": 0.0}, {"hop": 0},
    ])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ConfigError):
            PreprocessConfig(**kwargs)


class TestDeadSubcarriers:
    def test_detects_nulled_set(self):
        assert detect_dead_subcarriers(make_stream()) == DEAD_SUBCARRIERS

    def test_pooled_matches_single(self):
        streams = [make_stream(seed=i) for i in range(3)]
        assert detect_dead_subcarriers_pooled(streams) == DEAD_SUBCARRIERS

    def test_all_dead_is_degenerate(self):
        stream = make_stream(dead=set(range(64)))
        with pytest.raises(DataError):
            detect_dead_subcarriers(stream)

    def test_pooled_requires_streams(self):
        with pytest.raises(DataError):
            detect_dead_subcarriers_pooled([])


class TestSparsityReduce:
    def test_keeps_52_subcarriers_in_order(self):
        stream = make_stream()
        out = sparsity_reduce(stream, DEAD_SUBCARRIERS)
        assert out.shape == (300, 2, 52)
        assert (out > 0).all()
        keep = [i for i in range(64) if i not in DEAD_SUBCARRIERS]
        np.testing.assert_allclose(out, stream.amplitudes()[:, :, keep])

    def test_rejects_out_of_range_dead_set(self):
        with pytest.raises(ConfigError):
            sparsity_reduce(make_stream(), {64})


class TestButterworth:
    FS = 100.0
    CUTOFF = 20.0
    ORDER = 10

    def test_discrete_magnitude_matches_prewarped_prototype(self):
        """Bilinear design evaluated at digital frequencies equals the analog
        |H| = 1/sqrt(1 + (w/wc)^(2n)) at the prewarped frequencies."""
        sos = butterworth_sos(self.FS, self.CUTOFF, self.ORDER)
        freqs = np.linspace(0.5, 0.8 * self.FS / 2, 60)
        _, h = signal.sosfreqz(sos, worN=2 * np.pi * freqs / self.FS)
        warped = np.tan(np.pi * freqs / self.FS)
        warped_c = np.tan(np.pi * self.CUTOFF / self.FS)
        expected = 1.0 / np.sqrt(1.0 + (warped / warped_c) ** (2 * self.ORDER))
        np.testing.assert_allclose(np.abs(h), expected, atol=1e-3)

    def test_dc_gain_unity(self):
        sos = butterworth_sos(self.FS, self.CUTOFF, self.ORDER)
        _, h = signal.sosfreqz(sos, worN=[0.0])
        assert abs(abs(h[0]) - 1.0) < 1e-9
        x = np.ones(500)
        y = butterworth_lowpass(x, self.FS, self.CUTOFF, self.ORDER)
        np.testing.assert_allclose(y, 1.0, atol=1e-9)

    def test_linearity(self):
        rng = np.random.default_rng(1)
        x, y = rng.standard_normal((2, 400))
        a, b = 2.5, -0.7
        lhs = butterworth_lowpass(a * x + b * y, self.FS, self.CUTOFF, self.ORDER)
        rhs = (a * butterworth_lowpass(x, self.FS, self.CUTOFF, self.ORDER)
               + b * butterworth_lowpass(y, self.FS, self.CUTOFF, self.ORDER))
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    def test_attenuates_stopband_tone(self):
        t = np.arange(1000) / self.FS
        tone = np.sin(2 * np.pi * 40.0 * t)
        out = butterworth_lowpass(tone, self.FS, self.CUTOFF, self.ORDER)
        assert np.abs(out[100:-100]).max() < 1e-4

    def test_output_length_preserved(self):
        x = np.zeros((250, 3))
        assert butterworth_lowpass(x, self.FS, self.CUTOFF, self.ORDER).shape == x.shape

    def test_rejects_cutoff_at_nyquist(self):
        with pytest.raises(ConfigError):
            butterworth_sos(100.0, 50.0, 4)


class TestMakeFrames:
    def test_shapes_and_hop(self):
        tensor = np.zeros((300, 2, 52))
        anns = (Annotation(0.0, 3.0, activity_id("sit"), user=2),)
        frames = make_frames(tensor, anns, 100.0, window=80, hop=80, stream_id="s")
        assert len(frames) == 3  # starts 0, 80, 160; 240 would overrun
        for i, f in enumerate(frames):
            assert f.data.shape == (80, 104)
            assert f.activity_label == activity_id("sit")
            assert f.user_label == 2
            assert f.source_window == ("s", i * 80)

    def test_straddling_windows_discarded(self):
        tensor = np.zeros((300, 2, 52))
        anns = (Annotation(0.0, 1.0, activity_id("NoAc"), user=0),
                Annotation(1.0, 2.0, activity_id("fall"), user=0),
                Annotation(2.0, 3.0, activity_id("NoAc"), user=0))
        frames = make_frames(tensor, anns, 100.0, window=80, hop=10)
        for f in frames:
            start = f.source_window[1] / 100.0
            ann = anns[1] if f.activity_label == activity_id("fall") else None
            if ann is not None:
                # at most 20% of the window may lie outside its annotation
                overlap = min(ann.end, start + 0.8) - max(ann.start, start)
                assert 0.8 - overlap <= 0.8 * 0.2 + 1e-12

    def test_coord_label_from_track(self):
        tensor = np.zeros((100, 2, 52))
        track = np.stack([np.linspace(0, 99, 100), np.full(100, 50.0)], axis=1)
        anns = (Annotation(0.0, 1.0, activity_id("walk1"), user=0,
                           position_track=track),)
        frames = make_frames(tensor, anns, 100.0, window=80, hop=80)
        assert frames[0].coord_label == pytest.approx((39.5, 50.0))

    def test_coord_fallback_is_area_center(self):
        tensor = np.zeros((100, 2, 52))
        anns = (Annotation(0.0, 1.0, activity_id("NoAc")),)
        frames = make_frames(tensor, anns, 100.0, window=80, hop=80)
        assert frames[0].coord_label == AREA_CENTER


def _dummy_frames(counts: dict[str, int]):
    from sensekit.csi import Frame
    frames = []
    for name, n in counts.items():
        k = activity_id(name)
        for i in range(n):
            frames.append(Frame(data=np.zeros((4, 6)), activity_label=k,
                                user_label=0, coord_label=(0.0, 0.0),
                                source_window=(name, i)))
    return frames


class TestBalanceClasses:
    FULL = {a: 40 for a in ACTIVITIES}

    def test_default_plan_trims_noac(self):
        counts = dict(self.FULL, NoAc=200)
        out = balance_classes(_dummy_frames(counts), seed=0)
        got = {a: sum(f.activity_label == activity_id(a) for f in out)
               for a in ACTIVITIES}
        assert got["NoAc"] == 40
        assert all(got[a] == 40 for a in ACTIVITIES)

    def test_explicit_plan_caps(self):
        out = balance_classes(_dummy_frames(self.FULL), plan={"sit": 10}, seed=0)
        got = sum(f.activity_label == activity_id("sit") for f in out)
        assert got == 10

    def test_never_fabricates(self):
        counts = dict(self.FULL, sit=3)
        out = balance_classes(_dummy_frames(counts), plan={"sit": 100}, seed=0)
        assert sum(f.activity_label == activity_id("sit") for f in out) == 3

    def test_missing_class_raises(self):
        counts = dict(self.FULL)
        counts.pop("fall")
        with pytest.raises(DataError):
            balance_classes(_dummy_frames(counts))

    def test_deterministic_and_order_preserving(self):
        frames = _dummy_frames(dict(self.FULL, NoAc=200))
        a = balance_classes(frames, seed=5)
        b = balance_classes(frames, seed=5)
        assert [f.source_window for f in a] == [f.source_window for f in b]
        pos = {id(f): i for i, f in enumerate(frames)}
        kept = [pos[id(f)] for f in a]
        assert kept == sorted(kept)


class TestFrameDataset:
    def test_roundtrip(self, tmp_path):
        frames = _dummy_frames({a: 3 for a in ACTIVITIES})
        ds = FrameDataset.from_frames(frames, dead_subcarriers=DEAD_SUBCARRIERS)
        mean, std = ds.compute_stats()
        ds.standardize(mean, std)
        path = tmp_path / "x.frames"
        ds.save(path)
        loaded = FrameDataset.load(path)
        np.testing.assert_allclose(loaded.data, ds.data, atol=1e-6)
        np.testing.assert_array_equal(loaded.activity, ds.activity)
        np.testing.assert_array_equal(loaded.user, ds.user)
        assert loaded.stream_ids == ds.stream_ids
        assert loaded.dead_subcarriers == sorted(DEAD_SUBCARRIERS)
        np.testing.assert_allclose(loaded.norm_mean, mean)

    def test_double_standardize_rejected(self):
        ds = FrameDataset.from_frames(_dummy_frames({a: 1 for a in ACTIVITIES}))
        mean, std = ds.compute_stats()
        ds.standardize(mean, std)
        with pytest.raises(DataError):
            ds.standardize(mean, std)

    def test_rejects_non_dataset_file(self, tmp_path):
        path = tmp_path / "bad.frames"
        path.write_bytes(b"garbage here")
        with pytest.raises(DataError):
            FrameDataset.load(path)


@pytest.fixture(scope="module")
def tiny_splits():
    scene = SceneConfig()
    users = make_users(3, seed=2)
    plan = {"sit": 4, "jump": 4, "fall": 4, "run": 4, "walk": 4}
    streams, entries = generate_dataset(scene, users, trial_plan=plan, seed=2)
    by_split = {}
    for s, e in zip(streams, entries):
        by_split.setdefault(e.split, []).append(s)
    return by_split


class TestPipeline:
    def test_stream_to_frames_contract(self, tiny_splits):
        cfg = PreprocessConfig(hop=10)
        frames = stream_to_frames(tiny_splits["train"][0], DEAD_SUBCARRIERS, cfg)
        assert frames and all(f.data.shape == (80, 104) for f in frames)
        assert all((f.data >= 0).all() for f in frames)

    def test_preprocess_splits_shares_train_stats(self, tiny_splits):
        cfg = PreprocessConfig(hop=10)
        out = preprocess_splits(tiny_splits, cfg, seed=2)
        assert set(out) == set(tiny_splits)
        for ds in out.values():
            np.testing.assert_array_equal(ds.norm_mean, out["train"].norm_mean)
            assert ds.dead_subcarriers == sorted(DEAD_SUBCARRIERS)
        # train data is standardized: global stats near (0, 1)
        assert abs(out["train"].data.mean()) < 1e-9
        assert abs(out["train"].data.std() - 1.0) < 0.1

    def test_requires_train_split(self, tiny_splits):
        cfg = PreprocessConfig(hop=10)
        with pytest.raises(DataError):
            preprocess_splits({"test": tiny_splits["test"]}, cfg)
