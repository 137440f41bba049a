"""Synthetic SIMO channel simulator: scene validation, motion scripts,
trial-level invariants and the physics-level Doppler oracle."""

import numpy as np
import pytest

from sensekit.csi import activity_id, validate_stream
from sensekit.errors import ConfigError
from sensekit.simulate import (DEAD_SUBCARRIERS, DEFAULT_TRIAL_PLAN, BodyModel,
                               SceneConfig, generate_dataset, make_users,
                               plan_trials, script_line, script_run,
                               script_static, script_walk, simulate_trial)


class TestBodyModel:
    def test_defaults_valid(self):
        BodyModel(user=0)

    @pytest.mark.parametrize("kwargs", [
        {"base_reflectivity": 0.0}, {"gait_frequency": 0.0},
        {"gait_frequency": 5.5}, {"modulation_depth": 1.0},
    ])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ConfigError):
            BodyModel(user=0, **kwargs)


class TestMakeUsers:
    def test_deterministic(self):
        assert make_users(5, seed=3) == make_users(5, seed=3)
        assert make_users(5, seed=3) != make_users(5, seed=4)

    def test_distinct_parameters(self):
        users = make_users(13, seed=0)
        freqs = [u.gait_frequency for u in users]
        assert len(users) == 13
        assert len(set(freqs)) == 13

    def test_last_user_sits_between_enrolled_ones(self):
        # the reserved unseen body must interpolate the population, not
        # extrapolate past its edge
        users = make_users(13, seed=0)
        seen = sorted(u.gait_frequency for u in users[:-1])
        assert seen[0] < users[-1].gait_frequency < seen[-1]

    def test_rejects_zero_users(self):
        with pytest.raises(ConfigError):
            make_users(0, seed=0)


class TestScripts:
    def test_line_endpoints(self):
        s = script_line("walk1", 2.0, (40.0, 40.0), (140.0, 40.0))
        t = np.array([0.0, 1.0, 2.0])
        np.testing.assert_allclose(s.position(t),
                                   [[40.0, 40.0], [90.0, 40.0], [140.0, 40.0]])
        assert s.moving

    def test_walk_partial_traversal(self):
        s = script_walk(1, 1.0, start_frac=0.5)  # path 1 is 260 cm long
        p = s.position(np.array([0.0, 1.0]))
        assert p[0][0] == pytest.approx(40.0 + 0.5 * 260.0)
        assert p[1][0] - p[0][0] == pytest.approx(100.0)  # default walking speed

    def test_run_covers_full_path(self):
        s = script_run(1, 1.35)
        p = s.position(np.array([0.0, 1.35]))
        np.testing.assert_allclose(p, [[40.0, 40.0], [300.0, 40.0]])

    def test_static_returns_to_anchor_scale(self):
        s = script_static("jump", 1.0, (100.0, 100.0), direction=(1.0, 0.0))
        p = s.position(np.array([0.0, 1.0]))
        # jump ends back at the anchor
        np.testing.assert_allclose(p[0], p[1], atol=1e-9)

    def test_noac_never_moves(self):
        s = script_static("NoAc", 1.0, (100.0, 100.0))
        t = np.linspace(0, 1, 50)
        assert np.ptp(s.position(t), axis=0).max() == 0.0

    def test_speed_guard(self):
        s = script_line("run", 0.01, (40.0, 40.0), (300.0, 40.0))  # 26 000 cm/s
        with pytest.raises(ConfigError):
            s.check_speed(100.0)


class TestSimulateTrial:
    def test_stream_invariants(self):
        scene = SceneConfig(rng_seed=5)
        body = make_users(2, seed=0)[0]
        script = script_static("sit", 1.0, (150.0, 120.0))
        stream = simulate_trial(scene, body, script)
        assert validate_stream(stream) == []
        assert stream.samples.shape == (300, 2, 1, 64)
        acts = [a.activity for a in stream.annotations]
        assert acts == [activity_id("NoAc"), activity_id("sit"), activity_id("NoAc")]

    def test_dead_subcarriers_zeroed(self):
        scene = SceneConfig(rng_seed=5)
        stream = simulate_trial(scene, make_users(2, seed=0)[0],
                                script_static("sit", 1.0, (150.0, 120.0)))
        dead = sorted(DEAD_SUBCARRIERS)
        assert np.abs(stream.samples[:, :, :, dead]).max() == 0.0
        live = [s for s in range(64) if s not in DEAD_SUBCARRIERS]
        assert np.abs(stream.samples[:, :, :, live]).min() > 0.0

    def test_deterministic_given_seed(self):
        scene = SceneConfig(rng_seed=9)
        body = make_users(2, seed=0)[0]
        a = simulate_trial(scene, body, script_static("fall", 1.0, (150.0, 120.0)))
        b = simulate_trial(scene, body, script_static("fall", 1.0, (150.0, 120.0)))
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_empty_room_has_no_user(self):
        scene = SceneConfig(rng_seed=1)
        stream = simulate_trial(scene, None, script_static("NoAc", 1.0, (150.0, 120.0)))
        assert all(a.user is None and a.position_track is None
                   for a in stream.annotations)

    def test_rejects_over_long_trial(self):
        scene = SceneConfig()
        with pytest.raises(ConfigError):
            simulate_trial(scene, None, script_static("NoAc", 59.0, (150.0, 120.0)))

    def test_doppler_beat_frequency(self):
        """A body closing on a co-located TX/RX pair at speed v beats against
        the static direct path at 2 v / lambda (about 16.35 Hz at 1 m/s)."""
        scene = SceneConfig(
            tx_position=(0.0, 125.0),
            rx_positions=((1.0, 125.0), (339.0, 125.0)),
            static_scatterers=(),
            noise_std=0.0,
        )
        body = BodyModel(user=0, gait_amplitude=0.0, modulation_depth=0.0)
        # radial approach along the x axis, 100 cm in 1 s
        script = script_line("run", 1.0, (280.0, 125.0), (180.0, 125.0))
        stream = simulate_trial(scene, body, script, pre_idle=1.0, post_idle=1.0)
        amp = stream.amplitudes()[100:200, 0, 20]  # activity segment, rx1
        spectrum = np.abs(np.fft.rfft(amp - amp.mean()))
        freqs = np.fft.rfftfreq(amp.size, d=1.0 / 100.0)
        expected = 2 * 1.0 / stream.config.wavelength  # 16.35 Hz
        assert freqs[spectrum.argmax()] == pytest.approx(expected, abs=1.0)


class TestSceneConfig:
    def test_rejects_rx_count_mismatch(self):
        with pytest.raises(ConfigError):
            SceneConfig(rx_positions=((0.0, 0.0),))

    def test_rejects_positions_outside_area(self):
        with pytest.raises(ConfigError):
            SceneConfig(tx_position=(-1.0, 0.0))

    def test_rejects_negative_noise(self):
        with pytest.raises(ConfigError):
            SceneConfig(noise_std=-0.1)


class TestPlanAndGenerate:
    def test_plan_reserves_highest_user(self):
        users = make_users(3, seed=0)
        specs = plan_trials(users, DEFAULT_TRIAL_PLAN, seed=0)
        for s in specs:
            if s.user == 2:
                assert s.split == "unseen_user"
            else:
                assert s.split in ("train", "val", "test")

    def test_plan_split_fractions(self):
        users = make_users(3, seed=0)
        specs = [s for s in plan_trials(users, DEFAULT_TRIAL_PLAN, seed=0)
                 if s.user == 0 and s.activity == "sit"]
        counts = {split: sum(s.split == split for s in specs)
                  for split in ("train", "val", "test")}
        assert counts["test"] == round(0.2 * len(specs))
        assert counts["val"] == round(0.1 * len(specs))

    def test_generate_dataset_deterministic(self):
        scene = SceneConfig()
        users = make_users(2, seed=1)
        plan = {"sit": 2, "jump": 1, "fall": 1, "run": 1, "walk": 1}
        s1, e1 = generate_dataset(scene, users, trial_plan=plan, seed=4)
        s2, e2 = generate_dataset(scene, users, trial_plan=plan, seed=4)
        assert e1 == e2
        for a, b in zip(s1, s2):
            np.testing.assert_array_equal(a.samples, b.samples)

    def test_generate_dataset_streams_valid(self):
        scene = SceneConfig()
        users = make_users(2, seed=1)
        plan = {"sit": 1, "jump": 1, "fall": 1, "run": 1, "walk": 1}
        streams, entries = generate_dataset(scene, users, trial_plan=plan, seed=4)
        assert len(streams) == len(entries)
        for stream in streams:
            assert validate_stream(stream) == []
