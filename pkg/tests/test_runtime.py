import numpy as np
import pytest

from emgforce import dsp, features, runtime, synth, training
from emgforce.config import RuntimeConfig


def test_force_map():
    assert not runtime.force_map(np.zeros(5), 10.0).any()
    np.testing.assert_allclose(runtime.force_map([0.5] * 5, 10.0), [5.0] * 5)
    labels = np.array([-0.3, 0.7, 0.0, -1.0, 1.0])
    forces = runtime.force_map(labels, 3.0)
    np.testing.assert_array_equal(np.sign(forces), np.sign(labels))
    with pytest.raises(ValueError):
        runtime.force_map(labels, 0.0)


def test_kinematics_rest_is_fixed_point():
    state = runtime.HandState(k_alpha=1.0)
    nxt = runtime.kinematics_step(state, np.zeros(5), 0.05)
    np.testing.assert_array_equal(nxt.theta, state.theta)
    np.testing.assert_array_equal(nxt.omega, state.omega)


def test_kinematics_two_step_hand_integration():
    # semi-implicit Euler from rest with label 1, k_alpha 1, dt 0.05:
    # step1: w=0.05, th=0.0025; step2: w=0.1, th=0.0075
    state = runtime.HandState(k_alpha=1.0)
    labels = np.array([1.0, 0, 0, 0, 0])
    state = runtime.kinematics_step(state, labels, 0.05)
    state = runtime.kinematics_step(state, labels, 0.05)
    assert state.omega[0] == pytest.approx(0.1)
    assert state.theta[0] == pytest.approx(0.0075)


def test_kinematics_clamp_pins_and_zeroes_velocity():
    state = runtime.HandState(k_alpha=60.0)
    labels = np.ones(5)
    for _ in range(200):
        state = runtime.kinematics_step(state, labels, 0.05)
    np.testing.assert_array_equal(state.theta, np.full(5, 90.0))
    np.testing.assert_array_equal(state.omega, np.zeros(5))
    # and it stays there
    state = runtime.kinematics_step(state, labels, 0.05)
    np.testing.assert_array_equal(state.theta, np.full(5, 90.0))


def test_kinematics_rejects_bad_dt():
    with pytest.raises(ValueError):
        runtime.kinematics_step(runtime.HandState(), np.zeros(5), 0.0)


def offline_ticks(ckpt, samples, cfg=RuntimeConfig()):
    clean = dsp.preprocess_record(samples)
    out = []
    for seg in dsp.window(clean):
        feats = features.feature_matrix(seg.data).reshape(-1)
        labels = np.clip(training.predict(ckpt, feats), -cfg.label_clip, cfg.label_clip)
        out.append((seg.start_index, labels))
    return out


def test_stream_decode_matches_offline_bit_exact(small_subject):
    ckpt = small_subject["ckpts"]["ln"]
    rec = small_subject["records"][4][0]
    expected = offline_ticks(ckpt, rec.samples)
    rng = np.random.default_rng(0)
    decoder = runtime.StreamDecoder(ckpt)
    got = []
    i = 0
    n = rec.samples.shape[1]
    while i < n:
        step = int(rng.integers(1, 130))
        for tick in decoder.push(rec.samples[:, i : i + step]):
            got.append(tick)
        i += step
    assert len(got) == len(expected)
    for tick, (start, labels) in zip(got, expected):
        assert tick.window_start == start
        np.testing.assert_array_equal(tick.labels, labels)


def test_stream_tick_count_and_times(small_subject):
    ckpt = small_subject["ckpts"]["ln"]
    stream = runtime.play_record(np.zeros((12, 1000)))
    ticks = list(runtime.stream_decode(stream, ckpt))
    assert len(ticks) == 17
    assert ticks[0].t == pytest.approx(0.2)
    assert ticks[-1].t == pytest.approx(1.0)
    assert [t.seq for t in ticks] == list(range(17))


def test_zero_stream_decodes_to_zero_labels(small_subject):
    for kind in ("ln", "dd"):
        ckpt = small_subject["ckpts"][kind]
        ticks = list(runtime.stream_decode(runtime.play_record(np.zeros((12, 600))), ckpt))
        for tick in ticks:
            np.testing.assert_allclose(tick.labels, 0.0, atol=1e-12)


def test_full_flexion_stream_reaches_plus_one(small_subject):
    ckpt = small_subject["ckpts"]["ln"]
    act = synth.labels_to_activation(synth.FingerLabels.of([1, 1, 1, 1, 1]))
    rec = synth.generate_signal(act, 3.0, (42, 0, 8, 99), mixing=small_subject["mixing"])
    ticks = list(runtime.stream_decode(runtime.play_record(rec.samples), ckpt))
    labels = np.array([t.labels for t in ticks if t.t > 0.5])
    np.testing.assert_allclose(labels.mean(axis=0), 1.0, atol=0.15)


def test_labels_clamped(small_subject):
    ckpt = small_subject["ckpts"]["ln"]
    # absurdly large input drives the linear model far past the clip range
    rec = 50.0 * small_subject["records"][0][0].samples
    ticks = list(runtime.stream_decode(runtime.play_record(rec), ckpt))
    assert max(np.abs(t.labels).max() for t in ticks) <= 1.5


class OracleDecoder:
    """Pass-through stand-in: 'decodes' the commanded sine perfectly."""

    def __init__(self, freq):
        self.freq = freq
        self.n = 0
        self.faults = 0

    def push(self, chunk):
        self.n += chunk.shape[1]
        if self.n < 200 or (self.n - 200) % 50:
            return []
        t = self.n / 1000.0
        labels = np.full(5, np.sin(2 * np.pi * self.freq * t))
        seq = (self.n - 200) // 50
        return [runtime.DecodeTick(seq=seq, t=t, labels=labels, window_start=self.n - 200)]


def test_sine_session_oracle_passthrough():
    session = runtime.run_sine_session(
        0.2, 20.0, None, finger=3, feedback_gain=0.0, decoder=OracleDecoder(0.2)
    )
    assert session.metrics.rmse == pytest.approx(0.0, abs=1e-12)
    assert session.metrics.r2 == pytest.approx(1.0)


def test_sine_session_degenerate_model(small_subject):
    import copy

    ckpt = copy.deepcopy(small_subject["ckpts"]["ln"])
    for name in ckpt.params:
        ckpt.params[name] = np.zeros_like(ckpt.params[name])
    session = runtime.run_sine_session(0.2, 20.0, ckpt, finger=3, feedback_gain=0.0)
    # decoded stays 0, so the error is the RMS of the target itself
    target_rms = np.sqrt(np.mean(session.target**2))
    assert session.metrics.rmse == pytest.approx(target_rms, rel=1e-12)
    assert session.metrics.rmse == pytest.approx(np.sqrt(0.5), abs=0.02)


def test_sine_session_needs_two_periods(small_subject):
    with pytest.raises(ValueError):
        runtime.run_sine_session(0.1, 10.0, small_subject["ckpts"]["ln"], finger=3)


def test_sine_session_tracks_target(small_subject):
    session = runtime.run_sine_session(
        0.1, 40.0, small_subject["ckpts"]["ln"], finger=3,
        mixing=small_subject["mixing"], seed=7,
    )
    assert session.metrics.rmse <= 0.2
    assert session.metrics.r2 >= 0.85
    assert session.faults == 0


def test_sine_session_fault_burst_aborts(small_subject):
    import copy

    ckpt = copy.deepcopy(small_subject["ckpts"]["ln"])
    ckpt.params["W3"] = np.full_like(ckpt.params["W3"], np.nan)
    with pytest.raises(runtime.SessionAborted):
        runtime.run_sine_session(0.2, 20.0, ckpt, finger=3)


def test_benchmark_decode_reports_latencies(small_subject):
    lat = runtime.benchmark_decode(small_subject["ckpts"]["ln"], duration_s=5.0)
    assert len(lat) == (5000 - 200) // 50 + 1
    assert np.all(lat > 0)
