"""
Test the per-channel quality metrics and the wavelet denoiser.
"""
import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import math
import pytest
import tempfile
import numpy as np

import metric_utils
import sensor_utils
import synth_utils
from errors import ConfigError, ParameterError, SingularityError


def _channel(states, key=("1", "0")):
    return sensor_utils.ChannelSeries(
        sensor_id=key[0], load_pct=key[1],
        per_state_samples={code: np.asarray(values, dtype=float) for code, values in states.items()},
    )


def _joined(channels):
    n = len(channels[0].samples(1))
    dataset = sensor_utils.SignalDataset(channels=tuple(channels), states=sensor_utils.make_states([1, 2]),
                                         samples_per_state=n)
    costs = [sensor_utils.CostProfile(c.sensor_id, c.load_pct, 10.0, 10.0, 10.0, 10.0, 10.0) for c in channels]
    return sensor_utils.join(dataset, costs)


# ---- monotonicity ----

def test_monotonicity_extremes():
    assert metric_utils.monotonicity(_channel({1: [1, 2, 3, 4], 2: [9, 8, 7, 6]})) == 1.0
    assert metric_utils.monotonicity(_channel({1: [5, 5, 5], 2: [0, 0, 0]})) == 0.0


def test_monotonicity_matches_sign_counting():
    """Brute-force count of rising and falling steps."""
    rng = np.random.default_rng(3)
    for _ in range(20):
        a, b = rng.normal(size=40), rng.normal(size=40)
        expected = []
        for x in (a, b):
            up = sum(1 for i in range(1, len(x)) if x[i] > x[i - 1])
            down = sum(1 for i in range(1, len(x)) if x[i] < x[i - 1])
            expected.append(abs(up - down) / (len(x) - 1))
        value = metric_utils.monotonicity(_channel({1: a, 2: b}))
        assert value == pytest.approx(sum(expected) / 2)
        assert 0.0 <= value <= 1.0


# ---- denoiser and robustness ----

def test_default_denoise_levels():
    cfg = metric_utils.DenoiseConfig()
    assert cfg.resolve_levels(500) == 4
    assert cfg.resolve_levels(8) == 3
    assert cfg.resolve_levels(2) == 1


def test_denoise_levels_too_deep():
    with pytest.raises(ConfigError):
        metric_utils.DenoiseConfig(levels=5).resolve_levels(16)


def test_smooth_keeps_constant_signal():
    smoothed = metric_utils.smooth(np.full(64, 3.5))
    np.testing.assert_allclose(smoothed, 3.5, atol=1e-12)


def test_smooth_preserves_length_for_odd_sizes():
    x = np.random.default_rng(1).normal(size=101)
    assert len(metric_utils.smooth(x)) == 101


def test_smooth_reduces_noise_variance():
    x = np.random.default_rng(0).normal(size=1024)
    assert np.var(metric_utils.smooth(x)) < np.var(x)


def test_smooth_single_level_keeps_ramp():
    """Finest Haar details of a unit ramp are all 1/sqrt(2), well under the threshold."""
    ramp = np.arange(256, dtype=float)
    smoothed = metric_utils.smooth(ramp, metric_utils.DenoiseConfig(levels=1))
    assert np.max(np.abs(smoothed - ramp)) <= 0.5 + 1e-9


def test_smooth_is_idempotent():
    for x in (np.full(64, 3.5), np.arange(256, dtype=float)):
        once = metric_utils.smooth(x)
        twice = metric_utils.smooth(once)
        assert np.max(np.abs(twice - once)) < 1e-9


def test_smooth_piecewise_constant_has_no_nan():
    x = np.concatenate([np.ones(48), [1.0, 3.0, 1.0, 3.0]])
    smoothed = metric_utils.smooth(x)
    assert not np.any(np.isnan(smoothed))
    np.testing.assert_array_equal(smoothed, x)


def test_robustness_on_loaded_channels():
    """Loaded sample arrays are read-only; the denoiser must still accept them."""
    spec = synth_utils.SynthSpec(channels=2, samples_per_state=64, seed=3)
    with tempfile.TemporaryDirectory() as tmp:
        signals, costs = synth_utils.synth(spec, tmp)
        dataset = sensor_utils.load_signals(signals)
        joined = sensor_utils.join(dataset, sensor_utils.load_costs(costs))
    channel = dataset.channels[0]
    assert not channel.state_arrays()[0].flags.writeable
    assert 0.0 < metric_utils.robustness(channel) <= 1.0
    metrics, flagged = metric_utils.characterize(joined)
    assert not flagged
    assert len(metrics) == 2


def test_robustness_of_constant_channel_is_one():
    value = metric_utils.robustness(_channel({1: np.full(32, 2.0), 2: np.full(32, 4.0)}))
    assert value == pytest.approx(1.0)


def test_robustness_with_identity_smoother():
    channel = _channel({1: [1.0, -2.0, 3.0], 2: [4.0, 5.0, 6.0]})
    value = metric_utils.robustness(channel, smoother=lambda x, cfg: x)
    assert value == 1.0, "Zero residual must give robustness 1"


def test_robustness_all_zero_state():
    channel = _channel({1: np.zeros(16), 2: np.zeros(16)})
    assert metric_utils.robustness(channel) == 1.0


def test_robustness_in_unit_interval_for_noise():
    rng = np.random.default_rng(7)
    channel = _channel({1: rng.normal(1.0, 2.0, 256), 2: rng.normal(1.0, 2.0, 256)})
    value = metric_utils.robustness(channel)
    assert 0.0 < value <= 1.0
    clean = _channel({1: 10 + 0.001 * rng.normal(size=256), 2: 20 + 0.001 * rng.normal(size=256)})
    assert metric_utils.robustness(clean) > value, "A cleaner channel should be more robust"


def test_robustness_with_unit_ratio_residual():
    """A smoother returning zeros makes |res / x| = 1 at every sample."""
    channel = _channel({1: [1.0, 2.0, 3.0, 4.0], 2: [-5.0, 6.0, -7.0, 8.0]})
    value = metric_utils.robustness(channel, smoother=lambda x, cfg: np.zeros_like(x))
    assert value == pytest.approx(math.exp(-1.0), abs=1e-12)


def test_robustness_averages_states_equally():
    """One constant state (ratio 0) and one with ratio 1 give (1 + e^-1) / 2."""
    def smoother(x, cfg):
        return metric_utils.smooth(x, cfg) if np.all(x == x[0]) else np.zeros_like(x)

    channel = _channel({1: np.full(16, 2.0), 2: np.arange(1.0, 17.0)})
    value = metric_utils.robustness(channel, smoother=smoother)
    assert value == pytest.approx((1.0 + math.exp(-1.0)) / 2, abs=1e-9)


# ---- trendability ----

def test_trendability_of_ramp_is_one():
    ramp = np.arange(40, dtype=float)
    value = metric_utils.trendability(_channel({1: ramp, 2: 2 * ramp + 1}))
    assert value == pytest.approx(1.0)


def test_trendability_of_constant_is_zero():
    assert metric_utils.trendability(_channel({1: np.ones(10), 2: np.zeros(10)})) == 0.0


def test_trendability_of_oversampled_sine():
    t = np.arange(1000)
    wave = np.sin(2 * np.pi * t / 200)
    value = metric_utils.trendability(_channel({1: wave, 2: wave}), max_lag=1)
    assert value > 0.99


def test_trendability_of_white_noise_is_low():
    rng = np.random.default_rng(2048)
    channel = _channel({1: rng.normal(size=2048), 2: rng.normal(size=2048)})
    assert metric_utils.trendability(channel, max_lag=10) < 0.1


def test_trendability_literal_mode():
    """Sum over lags 1..2 of |x_t x_(t-lag)| for five ones is 4 + 3."""
    channel = _channel({1: np.ones(5), 2: np.ones(5)})
    assert metric_utils.trendability(channel, max_lag=2, mode="literal") == pytest.approx(7.0)


def test_trendability_rejects_bad_lag():
    channel = _channel({1: np.arange(5.0), 2: np.arange(5.0)})
    with pytest.raises(ParameterError):
        metric_utils.trendability(channel, max_lag=5)
    with pytest.raises(ParameterError):
        metric_utils.trendability(channel, max_lag=0)
    with pytest.raises(ParameterError):
        metric_utils.trendability(channel, mode="weird")


# ---- detectability ----

def test_detectability_fisher_ratio():
    """Means 2 and 5, scatter 2 + 2: between 13.5 over within 4."""
    value = metric_utils.detectability(_channel({1: [1, 2, 3], 2: [4, 5, 6]}))
    assert value == pytest.approx(3.375)


def test_detectability_zero_scatter_is_flagged():
    channel = _channel({1: [1, 1, 1], 2: [2, 2, 2]})
    with pytest.raises(SingularityError) as excinfo:
        metric_utils.detectability(channel)
    assert excinfo.value.channel == ("1", "0")


def test_detectability_cap():
    assert metric_utils.detectability(_channel({1: [1, 1], 2: [2, 2]}), cap=1e6) == 1e6
    assert metric_utils.detectability(_channel({1: [3, 3], 2: [3, 3]}), cap=1e6) == 0.0
    assert metric_utils.detectability(_channel({1: [1, 2, 3], 2: [4, 5, 6]}), cap=1.0) == 1.0


# ---- variance and rms ----

def test_variance_and_rms():
    channel = _channel({1: [1, 2, 3], 2: [4, 5, 6]})
    assert metric_utils.variance(channel) == pytest.approx(1.0)
    assert metric_utils.rms(_channel({1: [2, 2], 2: [3, -3]})) == pytest.approx(2.5)


# ---- invariances and ranges ----

def test_offset_and_scale_invariance():
    rng = np.random.default_rng(13)
    a, b = rng.normal(size=120), 1.5 + rng.normal(size=120)
    channel = _channel({1: a, 2: b})
    shifted = _channel({1: a + 7.0, 2: b + 7.0})
    scaled = _channel({1: 3.5 * a, 2: 3.5 * b})
    affine = _channel({1: -2.0 * a + 5.0, 2: -2.0 * b + 5.0})

    assert metric_utils.monotonicity(shifted) == pytest.approx(metric_utils.monotonicity(channel))
    assert metric_utils.monotonicity(scaled) == pytest.approx(metric_utils.monotonicity(channel))
    assert metric_utils.trendability(scaled) == pytest.approx(metric_utils.trendability(channel), abs=1e-9)
    assert metric_utils.detectability(affine) == pytest.approx(metric_utils.detectability(channel), rel=1e-9)
    assert metric_utils.rms(scaled) == pytest.approx(3.5 * metric_utils.rms(channel), rel=1e-9)
    assert metric_utils.variance(scaled) == pytest.approx(3.5 ** 2 * metric_utils.variance(channel), rel=1e-9)


def test_metric_ranges_over_random_channels():
    rng = np.random.default_rng(99)
    for _ in range(50):
        n = int(rng.integers(8, 200))
        offset, spread = rng.uniform(-10, 10), rng.uniform(0.1, 5.0)
        states = {1: offset + spread * rng.normal(size=n),
                  2: offset + rng.uniform(-3, 3) + spread * rng.normal(size=n) + np.linspace(0, rng.uniform(0, 4), n)}
        m = metric_utils.channel_metrics(_channel(states))
        assert 0.0 <= m.monotonicity <= 1.0
        assert 0.0 <= m.trendability <= 1.0
        assert 0.0 < m.robustness <= 1.0
        assert m.detectability >= 0.0 and m.variance >= 0.0 and m.rms >= 0.0


# ---- characterize ----

def test_characterize_flags_zero_scatter_and_keeps_others():
    ramp = np.linspace(0, 1, 16)
    good = _channel({1: 1 + ramp, 2: 5 + ramp}, key=("1", "0"))
    flat = _channel({1: np.ones(16), 2: np.full(16, 2.0)}, key=("1", "10"))
    metrics, flagged = metric_utils.characterize(_joined([good, flat]))
    assert list(metrics) == [("1", "0")]
    assert ("1", "10") in flagged and "scatter" in flagged[("1", "10")]


def test_characterize_is_independent_of_worker_count():
    rng = np.random.default_rng(11)
    channels = [_channel({1: rng.normal(size=32), 2: 1 + rng.normal(size=32)}, key=("1", str(10 * i)))
                for i in range(6)]
    joined = _joined(channels)
    serial, _ = metric_utils.characterize(joined, metric_utils.MetricConfig(max_workers=1))
    parallel, _ = metric_utils.characterize(joined, metric_utils.MetricConfig(max_workers=4))
    assert serial == parallel


def test_metrics_file_round_trip():
    rng = np.random.default_rng(5)
    channels = [_channel({1: rng.normal(size=32), 2: 2 + rng.normal(size=32)}, key=("2", str(10 * i)))
                for i in range(3)]
    joined = _joined(channels)
    metrics, _ = metric_utils.characterize(joined)
    with tempfile.TemporaryDirectory() as tmp:
        path = metric_utils.write_metrics(metrics, joined, os.path.join(tmp, "metrics.csv"))
        with open(path, encoding="utf-8") as f:
            header = f.readline().strip()
        loaded, costs = metric_utils.load_metrics(path)
    assert header == ",".join(metric_utils.METRICS_CSV_COLUMNS)
    assert loaded == metrics
    assert all(math.isclose(costs[k], 50.0) for k in costs)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
