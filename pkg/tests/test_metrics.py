import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pse.dsp import SegmentalConfig, Waveform
from pse.metrics import (
    PurificationWeights,
    logistic_weights,
    mse,
    segmental_mse,
    segmental_snr,
    si_sdr,
)

CFG = SegmentalConfig()


def rand_pair(length=16000, seed=0, scale=0.3):
    rng = np.random.default_rng(seed)
    return (
        Waveform(rng.standard_normal(length) * scale),
        Waveform(rng.standard_normal(length) * scale),
    )


def segsnr_oracle(target, estimate, cfg):
    """Direct summation over raw indices, padded explicitly, clamped."""
    v = target.samples
    r = target.samples - estimate.samples
    length = v.size
    count = math.ceil(length / cfg.hop)
    pad = np.zeros(cfg.frame_size)
    v = np.concatenate([v, pad])
    r = np.concatenate([r, pad])
    out = []
    for j in range(count):
        num = den = 0.0
        for i in range(cfg.hop * j, cfg.hop * j + cfg.frame_size):
            w = cfg.window[i - cfg.hop * j]
            num += (w * v[i]) ** 2
            den += (w * r[i]) ** 2
        if num < 1e-12 and den < 1e-12:
            out.append(0.0)
        elif den == 0.0:
            out.append(30.0)
        else:
            out.append(min(30.0, max(-30.0, 10.0 * math.log10(num / den))))
    return np.array(out)


def segmse_oracle(target, estimate, weights, cfg):
    """Term-by-term summation of the weighted segmental MSE."""
    s = np.concatenate([target.samples, np.zeros(cfg.frame_size)])
    y = np.concatenate([estimate.samples, np.zeros(cfg.frame_size)])
    count = math.ceil(target.samples.size / cfg.hop)
    total = 0.0
    for j in range(count):
        acc = 0.0
        for i in range(cfg.hop * j, cfg.hop * j + cfg.frame_size):
            w = cfg.window[i - cfg.hop * j]
            acc += (w * s[i] - w * y[i]) ** 2
        total += weights[j] * acc / cfg.frame_size
    return total / count


class TestMse:
    def test_half(self):
        assert mse(Waveform([1.0, 0.0]), Waveform([0.0, 0.0])) == 0.5

    def test_identity(self):
        s, _ = rand_pair(seed=1)
        assert mse(s, s) == 0.0

    def test_direct_arithmetic(self):
        got = mse(Waveform([1.0, 2.0, 3.0]), Waveform([1.0, 1.0, 1.0]))
        assert abs(got - 5.0 / 3.0) < 1e-15

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            mse(Waveform(np.zeros(3)), Waveform(np.zeros(4)))

    @given(st.integers(0, 2**31), st.integers(2, 4000))
    @settings(max_examples=30, deadline=None)
    def test_nonnegative_with_equality_iff_equal(self, seed, length):
        rng = np.random.default_rng(seed)
        s = Waveform(rng.standard_normal(length))
        y = Waveform(rng.standard_normal(length))
        assert mse(s, y) >= 0.0
        assert (mse(s, y) == 0.0) == bool(np.array_equal(s.samples, y.samples))


class TestSegmentalSnr:
    def test_zero_estimate_gives_zero_db(self):
        s, _ = rand_pair(seed=2)
        vals = segmental_snr(s, Waveform(np.zeros(len(s))), CFG).values
        np.testing.assert_array_equal(vals, np.zeros(63))

    def test_scaled_estimate_gives_twenty_db(self):
        s, _ = rand_pair(seed=3)
        vals = segmental_snr(s, Waveform(0.9 * s.samples), CFG).values
        np.testing.assert_allclose(vals, 20.0, atol=1e-9)

    def test_perfect_estimate_clamps_high(self):
        s, _ = rand_pair(seed=4)
        vals = segmental_snr(s, s, CFG).values
        np.testing.assert_array_equal(vals, np.full(63, 30.0))

    def test_matches_direct_summation_oracle(self):
        s, y = rand_pair(length=2000, seed=5)
        got = segmental_snr(s, y, CFG).values
        np.testing.assert_allclose(got, segsnr_oracle(s, y, CFG), rtol=1e-9, atol=1e-9)

    def test_scale_invariance(self):
        s, y = rand_pair(seed=6)
        base = segmental_snr(s, y, CFG).values
        for c in (3.0, -0.25, 1e3):
            scaled = segmental_snr(Waveform(c * s.samples), Waveform(c * y.samples), CFG).values
            np.testing.assert_allclose(scaled, base, atol=1e-9)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            segmental_snr(Waveform(np.ones(100)), Waveform(np.ones(99)), CFG)


class TestLogisticWeights:
    def test_zero_maps_to_half(self):
        assert logistic_weights(np.zeros(5)).p[0] == 0.5

    def test_saturation_values(self):
        # evaluated directly: 1/(1+exp(30)) = 9.3576229688...e-14
        high = logistic_weights(np.array([30.0])).p[0]
        low = logistic_weights(np.array([-30.0])).p[0]
        direct = 1.0 / (1.0 + math.exp(30.0))
        assert abs(low - direct) < 1e-13 * direct
        assert abs(low - 9.3576229688e-14) < 1e-23
        # 1 - high saturates at float64 resolution around 1.0
        assert abs((1.0 - high) - direct) < 2e-16

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            logistic_weights(np.array([0.0, np.nan]))

    @given(st.lists(st.floats(-30, 30), min_size=2, max_size=40))
    def test_monotone(self, alphas):
        p = logistic_weights(np.array(alphas)).p
        order = np.argsort(alphas)
        assert np.all(np.diff(p[order]) >= 0.0)

    def test_weights_strictly_inside_unit_interval(self):
        p = logistic_weights(np.array([-30.0, 0.0, 30.0])).p
        assert np.all(p > 0.0) and np.all(p < 1.0)

    def test_invariant_enforced_on_type(self):
        with pytest.raises(ValueError):
            PurificationWeights(np.array([0.0]), np.array([1.0]))


class TestSegmentalMse:
    def test_zero_weights(self):
        s, y = rand_pair(seed=7)
        assert segmental_mse(s, y, np.zeros(63), CFG) == 0.0

    def test_identity(self):
        s, _ = rand_pair(seed=8)
        assert segmental_mse(s, s, np.full(63, 0.7), CFG) == 0.0

    def test_matches_brute_force_oracle(self):
        s, y = rand_pair(length=16000, seed=9)
        rng = np.random.default_rng(10)
        p = rng.uniform(0.0, 1.0, 63)
        got = segmental_mse(s, y, p, CFG)
        want = segmse_oracle(s, y, p, CFG)
        assert abs(got - want) < 1e-9 * want

    def test_uniform_weights_equal_mean_windowed_frame_mse(self):
        from pse.dsp import frame_signal

        s, y = rand_pair(seed=11)
        got = segmental_mse(s, y, np.ones(63), CFG)
        diff = frame_signal(s.samples, CFG) - frame_signal(y.samples, CFG)
        want = float(np.mean(np.mean(diff**2, axis=1)))
        assert abs(got - want) < 1e-9 * want

    def test_weight_length_mismatch(self):
        s, y = rand_pair(seed=12)
        with pytest.raises(ValueError):
            segmental_mse(s, y, np.ones(62), CFG)


class TestSiSdr:
    def test_scale_invariance_hits_clamp(self):
        s, _ = rand_pair(seed=13)
        assert si_sdr(s, Waveform(3.7 * s.samples)) == 60.0
        for a in (0.1, 1.0, 42.0):
            assert si_sdr(s, Waveform(a * s.samples)) == 60.0

    def _orthogonal_error(self, s, energy_ratio, seed):
        rng = np.random.default_rng(seed)
        e = rng.standard_normal(len(s))
        e -= (np.dot(e, s.samples) / np.dot(s.samples, s.samples)) * s.samples
        e *= math.sqrt(energy_ratio * np.dot(s.samples, s.samples) / np.dot(e, e))
        return Waveform(s.samples + e)

    def test_equal_energy_orthogonal_error_is_zero_db(self):
        s, _ = rand_pair(seed=14)
        y = self._orthogonal_error(s, 1.0, seed=15)
        assert abs(si_sdr(s, y)) < 1e-9

    def test_tenth_energy_orthogonal_error_is_ten_db(self):
        s, _ = rand_pair(seed=16)
        y = self._orthogonal_error(s, 0.1, seed=17)
        assert abs(si_sdr(s, y) - 10.0) < 1e-9

    def test_zero_energy_target_rejected(self):
        with pytest.raises(ValueError):
            si_sdr(Waveform(np.zeros(100)), Waveform(np.ones(100)))

    def test_matches_direct_formula(self):
        s, y = rand_pair(seed=18)
        a = np.dot(y.samples, s.samples) / np.dot(s.samples, s.samples)
        want = 10 * np.log10(
            np.dot(a * s.samples, a * s.samples)
            / np.dot(y.samples - a * s.samples, y.samples - a * s.samples)
        )
        assert abs(si_sdr(s, y) - want) < 1e-9 * abs(want)
