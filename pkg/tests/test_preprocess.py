"""Preprocessing oracles: Butterworth coefficients against the closed-form
bilinear transform and scipy's designer, mu-law properties, minmax
normalization, and segmentation counting/purity rules."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xtimenet.data import SignalRecord
from xtimenet.errors import DataError
from xtimenet.preprocess import (apply_prescale, butterworth_lowpass,
                                 filter_apply, fit_minmax, fit_prescale,
                                 minmax_normalize, mu_law_normalize,
                                 preprocess_record, segment_windows)


def closed_form_coeffs(fc, fs):
    """The oracle: prewarped bilinear transform of H(s) = wc/(s+wc)."""
    wc = 2.0 * fs * math.tan(math.pi * fc / fs)
    return wc / (2 * fs + wc), wc / (2 * fs + wc), (wc - 2 * fs) / (2 * fs + wc)


class TestButterworth:
    def test_reference_coefficients_fc1_fs100(self):
        c = butterworth_lowpass(1.0, 100.0)
        b0, b1, a1 = closed_form_coeffs(1.0, 100.0)
        assert abs(c.b0 - b0) < 1e-15 and abs(c.b1 - b1) < 1e-15
        assert abs(c.a1 - a1) < 1e-15
        # published rounded values
        assert abs(c.b0 - 0.0304687) < 5e-7
        assert abs(c.a1 - (-0.9390625)) < 5e-7

    def test_matches_scipy_designer(self):
        scipy_signal = pytest.importorskip("scipy.signal")
        b, a = scipy_signal.butter(1, 1.0 / 50.0, btype="low")
        c = butterworth_lowpass(1.0, 100.0)
        assert np.allclose([c.b0, c.b1], b, atol=1e-12)
        assert np.allclose([1.0, c.a1], a, atol=1e-12)

    @pytest.mark.parametrize("fc,fs", [(1, 100), (0.5, 30), (10, 512),
                                       (40, 100), (0.2, 2000)])
    def test_dc_gain_unity(self, fc, fs):
        # float cancellation in 1+a1 grows with fs/fc; tested down to
        # ratios of 1e-4, far past the 1 Hz / 100 Hz operating point
        assert abs(butterworth_lowpass(fc, fs).dc_gain() - 1.0) < 1e-12

    def test_stability(self):
        for fc in (0.1, 1.0, 10.0, 49.0):
            assert abs(butterworth_lowpass(fc, 100.0).a1) < 1.0

    def test_high_cutoff_passes_midband(self):
        c = butterworth_lowpass(45.0, 100.0)  # 0.45 * fs
        w = 2 * math.pi * 25.0 / 100.0  # fs/4
        z = complex(math.cos(w), math.sin(w))
        h = (c.b0 + c.b1 / z) / (1.0 + c.a1 / z)
        assert abs(h) > 0.9

    @pytest.mark.parametrize("fc", [0.0, -1.0, 50.0, 80.0])
    def test_invalid_cutoffs(self, fc):
        with pytest.raises(ValueError, match="fc"):
            butterworth_lowpass(fc, 100.0)


class TestFilterApply:
    def test_zeros_in_zeros_out(self):
        c = butterworth_lowpass(1.0, 100.0)
        assert np.array_equal(filter_apply(np.zeros(100), c), np.zeros(100))

    def test_constant_converges_to_constant(self):
        c = butterworth_lowpass(1.0, 100.0)
        out = filter_apply(np.full(500, 3.7), c)
        assert abs(out[-1] - 3.7) < 1e-6

    def test_impulse_response_recurrence(self):
        c = butterworth_lowpass(1.0, 100.0)
        x = np.zeros(6)
        x[0] = 1.0
        y = filter_apply(x, c)
        assert np.isclose(y[0], c.b0)
        assert np.isclose(y[1], c.b1 - c.a1 * c.b0)
        for t in range(2, 6):
            assert np.isclose(y[t], -c.a1 * y[t - 1])

    def test_matches_scipy_lfilter(self, rng):
        scipy_signal = pytest.importorskip("scipy.signal")
        c = butterworth_lowpass(1.0, 100.0)
        x = rng.standard_normal((3, 200))
        ref = scipy_signal.lfilter(c.b, c.a, x, axis=1)
        assert np.allclose(filter_apply(x, c), ref, atol=1e-12)

    def test_bounded_output_long_random_input(self, rng):
        c = butterworth_lowpass(1.0, 100.0)
        out = filter_apply(rng.standard_normal(20_000), c)
        assert np.abs(out).max() < 10.0

    def test_two_pass_is_zero_phase(self):
        c = butterworth_lowpass(2.0, 100.0)
        t = np.arange(400) / 100.0
        x = np.sin(2 * np.pi * 0.5 * t)
        # single pass lags; two-pass output peaks align with the input
        two = filter_apply(x, c, two_pass=True)
        lag_two = np.argmax(np.correlate(x[150:250], two[150:250], "full"))
        assert abs(lag_two - 99) <= 1


class TestMuLaw:
    def test_fixed_points(self):
        assert mu_law_normalize(0.0) == 0.0
        assert mu_law_normalize(1.0) == 1.0
        assert mu_law_normalize(-1.0) == -1.0

    def test_half_value_against_formula(self):
        expected = math.log(129.0) / math.log(257.0)
        assert abs(mu_law_normalize(0.5, 256.0) - expected) < 1e-12

    def test_range_error_names_index(self):
        x = np.zeros((3, 4))
        x[1, 2] = 1.5
        with pytest.raises(ValueError, match=r"\(1, 2\)"):
            mu_law_normalize(x)

    def test_tolerates_tiny_overshoot(self):
        mu_law_normalize(1.0 + 1e-13)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-1.0, 1.0))
    def test_odd_symmetry(self, x):
        f = mu_law_normalize
        assert np.isclose(f(x), -f(-x), atol=1e-15)

    def test_monotone_and_magnifying_on_grid(self):
        grid = np.linspace(-1.0, 1.0, 10_001)
        out = mu_law_normalize(grid)
        assert (np.diff(out) > 0).all()
        assert (np.abs(out) >= np.abs(grid) - 1e-15).all()
        assert out[0] == -1.0 and out[-1] == 1.0 and out[5000] == 0.0

    def test_not_idempotent(self):
        once = mu_law_normalize(0.5)
        assert not np.isclose(mu_law_normalize(once), once)

    def test_mu_must_be_positive(self):
        with pytest.raises(ValueError, match="mu"):
            mu_law_normalize(0.5, mu=0.0)


class TestMinmaxAndPrescale:
    def test_endpoints(self):
        out = minmax_normalize(np.array([[0.0, 5.0, 10.0]]))
        assert np.allclose(out, [[-1.0, 0.0, 1.0]])

    def test_full_range_input_unchanged(self):
        x = np.array([[-1.0, 0.25, 1.0]])
        assert np.allclose(minmax_normalize(x), x)

    def test_constant_channel_zeros_with_warning(self):
        x = np.array([[2.0, 2.0, 2.0], [0.0, 1.0, 2.0]])
        with pytest.warns(UserWarning, match="constant channel"):
            out = minmax_normalize(x)
        assert np.array_equal(out[0], np.zeros(3))
        assert np.allclose(out[1], [-1.0, 0.0, 1.0])

    def test_fitted_stats_reused_on_test_data(self):
        train = np.array([[0.0, 4.0]])
        mn, mx = fit_minmax(train)
        out = minmax_normalize(np.array([[2.0, 6.0]]), mn, mx)
        assert np.allclose(out, [[0.0, 2.0]])  # linear map extends past 1

    def test_prescale_global_not_per_channel(self):
        x = np.array([[1.0, -2.0], [8.0, 0.5]])
        gmax = fit_prescale(x)
        assert gmax == 8.0
        out = apply_prescale(x, gmax)
        assert np.allclose(out, x / 8.0)

    def test_prescale_clips_overshoot(self):
        out = apply_prescale(np.array([12.0, -12.0]), 8.0)
        assert np.array_equal(out, [1.0, -1.0])

    def test_prescale_mask_excludes_test_samples(self):
        x = np.array([[1.0, 100.0]])
        mask = np.array([True, False])
        assert fit_prescale(x, mask) == 1.0


def make_record(stim, rep, channels=2, fs=100.0):
    n = len(stim)
    rng = np.random.default_rng(0)
    return SignalRecord(emg=rng.standard_normal((n, channels)),
                        stimulus=stim, repetition=rep, subject_id=1, fs=fs)


class TestSegmentation:
    def test_window_and_stride_sample_counts(self):
        rec = make_record([1] * 500, [1] * 500)
        ds = segment_windows(rec, 200, 10)
        assert ds.window_samples == 20
        # stride 1 sample: L - W + 1 windows
        assert len(ds) == 481

    def test_single_gesture_count_formula(self):
        rec = make_record([3] * 500, [2] * 500)
        ds = segment_windows(rec, 200, 10)
        assert len(ds) == 500 - 20 + 1
        assert (ds.labels == 2).all()       # remapped 3 -> 2
        assert (ds.repetitions == 2).all()

    def test_no_window_spans_transition(self):
        stim = [1] * 100 + [2] * 100
        rec = make_record(stim, [1] * 200)
        ds = segment_windows(rec, 200, 10)
        # windows fit entirely inside one of the two runs: 81 each
        assert len(ds) == 2 * 81
        assert set(ds.labels.tolist()) == {0, 1}

    def test_rest_windows_discarded(self):
        stim = [0] * 50 + [1] * 100 + [0] * 50
        rec = make_record(stim, [0] * 50 + [1] * 100 + [0] * 50)
        ds = segment_windows(rec, 200, 10)
        assert len(ds) == 81
        assert (ds.labels == 0).all()

    @settings(max_examples=25, deadline=None)
    @given(st.integers(30, 200), st.integers(1, 30), st.integers(1, 9))
    def test_count_formula_property(self, length, stride_samples, label):
        rec = make_record([label] * length, [1] * length)
        ds = segment_windows(rec, 200, stride_samples * 10)
        w = 20
        assert len(ds) == (length - w) // stride_samples + 1

    def test_non_integer_sample_count_rejected(self):
        rec = make_record([1] * 100, [1] * 100)
        with pytest.raises(ValueError, match="whole number"):
            segment_windows(rec, 55, 10)  # 5.5 samples at 100 Hz

    def test_empty_output_is_error(self):
        rec = make_record([0] * 100, [0] * 100)
        with pytest.raises(DataError, match="no pure-gesture"):
            segment_windows(rec, 200, 10)

    def test_long_window_warns_about_latency(self):
        rec = make_record([1] * 100, [1] * 100)
        with pytest.warns(UserWarning, match="300"):
            segment_windows(rec, 350, 10)


class TestPipeline:
    def make_record(self):
        rng = np.random.default_rng(7)
        stim = np.array([0] * 30 + [1] * 120 + [0] * 30 + [2] * 120 + [0] * 30)
        rep = np.array([0] * 30 + [2] * 120 + [0] * 30 + [1] * 120 + [0] * 30)
        emg = rng.standard_normal((len(stim), 3)) * np.array([1.0, 5.0, 50.0])
        return SignalRecord(emg=emg, stimulus=stim, repetition=rep,
                            subject_id=4, fs=100.0)

    def test_mu_law_pipeline_bounds_and_stats(self):
        ds, stats = preprocess_record(self.make_record(), window_ms=200,
                                      step_ms=50, norm="mu-law",
                                      test_repetitions=(2,))
        assert np.abs(ds.windows).max() <= 1.0
        assert stats["prescale_max"] > 0
        assert ds.test_repetitions == (2,)
        assert ds.num_classes == 2

    def test_minmax_pipeline_stats_from_train_only(self):
        record = self.make_record()
        ds, stats = preprocess_record(record, window_ms=200, step_ms=50,
                                      norm="minmax", test_repetitions=(2,))
        # fitted stats must ignore repetition-2 samples
        coeffs_free = np.asarray(record.emg).T
        from xtimenet.preprocess import butterworth_lowpass, filter_apply
        filtered = filter_apply(coeffs_free,
                                butterworth_lowpass(1.0, 100.0))
        mask = np.asarray(record.repetition) != 2
        assert np.allclose(stats["channel_min"],
                           filtered[:, mask].min(axis=1))

    def test_no_training_samples_is_error(self):
        # rest samples (repetition 0) count toward the fit, so the error
        # needs a record where literally every sample is held out
        rng = np.random.default_rng(1)
        record = SignalRecord(emg=rng.standard_normal((100, 2)),
                              stimulus=[1] * 100, repetition=[2] * 100)
        with pytest.raises(DataError, match="training-split"):
            preprocess_record(record, test_repetitions=(1, 2),
                              window_ms=200, step_ms=50)

    def test_unknown_norm_rejected(self):
        with pytest.raises(ValueError, match="normalization"):
            preprocess_record(self.make_record(), norm="zscore")

    def test_double_normalization_differs(self):
        """mu-law(mu-law(x)) != mu-law(x): the pipeline is not idempotent,
        so feeding a preprocessed file back through would corrupt it."""
        x = 0.5
        once = mu_law_normalize(x)
        twice = mu_law_normalize(once)
        assert abs(twice - once) > 0.01
