import functools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bfclab.core_model import CombParams, CorrelationTrace, DetectorParams, TraceKind
from bfclab.errors import (EmptyAccidentalRegion, IncompleteGrid, NoCoincidences, NoHeralds,
                           NumericalError, UnknownChannel)
from bfclab.eventsim import (DARK, Channel, EventStream, SourceParams, generate_filter_scan,
                             generate_pairs, hbt_split)
from bfclab.schmidt import schmidt_from_jsi
from bfclab.tagger import (CoincidenceHistogrammer, accidental_mask, assemble_jsi,
                           coincidence_histogram, count_coincidences, estimate_g2,
                           herald_counts, heralded_g2_zero, peak_positions, peak_spacing)

from oracles import heralded_g2_enumeration, sinc2_hp

NOMINAL = CombParams.nominal()
T = NOMINAL.round_trip_time
FWHM_PER_RMS = 2 * math.sqrt(2 * math.log(2))
# 21.6 ps combined FWHM split evenly between two detectors
JITTER = DetectorParams(jitter_rms_s=21.6e-12 / FWHM_PER_RMS / math.sqrt(2))


def brute_histogram(times, chans, ch_a, ch_b, bw, span):
    ta, tb = times[chans == ch_a], times[chans == ch_b]
    d = (tb[None, :] - ta[:, None]).ravel()
    idx = np.floor((d + span) / bw)
    n = int(round(2 * span / bw))
    idx = idx[(idx >= 0) & (idx < n)].astype(int)
    return np.bincount(idx, minlength=n)


@st.composite
def small_streams(draw):
    n = draw(st.integers(0, 60))
    t = np.sort(np.array(draw(st.lists(st.floats(0, 2e-8), min_size=n, max_size=n))))
    ch = np.array(draw(st.lists(st.sampled_from([0, 1]), min_size=n, max_size=n)), dtype=np.int8)
    return EventStream(t, ch, np.full(n, DARK))


class TestHistogram:
    def test_empty_stream(self):
        h = coincidence_histogram(EventStream.empty())
        assert h.kind is TraceKind.HISTOGRAM
        assert h.values.size == 4000 and not h.values.any()

    def test_single_coincidence_in_central_bin(self):
        s = EventStream([1e-6, 1e-6], [Channel.SIGNAL_A, Channel.IDLER_B], [0, 0])
        h = coincidence_histogram(s, bin_width_s=1e-12, span_s=5e-12)
        assert h.values.sum() == 1
        assert h.values[5] == 1
        assert h.tau[5] == pytest.approx(0.0, abs=1e-24)

    def test_sign_follows_channel_order(self):
        s = EventStream([0.0, 3e-12], [Channel.IDLER_B, Channel.SIGNAL_A], [0, 0])
        h = coincidence_histogram(s, bin_width_s=1e-12, span_s=5e-12)
        assert h.tau[np.argmax(h.values)] == pytest.approx(3e-12)
        r = coincidence_histogram(s, Channel.SIGNAL_A, Channel.IDLER_B, 1e-12, 5e-12)
        assert r.tau[np.argmax(r.values)] == pytest.approx(-3e-12)

    def test_unknown_channel(self):
        with pytest.raises(UnknownChannel):
            coincidence_histogram(EventStream.empty(), "SignalZ", Channel.IDLER_B)

    @pytest.mark.parametrize("bw, span", [(0.0, 1e-9), (1e-12, 0.5e-12), (3e-12, 1e-11)])
    def test_bad_binning(self, bw, span):
        with pytest.raises(ValueError):
            CoincidenceHistogrammer(0, 1, bw, span)

    @given(small_streams(), st.integers(1, 10))
    def test_conservation_and_chunking(self, s, chunk):
        bw, span = 1e-10, 2e-9
        h = coincidence_histogram(s, 0, 1, bw, span)
        expected = brute_histogram(s.times, s.channels, 0, 1, bw, span)
        assert np.array_equal(h.values, expected)
        assert np.array_equal(coincidence_histogram(s, 0, 1, bw, span, chunk_size=chunk).values,
                              h.values)

    def test_chunking_on_simulated_stream(self):
        s = generate_pairs(NOMINAL, SourceParams(1e6, 0.05, seed=2), JITTER, JITTER)
        a = coincidence_histogram(s, span_s=1e-9)
        b = coincidence_histogram(s, span_s=1e-9, chunk_size=997)
        assert np.array_equal(a.values, b.values)
        assert a.values.sum() == sum(brute_window(s, 1e-9))

    def test_out_of_order_chunk_rejected(self):
        h = CoincidenceHistogrammer(0, 1, 1e-12, 1e-9)
        h.update(np.array([1.0]), np.array([0]))
        with pytest.raises(ValueError):
            h.update(np.array([0.5]), np.array([1]))


def brute_window(s, span):
    ta = s.channel_times(Channel.IDLER_B)
    tb = s.channel_times(Channel.SIGNAL_A)
    lo = np.searchsorted(tb, ta - span, side="left")
    hi = np.searchsorted(tb, ta + span, side="left")
    return (hi - lo).tolist()


class TestPeakSpacing:
    def test_nominal_recurrence_spacing(self):
        s = generate_pairs(NOMINAL, SourceParams(1e5, 10.0, seed=0), JITTER, JITTER)
        assert s.params["pairs_emitted"] == pytest.approx(1e6, rel=0.01)
        h = coincidence_histogram(s)
        spacing = peak_spacing(h, 0.5 * T, 8.5 * T, smooth_s=T / 16,
                               min_separation_s=0.6 * T, method="slope")
        assert spacing == pytest.approx(22.07e-12, abs=0.3e-12)

    def test_clean_periodic_trace(self):
        tau = np.arange(0, 200e-12, 0.25e-12)
        y = 1 + np.cos(2 * math.pi * (tau - 3.3e-12) / 20e-12)
        tr = CorrelationTrace(0.0, 0.25e-12, y, TraceKind.INTENSITY)
        p = peak_positions(tr, detrend=False)
        np.testing.assert_allclose(p, 3.3e-12 + 20e-12 * np.arange(p.size), atol=0.02e-12)
        for m in ("median", "slope"):
            assert peak_spacing(tr, method=m, detrend=False) == pytest.approx(20e-12, rel=1e-3)

    def test_slope_survives_missing_peak(self):
        tau = np.arange(0, 200e-12, 0.25e-12)
        y = 1 + np.cos(2 * math.pi * tau / 20e-12)
        y[(tau > 95e-12) & (tau < 105e-12)] = 0.0
        tr = CorrelationTrace(0.0, 0.25e-12, y, TraceKind.INTENSITY)
        assert peak_spacing(tr, 10e-12, 190e-12, method="slope", detrend=False) == \
            pytest.approx(20e-12, rel=1e-3)

    def test_too_few_peaks(self):
        tr = CorrelationTrace(0.0, 1e-12, np.linspace(0, 1, 50), TraceKind.INTENSITY)
        with pytest.raises(NumericalError):
            peak_spacing(tr, detrend=False)
        with pytest.raises(ValueError):
            peak_spacing(tr, method="mode")


@functools.lru_cache
def flat_histogram(seed=1):
    det = DetectorParams(dark_rate_hz=1e5)
    s = generate_pairs(NOMINAL, SourceParams(0.0, 10.0, seed=seed), det, det)
    return coincidence_histogram(s, bin_width_s=250e-12, span_s=25e-9)


class TestG2:
    def flat_hist(self, seed=1):
        return flat_histogram(seed)

    def test_uncorrelated_is_flat(self):
        h = self.flat_hist()
        g = estimate_g2(h)
        level = g.meta["accidental_level"]
        sigma = 1 / math.sqrt(level)
        assert np.all(np.abs(g.values - 1) < 4 * sigma)

    def test_accidental_mean_is_one(self):
        h = self.flat_hist()
        g = estimate_g2(h, (5e-9, 25e-9))
        mask = accidental_mask(h, (5e-9, 25e-9))
        assert np.mean(g.values[mask]) == pytest.approx(1.0, abs=1e-12)

    @given(st.floats(1e-3, 1e6))
    def test_scale_invariance(self, c):
        h = self.flat_hist()
        scaled = CorrelationTrace(h.tau_start_s, h.tau_step_s, c * h.values, h.kind)
        np.testing.assert_allclose(estimate_g2(scaled).values, estimate_g2(h).values, rtol=1e-12)

    def test_single_sided_simulated_stream(self):
        det = DetectorParams(jitter_rms_s=6.5e-12, dark_rate_hz=0.0)
        s = generate_pairs(NOMINAL, SourceParams(2e6, 2.0, seed=4), det, det)
        h = coincidence_histogram(s, bin_width_s=10e-12, span_s=50e-9)
        g = estimate_g2(h, comb=NOMINAL)
        tau = g.tau + 0.5 * g.tau_step_s
        level = g.meta["accidental_level"]
        neg = g.values[(tau < -50e-12) & (tau > -2e-9)]
        assert abs(neg.mean() - 1) < 4 / math.sqrt(level * neg.size)
        assert g.values[(tau > 0) & (tau < 20e-12)].max() > 100

    def test_empty_region(self):
        h = self.flat_hist()
        with pytest.raises(EmptyAccidentalRegion):
            estimate_g2(h, (30e-9, 40e-9))
        zero = CorrelationTrace(h.tau_start_s, h.tau_step_s, np.zeros(h.values.size),
                                TraceKind.HISTOGRAM)
        with pytest.raises(EmptyAccidentalRegion):
            estimate_g2(zero)

    def test_default_region_with_comb_needs_wide_span(self):
        h = coincidence_histogram(EventStream.empty(), span_s=2e-9)
        with pytest.raises(EmptyAccidentalRegion):
            accidental_mask(h, comb=NOMINAL)


class TestHeralded:
    def single_pair_stream(self, n=20000):
        # pairs spaced 1 us apart: never two pairs in one window
        t = np.arange(n) * 1e-6
        times = np.concatenate([t + 5e-12, t])
        chans = np.concatenate([np.full(n, Channel.SIGNAL_A), np.full(n, Channel.IDLER_B)])
        ids = np.concatenate([np.arange(n), np.arange(n)])
        return hbt_split(EventStream.from_unsorted(times, chans, ids), 0.5, seed=1)

    def test_single_pairs_give_zero(self):
        g, sigma = heralded_g2_zero(self.single_pair_stream())
        assert g == 0.0 and sigma > 0

    def test_counts(self):
        n_a, n_b, n_c, n_bc = herald_counts(self.single_pair_stream(1000))
        assert n_a == 1000 and n_b + n_c == 1000 and n_bc == 0

    def test_matches_enumeration_oracle(self):
        mu = 0.04
        det = DetectorParams(jitter_rms_s=6.5e-12)
        s = generate_pairs(NOMINAL, SourceParams.from_mu(mu, 0.1, seed=3), det, det)
        g, sigma = heralded_g2_zero(hbt_split(s, 0.5, seed=5))
        assert abs(g - heralded_g2_enumeration(mu, 1.0)) < 4 * sigma
        assert 0 <= g < 1

    def test_no_heralds(self):
        s = EventStream([0.0, 1e-9], [Channel.IDLER_B1, Channel.IDLER_B2], [0, 1])
        with pytest.raises(NoHeralds):
            heralded_g2_zero(s)

    def test_no_arm_coincidences(self):
        s = EventStream([0.0, 1.0], [Channel.SIGNAL_A, Channel.IDLER_B1], [0, 1])
        with pytest.raises(NoCoincidences):
            heralded_g2_zero(s)


class TestJSI:
    def test_ideal_scan(self):
        runs = generate_filter_scan(NOMINAL, SourceParams(2e5, 1.0, seed=12), DetectorParams(),
                                    DetectorParams())
        jsi = assemble_jsi(runs)
        diag = jsi.anti_diagonal()
        w = np.array([sinc2_hp(NOMINAL.sinc_scale * m * NOMINAL.delta_Omega)
                      for m in range(-2, 3)])
        expected = diag.sum() * w / w.sum()
        assert np.all(np.abs(diag - expected) < 3 * np.sqrt(expected))
        off = jsi.weights.copy()
        off[np.arange(5), 4 - np.arange(5)] = 0
        assert not off.any()
        assert schmidt_from_jsi(jsi).schmidt_number == pytest.approx(4.89, abs=0.05)

    def test_cross_talk_scan(self):
        runs = generate_filter_scan(NOMINAL, SourceParams(1e5, 0.5, seed=3), DetectorParams(),
                                    DetectorParams(), cross_talk=0.02)
        r = schmidt_from_jsi(assemble_jsi(runs))
        assert 0 < r.separable_contamination < 0.1

    def test_incomplete_grid(self):
        runs = generate_filter_scan(NOMINAL.replace(n_lines=3), SourceParams(1e3, 0.1),
                                    DetectorParams(), DetectorParams())
        with pytest.raises(IncompleteGrid):
            assemble_jsi(runs[:-1])
        with pytest.raises(IncompleteGrid):
            assemble_jsi([])

    def test_count_coincidences_window(self):
        s = EventStream([0.0, 0.9e-9, 5e-9], [Channel.SIGNAL_A, Channel.IDLER_B, Channel.IDLER_B],
                        [0, 0, 1])
        assert count_coincidences(s, window_s=2e-9) == 1
        assert count_coincidences(s, window_s=1e-9) == 0
        assert count_coincidences(s, window_s=2e-9, offset_s=5e-9) == 1
