"""Time-tagger style analysis of event streams.

Coincidence delays are ``t_b - t_a``. A pair of records falls into bin
``floor((t_b - t_a + span) / bin_width)`` of a histogram with
``2 * span / bin_width`` bins, and is dropped if that index is out of range.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.signal import find_peaks

from .core_model import CombParams, CorrelationTrace, TraceKind
from .errors import (EmptyAccidentalRegion, IncompleteGrid, NoCoincidences,
                     NoHeralds, NumericalError)
from .eventsim import Channel, EventStream
from .schmidt import JSIMatrix

DEFAULT_BIN_S = 1e-12
DEFAULT_SPAN_S = 2e-9
DEFAULT_CHUNK = 1_000_000


def _pair_deltas(ta: np.ndarray, tb: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """All differences ``tb[j] - ta[i]`` lying roughly in ``[lo, hi)``.

    The search bounds are slightly generous; callers apply the exact cut.
    """
    if ta.size == 0 or tb.size == 0:
        return np.empty(0)
    start = np.searchsorted(tb, ta + lo, side="left")
    stop = np.searchsorted(tb, ta + hi, side="right")
    counts = stop - start
    total = int(counts.sum())
    if total == 0:
        return np.empty(0)
    idx_a = np.repeat(np.arange(ta.size), counts)
    first = np.repeat(np.cumsum(counts) - counts, counts)
    idx_b = np.repeat(start, counts) + (np.arange(total) - first)
    return tb[idx_b] - ta[idx_a]


class CoincidenceHistogrammer:
    """Streaming start-stop histogram over all (a, b) record pairs.

    Feed time-ordered chunks with :meth:`update`. Each new chunk is paired
    with itself and with a buffer of recent records from earlier chunks, so
    the result does not depend on how the stream is split.
    """

    def __init__(self, ch_a, ch_b, bin_width_s: float = DEFAULT_BIN_S,
                 span_s: float = DEFAULT_SPAN_S):
        if not bin_width_s > 0 or not span_s > 0:
            raise ValueError("bin width and span must be positive")
        if span_s < bin_width_s:
            raise ValueError("span must be at least one bin wide")
        n_bins = 2 * span_s / bin_width_s
        if abs(n_bins - round(n_bins)) > 1e-6:
            raise ValueError("2 * span must be a whole number of bins")
        self.ch_a, self.ch_b = Channel.parse(ch_a), Channel.parse(ch_b)
        self.bin_width_s, self.span_s = float(bin_width_s), float(span_s)
        self.n_bins = int(round(n_bins))
        self.counts = np.zeros(self.n_bins, dtype=np.int64)
        self._old_a = np.empty(0)
        self._old_b = np.empty(0)
        self._reach = self.span_s + 2 * self.bin_width_s

    def _accumulate(self, deltas: np.ndarray):
        if deltas.size == 0:
            return
        idx = np.floor((deltas + self.span_s) / self.bin_width_s)
        idx = idx[(idx >= 0) & (idx < self.n_bins)].astype(np.int64)
        self.counts += np.bincount(idx, minlength=self.n_bins)

    def update(self, times: np.ndarray, channels: np.ndarray):
        times = np.asarray(times, dtype=float)
        if times.size == 0:
            return
        if self._old_a.size + self._old_b.size:
            latest = max(self._old_a[-1] if self._old_a.size else -np.inf,
                         self._old_b[-1] if self._old_b.size else -np.inf)
            if times[0] < latest:
                raise ValueError("chunks must be fed in time order")
        new_a = times[channels == self.ch_a]
        new_b = times[channels == self.ch_b]
        lo, hi = -self._reach, self._reach
        all_b = np.concatenate([self._old_b, new_b])
        self._accumulate(_pair_deltas(new_a, all_b, lo, hi))
        self._accumulate(_pair_deltas(self._old_a, new_b, lo, hi))
        cut = times[-1] - self._reach
        self._old_a = np.concatenate([self._old_a, new_a])
        self._old_a = self._old_a[self._old_a >= cut]
        self._old_b = all_b[all_b >= cut]

    def trace(self, meta: dict | None = None) -> CorrelationTrace:
        return CorrelationTrace(-self.span_s, self.bin_width_s, self.counts.astype(float),
                                TraceKind.HISTOGRAM, dict(meta or {}))


def coincidence_histogram(stream: EventStream, ch_a=Channel.IDLER_B, ch_b=Channel.SIGNAL_A,
                          bin_width_s: float = DEFAULT_BIN_S, span_s: float = DEFAULT_SPAN_S,
                          chunk_size: int | None = None) -> CorrelationTrace:
    """Histogram of ``t_b - t_a`` over ``[-span, span)``.

    The default channel order makes the delay axis signal minus idler time,
    the convention of :func:`~bfclab.core_model.cross_correlation`.

    Channels may be given as :class:`Channel` members, labels or codes; an
    unrecognised channel raises ``UnknownChannel``.
    """
    hist = CoincidenceHistogrammer(ch_a, ch_b, bin_width_s, span_s)
    chunk = chunk_size or DEFAULT_CHUNK
    for i in range(0, len(stream), chunk):
        hist.update(stream.times[i:i + chunk], stream.channels[i:i + chunk])
    return hist.trace({"ch_a": hist.ch_a.label, "ch_b": hist.ch_b.label,
                       "bin_width_s": bin_width_s, "span_s": span_s})


def accidental_mask(hist: CorrelationTrace, region=None,
                    comb: CombParams | None = None) -> np.ndarray:
    """Boolean mask of histogram bins treated as accidentals.

    ``region`` is ``(lo, hi)``: bins with ``lo <= |tau| <= hi``. Without one,
    the flat wings beyond five times the correlation extent of ``comb`` are
    used, or the outer fifth of each wing when no comb is given.
    """
    tau = hist.tau + 0.5 * hist.tau_step_s
    edge = float(np.max(np.abs(tau)))
    if region is None:
        if comb is not None:
            reach = 5 * max(16 * comb.round_trip_time, 20 / comb.delta_omega)
            region = (reach, edge)
        else:
            region = (0.8 * edge, edge)
    lo, hi = region
    mask = (np.abs(tau) >= lo) & (np.abs(tau) <= hi)
    if not mask.any():
        raise EmptyAccidentalRegion(f"no bins with {lo:g} <= |tau| <= {hi:g}")
    return mask


def estimate_g2(hist: CorrelationTrace, accidental_region=None,
                comb: CombParams | None = None) -> CorrelationTrace:
    """Normalise a coincidence histogram by its mean accidental level."""
    mask = accidental_mask(hist, accidental_region, comb)
    level = float(np.mean(hist.values[mask]))
    if level <= 0:
        raise EmptyAccidentalRegion("accidental region holds no counts")
    return CorrelationTrace(hist.tau_start_s, hist.tau_step_s, hist.values / level,
                            TraceKind.INTENSITY, dict(hist.meta, accidental_level=level))


def _matched(ta: np.ndarray, tb: np.ndarray, window_s: float, offset_s: float) -> np.ndarray:
    """For each ``ta``, whether some ``tb`` lies within ``window/2`` of ``ta + offset``."""
    if tb.size == 0:
        return np.zeros(ta.size, dtype=bool)
    centre = ta + offset_s
    lo = np.searchsorted(tb, centre - window_s / 2, side="left")
    hi = np.searchsorted(tb, centre + window_s / 2, side="right")
    return hi > lo


def count_coincidences(stream: EventStream, ch_a=Channel.SIGNAL_A, ch_b=Channel.IDLER_B,
                       window_s: float = 2e-9, offset_s: float = 0.0) -> int:
    """Number of (a, b) record pairs with ``|t_b - t_a - offset| <= window/2``."""
    ta = stream.channel_times(ch_a)
    tb = stream.channel_times(ch_b)
    if ta.size == 0 or tb.size == 0:
        return 0
    centre = ta + offset_s
    lo = np.searchsorted(tb, centre - window_s / 2, side="left")
    hi = np.searchsorted(tb, centre + window_s / 2, side="right")
    return int(np.sum(hi - lo))


def herald_counts(stream: EventStream, window_s: float = 2e-9, offset_s: float = 0.0):
    """Heralded HBT counts ``(N_A, N_AB1, N_AC2, N_AB1C2)``.

    Every ``SignalA`` record opens a window centred ``offset_s`` later; it
    counts towards an arm if at least one record of that arm falls inside.
    """
    ta = stream.channel_times(Channel.SIGNAL_A)
    b1 = _matched(ta, stream.channel_times(Channel.IDLER_B1), window_s, offset_s)
    b2 = _matched(ta, stream.channel_times(Channel.IDLER_B2), window_s, offset_s)
    return int(ta.size), int(b1.sum()), int(b2.sum()), int((b1 & b2).sum())


def heralded_g2_zero(stream: EventStream, window_s: float = 2e-9, offset_s: float = 0.0):
    """Heralded ``g2(0) = N_ABC * N_A / (N_AB * N_AC)`` and its Poisson error.

    Returns ``(g2h, sigma)``.
    """
    n_a, n_ab, n_ac, n_abc = herald_counts(stream, window_s, offset_s)
    if n_a == 0:
        raise NoHeralds("stream has no SignalA records")
    if n_ab == 0 or n_ac == 0:
        raise NoCoincidences("no heralded detections in one HBT arm")
    g2 = n_abc * n_a / (n_ab * n_ac)
    # relative Poisson errors added in quadrature; a zero triple count
    # contributes one count of uncertainty
    rel = math.sqrt(1 / max(n_abc, 1) + 1 / n_a + 1 / n_ab + 1 / n_ac)
    sigma = g2 * rel if n_abc else n_a / (n_ab * n_ac)
    return g2, sigma


def assemble_jsi(runs, window_s: float = 2e-9, offset_s: float = 0.0) -> JSIMatrix:
    """Coincidence matrix from a band-pass scan ``[(m_signal, m_idler, stream), ...]``."""
    cells = {}
    for ms, mi, stream in runs:
        cells[(int(ms), int(mi))] = count_coincidences(stream, Channel.SIGNAL_A,
                                                       Channel.IDLER_B, window_s, offset_s)
    if not cells:
        raise IncompleteGrid("no runs supplied")
    n_half = max(max(abs(a), abs(b)) for a, b in cells)
    n = 2 * n_half + 1
    missing = [(a, b) for a in range(-n_half, n_half + 1) for b in range(-n_half, n_half + 1)
               if (a, b) not in cells]
    if missing:
        raise IncompleteGrid(f"missing bin pairs: {missing[:5]}")
    w = np.zeros((n, n))
    for (a, b), c in cells.items():
        w[a + n_half, b + n_half] = c
    return JSIMatrix(w)


def _detrend_exponential(tau: np.ndarray, y: np.ndarray) -> np.ndarray:
    pos = y > 0
    if pos.sum() < 2:
        return y
    slope, icpt = np.polyfit(tau[pos], np.log(y[pos]), 1)
    return y / np.exp(icpt + slope * tau)


def peak_positions(trace: CorrelationTrace, start: float | None = None,
                   stop: float | None = None, *, smooth_s: float = 0.0,
                   min_separation_s: float | None = None, detrend: bool = True) -> np.ndarray:
    """Sub-bin positions of local maxima of a trace inside ``[start, stop]``.

    The trace is optionally divided by a fitted exponential envelope and
    smoothed with a Gaussian of RMS ``smooth_s``; maxima are refined by a
    parabola through the three nearest samples.
    """
    tau = trace.tau + (0.5 * trace.tau_step_s if trace.kind is TraceKind.HISTOGRAM else 0.0)
    sel = np.ones(tau.size, dtype=bool)
    if start is not None:
        sel &= tau >= start
    if stop is not None:
        sel &= tau <= stop
    tau, y = tau[sel], np.asarray(trace.values, dtype=float)[sel]
    if y.size < 3:
        raise NumericalError("too few samples in the peak-search region")
    if detrend:
        y = _detrend_exponential(tau, y)
    if smooth_s > 0:
        y = gaussian_filter1d(y, smooth_s / trace.tau_step_s, mode="nearest")
    distance = None
    if min_separation_s:
        distance = max(1, int(min_separation_s / trace.tau_step_s))
    peaks, _ = find_peaks(y, distance=distance)
    peaks = peaks[(peaks > 0) & (peaks < y.size - 1)]
    y0, y1, y2 = y[peaks - 1], y[peaks], y[peaks + 1]
    curv = y0 - 2 * y1 + y2
    with np.errstate(divide="ignore", invalid="ignore"):
        shift = np.where(curv < 0, 0.5 * (y0 - y2) / curv, 0.0)
    return tau[peaks] + np.clip(shift, -0.5, 0.5) * trace.tau_step_s


def peak_spacing(trace: CorrelationTrace, start: float | None = None,
                 stop: float | None = None, *, method: str = "median", **kw) -> float:
    """Spacing of a periodic train of peaks, see :func:`peak_positions`.

    ``method="median"`` returns the median gap between successive peaks.
    ``method="slope"`` uses that median to number the peaks and returns the
    least-squares slope of position against peak number, which tolerates a
    missed or doubled peak.
    """
    if method not in ("median", "slope"):
        raise ValueError(f"unknown method {method!r}")
    peaks = peak_positions(trace, start, stop, **kw)
    if peaks.size < 2:
        raise NumericalError("fewer than two peaks found")
    guess = float(np.median(np.diff(peaks)))
    if method == "median":
        return guess
    index = np.round((peaks - peaks[0]) / guess)
    if np.unique(index).size < 2:
        return guess
    return float(np.polyfit(index, peaks, 1)[0])
