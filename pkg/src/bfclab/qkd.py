"""Time-bin key extraction and frequency-multiplexed key-rate accounting."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .core_model import CombParams, DetectorParams, FilterMode
from .errors import LengthMismatch, NoCoincidences
from .eventsim import Channel, EventStream, LinkParams, SourceParams, generate_pairs


@dataclass
class DiscretizedPairs:
    """Matched coincidences as (frame, bin-within-frame) symbols per party."""

    frame_a: np.ndarray
    bin_a: np.ndarray
    frame_b: np.ndarray
    bin_b: np.ndarray
    frame_bins: int

    def __len__(self):
        return self.bin_a.size

    @property
    def symbols(self):
        return self.bin_a, self.bin_b

    def agreement(self) -> float:
        return float(np.mean((self.frame_a == self.frame_b) & (self.bin_a == self.bin_b)))


def discretize(stream_a: EventStream, stream_b: EventStream, bin_s: float, frame_bins: int,
               window_s: float = 2e-9, *, ch_a=Channel.SIGNAL_A, ch_b=Channel.IDLER_B,
               offset_s: float = 0.0) -> DiscretizedPairs:
    """Pair each ``ch_a`` record with the nearest ``ch_b`` record and bin both.

    ``offset_s`` is the expected ``t_b - t_a``; party B's clock is shifted by
    it before binning. A ``ch_b`` record matches when it lies within
    ``window_s / 2`` of ``t_a + offset_s``; each one is used at most once.
    """
    if not bin_s > 0:
        raise ValueError("bin_s must be positive")
    if frame_bins < 2:
        raise ValueError("frame_bins must be >= 2")
    ta = stream_a.channel_times(ch_a)
    tb = stream_b.channel_times(ch_b) - offset_s
    if ta.size == 0 or tb.size == 0:
        raise NoCoincidences("a party has no records")
    j = np.clip(np.searchsorted(tb, ta), 1, tb.size - 1) if tb.size > 1 else np.zeros(ta.size, int)
    if tb.size > 1:
        left_closer = np.abs(ta - tb[j - 1]) <= np.abs(tb[j] - ta)
        j = np.where(left_closer, j - 1, j)
    ok = np.abs(tb[j] - ta) <= window_s / 2
    ia, jb = np.flatnonzero(ok), j[ok]
    _, first = np.unique(jb, return_index=True)
    keep = np.sort(first)
    ia, jb = ia[keep], jb[keep]
    if ia.size == 0:
        raise NoCoincidences("no coincidences within the window")
    ka = np.floor(ta[ia] / bin_s).astype(np.int64)
    kb = np.floor(tb[jb] / bin_s).astype(np.int64)
    return DiscretizedPairs(ka // frame_bins, ka % frame_bins, kb // frame_bins, kb % frame_bins,
                            int(frame_bins))


def pie_shannon(symbols_a, symbols_b) -> float:
    """Plug-in mutual information of paired symbols, in bits per coincidence."""
    a = np.asarray(symbols_a).ravel()
    b = np.asarray(symbols_b).ravel()
    if a.size != b.size:
        raise LengthMismatch(f"{a.size} symbols for A but {b.size} for B")
    if a.size == 0:
        raise ValueError("symbol sequences are empty")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    joint = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(joint, (ai, bi), 1.0)
    joint /= a.size
    pa = joint.sum(axis=1, keepdims=True)
    pb = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    mi = float(np.sum(joint[nz] * np.log2(joint[nz] / (pa @ pb)[nz])))
    return max(mi, 0.0)


HolevoBound = Callable[[float, int], float]


def linear_holevo_bound(visibility: float, alphabet_d: int) -> float:
    """Surrogate ``(1 - V) log2 d``; zero at V = 1, full at V = 0."""
    return (1.0 - visibility) * math.log2(alphabet_d)


@dataclass(frozen=True)
class TabulatedHolevoBound:
    """Eavesdropper information per coincidence, linearly interpolated in V.

    ``bits`` may be given either in absolute bits or, with ``per_log2d``, as a
    fraction of ``log2 d``.
    """

    visibilities: tuple
    bits: tuple
    per_log2d: bool = True

    def __post_init__(self):
        v = np.asarray(self.visibilities, dtype=float)
        if v.size < 2 or np.any(np.diff(v) <= 0):
            raise ValueError("visibilities must be strictly increasing with at least two points")
        if len(self.bits) != v.size:
            raise ValueError("visibilities and bits differ in length")

    def __call__(self, visibility: float, alphabet_d: int) -> float:
        val = float(np.interp(visibility, self.visibilities, self.bits))
        return val * math.log2(alphabet_d) if self.per_log2d else val


def holevo_bound(visibility: float, alphabet_d: int, bound: HolevoBound | None = None) -> float:
    """Upper bound on Eve's information per coincidence, clamped to ``[0, log2 d]``."""
    if not 0.0 <= visibility <= 1.0:
        raise ValueError("visibility must lie in [0, 1]")
    if alphabet_d < 2:
        raise ValueError("alphabet_d must be >= 2")
    chi = (bound or linear_holevo_bound)(visibility, alphabet_d)
    return min(max(float(chi), 0.0), math.log2(alphabet_d))


@dataclass(frozen=True)
class PairInput:
    pair: tuple
    coincidence_rate_hz: float
    pie_bits: float
    visibility: float


@dataclass(frozen=True)
class PairRates:
    cps: float
    pie_bits: float
    holevo_bits: float
    secure_pie_bits: float
    raw_bps: float
    secure_bps: float


@dataclass
class KeyRateReport:
    per_pair: dict = field(default_factory=dict)
    alphabet_d: int = 2

    @property
    def total_cps(self) -> float:
        return sum(r.cps for r in self.per_pair.values())

    @property
    def total_pie_bits(self) -> float:
        return sum(r.pie_bits for r in self.per_pair.values())

    @property
    def total_raw_bps(self) -> float:
        return sum(r.raw_bps for r in self.per_pair.values())

    @property
    def total_secure_bps(self) -> float:
        return sum(r.secure_bps for r in self.per_pair.values())

    def positive_pairs(self) -> list:
        return [p for p, r in self.per_pair.items() if r.secure_pie_bits > 0]


def key_rate_report(inputs, alphabet_d: int, bound: HolevoBound | None = None) -> KeyRateReport:
    """Raw and secure rates per frequency pair.

    ``secure_pie = pie - holevo`` is kept signed; only its positive part
    contributes to the secure rate.
    """
    report = KeyRateReport(alphabet_d=int(alphabet_d))
    for item in inputs:
        if item.pair in report.per_pair:
            raise ValueError(f"duplicate pair {item.pair}")
        if item.coincidence_rate_hz < 0 or item.pie_bits < 0:
            raise ValueError("coincidence rate and PIE must be >= 0")
        chi = holevo_bound(item.visibility, alphabet_d, bound)
        secure = item.pie_bits - chi
        raw = item.coincidence_rate_hz * item.pie_bits
        report.per_pair[item.pair] = PairRates(item.coincidence_rate_hz, item.pie_bits, chi,
                                               secure, raw,
                                               item.coincidence_rate_hz * max(0.0, secure))
    return report


def pair_input_from_stream(stream: EventStream, pair, visibility: float, bin_s: float,
                           frame_bins: int, window_s: float = 2e-9,
                           offset_s: float = 0.0) -> PairInput:
    """Coincidence rate and plug-in PIE of one simulated frequency pair."""
    disc = discretize(stream, stream, bin_s, frame_bins, window_s, offset_s=offset_s)
    rate = len(disc) / stream.duration_s
    return PairInput(tuple(pair), rate, pie_shannon(*disc.symbols), visibility)


@dataclass(frozen=True)
class FilteringComparison:
    singly: PairInput
    doubly: PairInput
    filter_transmission: float

    @property
    def coincidence_ratio(self) -> float:
        """Doubly- over singly-filtered coincidence rate."""
        return self.doubly.coincidence_rate_hz / self.singly.coincidence_rate_hz

    @property
    def raw_rate_ratio(self) -> float:
        raw_s = self.singly.coincidence_rate_hz * self.singly.pie_bits
        raw_d = self.doubly.coincidence_rate_hz * self.doubly.pie_bits
        return raw_d / raw_s


def filtering_comparison(comb: CombParams, source: SourceParams, det_s: DetectorParams,
                         det_i: DetectorParams, link: LinkParams | None = None, *,
                         bin_s: float = 50e-12, frame_bins: int = 16,
                         window_s: float = 2e-9, visibility: float = 1.0) -> FilteringComparison:
    """Simulate the same source singly and doubly filtered.

    Doubly filtering passes the idler through the cavity as well, so the idler
    arm picks up one more factor of ``comb.filter_transmission``.
    """
    link = link or LinkParams()
    out = {}
    for mode in (FilterMode.SINGLY, FilterMode.DOUBLY):
        stream = generate_pairs(comb.replace(filter_mode=mode), source, det_s, det_i, link)
        out[mode] = pair_input_from_stream(stream, (0, 0), visibility, bin_s, frame_bins,
                                           window_s)
    return FilteringComparison(out[FilterMode.SINGLY], out[FilterMode.DOUBLY],
                               comb.filter_transmission)


def report_rows(report: KeyRateReport) -> list:
    """Rows ``(pair, cps, pie, holevo, secure_pie, raw_bps, secure_bps)`` plus a total."""
    rows = []
    for pair, r in report.per_pair.items():
        rows.append((pair, r.cps, r.pie_bits, r.holevo_bits, r.secure_pie_bits,
                     r.raw_bps, r.secure_bps))
    rows.append(("TOTAL", report.total_cps, report.total_pie_bits,
                 sum(r.holevo_bits for r in report.per_pair.values()),
                 sum(r.secure_pie_bits for r in report.per_pair.values()),
                 report.total_raw_bps, report.total_secure_bps))
    return rows


def pairs_from_mapping(rates: Mapping, pies: Mapping, visibilities: Mapping) -> list:
    return [PairInput(tuple(p), float(rates[p]), float(pies[p]), float(visibilities[p]))
            for p in rates]
