"""Seeded Monte Carlo generation of detection-event streams.

Seed contract
-------------
The simulated duration is cut into consecutive blocks of ``block_s`` seconds.
Block ``b`` draws all of its randomness from
``SeedSequence(seed, spawn_key=(b,))`` in a fixed order (pair count, emission
times, delays, signal survival, idler survival, signal jitter, idler jitter,
signal darks, idler darks). Blocks are independent, so they may be generated
by any number of workers; the merged, sorted stream only depends on
``(params, seed, block_s)``.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .core_model import CombParams, DetectorParams, FilterMode, _wavefunction_values, delay_grid
from .errors import NoIdlerRecords, UnknownChannel

DEFAULT_BLOCK_S = 1.0
DEFAULT_WINDOW_S = 2e-9
DARK = -1


class Channel(enum.IntEnum):
    SIGNAL_A = 0
    IDLER_B = 1
    IDLER_B1 = 2
    IDLER_B2 = 3

    @property
    def label(self) -> str:
        return _LABELS[self]

    @classmethod
    def parse(cls, value) -> "Channel":
        if isinstance(value, Channel):
            return value
        if isinstance(value, str):
            for ch, name in _LABELS.items():
                if value in (name, ch.name):
                    return ch
        elif isinstance(value, (int, np.integer)) and int(value) in cls._value2member_map_:
            return cls(int(value))
        raise UnknownChannel(f"unknown channel {value!r}")


_LABELS = {Channel.SIGNAL_A: "SignalA", Channel.IDLER_B: "IdlerB",
           Channel.IDLER_B1: "IdlerB1", Channel.IDLER_B2: "IdlerB2"}


@dataclass(frozen=True)
class SourceParams:
    """Pair source. ``mu_per_window`` is the mean pair number per coincidence
    window, ``pair_rate_hz * window_s``; use :meth:`from_mu` to set it."""

    pair_rate_hz: float
    duration_s: float
    seed: int = 0
    window_s: float = DEFAULT_WINDOW_S

    def __post_init__(self):
        if self.pair_rate_hz < 0:
            raise ValueError("pair_rate_hz must be >= 0")
        if not self.duration_s > 0:
            raise ValueError("duration_s must be positive")
        if not self.window_s > 0:
            raise ValueError("window_s must be positive")

    @property
    def mu_per_window(self) -> float:
        return self.pair_rate_hz * self.window_s

    @classmethod
    def from_mu(cls, mu_per_window: float, duration_s: float, seed: int = 0,
                window_s: float = DEFAULT_WINDOW_S) -> "SourceParams":
        if mu_per_window < 0:
            raise ValueError("mu_per_window must be >= 0")
        return cls(mu_per_window / window_s, duration_s, seed, window_s)


@dataclass(frozen=True)
class LinkParams:
    length_km: float = 0.0
    loss_db: float = 0.0
    delay_s: float = 0.0

    def __post_init__(self):
        if self.length_km < 0 or self.loss_db < 0 or self.delay_s < 0:
            raise ValueError("link length, loss and delay must be >= 0")

    @property
    def transmission(self) -> float:
        return 10.0 ** (-self.loss_db / 10.0)


@dataclass
class EventStream:
    """Time-sorted detection records.

    ``truth`` holds the emitting pair id, or ``DARK`` (-1) for dark counts.
    """

    times: np.ndarray
    channels: np.ndarray
    truth: np.ndarray
    seed: int | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.channels = np.asarray(self.channels, dtype=np.int8)
        self.truth = np.asarray(self.truth, dtype=np.int64)
        if not (self.times.shape == self.channels.shape == self.truth.shape):
            raise ValueError("record columns must have equal length")
        if self.times.size and np.any(np.diff(self.times) < 0):
            raise ValueError("timestamps must be nondecreasing")

    @classmethod
    def from_unsorted(cls, times, channels, truth, **kw) -> "EventStream":
        times = np.asarray(times, dtype=np.float64)
        channels = np.asarray(channels, dtype=np.int8)
        truth = np.asarray(truth, dtype=np.int64)
        order = np.lexsort((truth, channels, times))
        return cls(times[order], channels[order], truth[order], **kw)

    @classmethod
    def empty(cls, **kw) -> "EventStream":
        return cls(np.empty(0), np.empty(0, np.int8), np.empty(0, np.int64), **kw)

    def __len__(self):
        return self.times.size

    def channel_times(self, channel) -> np.ndarray:
        return self.times[self.channels == Channel.parse(channel)]

    def count(self, channel) -> int:
        return int(np.count_nonzero(self.channels == Channel.parse(channel)))

    def has_channel(self, channel) -> bool:
        return self.count(channel) > 0

    def identical(self, other: "EventStream") -> bool:
        return (np.array_equal(self.times, other.times)
                and np.array_equal(self.channels, other.channels)
                and np.array_equal(self.truth, other.truth))

    @property
    def duration_s(self) -> float:
        d = self.params.get("duration_s")
        if d:
            return float(d)
        return float(self.times[-1] - self.times[0]) if len(self) > 1 else 0.0


class DelaySampler:
    """Inverse-CDF sampler of the signal-idler delay ``tau`` from ``|psi|^2``.

    The density is tabulated on the model delay grid (default step ``dT/64``,
    truncated at ``20/dw``) and taken as piecewise linear between nodes, so
    the CDF is piecewise quadratic and is inverted exactly.
    """

    def __init__(self, comb: CombParams, step: float | None = None):
        if comb.filter_mode is FilterMode.UNFILTERED:
            # nodes on the rectangle edges keep the interpolant exactly flat
            a = comb.sinc_scale
            h = comb.default_tau_step if step is None else float(step)
            self.grid = np.linspace(-a, a, 2 * math.ceil(a / h) + 1)
        else:
            self.grid = delay_grid(comb, step)
        self.step = float(self.grid[1] - self.grid[0])
        self.density = _wavefunction_values(comb, self.grid) ** 2
        cell = 0.5 * (self.density[1:] + self.density[:-1]) * self.step
        self.cdf_nodes = np.concatenate([[0.0], np.cumsum(cell)])
        self.total = float(self.cdf_nodes[-1])

    def cdf(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        x = np.clip(tau, self.grid[0], self.grid[-1])
        k = np.clip(((x - self.grid[0]) / self.step).astype(np.int64), 0, len(self.grid) - 2)
        u = x - self.grid[k]
        d0, d1 = self.density[k], self.density[k + 1]
        val = self.cdf_nodes[k] + d0 * u + (d1 - d0) * u * u / (2 * self.step)
        return val / self.total

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        target = rng.random(n) * self.total
        k = np.searchsorted(self.cdf_nodes, target, side="right") - 1
        k = np.clip(k, 0, len(self.grid) - 2)
        r = target - self.cdf_nodes[k]
        d0 = self.density[k]
        slope = (self.density[k + 1] - d0) / self.step
        disc = np.sqrt(np.maximum(d0 * d0 + 2 * slope * r, 0.0))
        denom = d0 + disc
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.where(denom > 0, 2 * r / denom, 0.0)
        return self.grid[k] + np.clip(u, 0.0, self.step)


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(block,)))


def _simulate_block(b, t0, length, rate, sampler, eta_s, eta_i, det_s, det_i, delay, seed):
    rng = _block_rng(seed, b)
    n = int(rng.poisson(rate * length))
    emit = np.sort(t0 + rng.random(n) * length)
    tau = sampler.sample(rng, n) if n else np.empty(0)
    keep_s = rng.random(n) < eta_s
    keep_i = rng.random(n) < eta_i
    signal = emit + delay + tau + rng.normal(0.0, 1.0, n) * det_s.jitter_rms_s
    idler = emit + delay + rng.normal(0.0, 1.0, n) * det_i.jitter_rms_s
    nd_s = int(rng.poisson(det_s.dark_rate_hz * length))
    dark_s = t0 + rng.random(nd_s) * length
    nd_i = int(rng.poisson(det_i.dark_rate_hz * length))
    dark_i = t0 + rng.random(nd_i) * length
    ids = np.arange(n, dtype=np.int64)
    times = np.concatenate([signal[keep_s], idler[keep_i], dark_s, dark_i])
    chans = np.concatenate([np.full(keep_s.sum(), Channel.SIGNAL_A, np.int8),
                            np.full(keep_i.sum(), Channel.IDLER_B, np.int8),
                            np.full(nd_s, Channel.SIGNAL_A, np.int8),
                            np.full(nd_i, Channel.IDLER_B, np.int8)])
    local = np.concatenate([ids[keep_s], ids[keep_i],
                            np.full(nd_s + nd_i, DARK, np.int64)])
    return n, times, chans, local


def generate_pairs(comb: CombParams, source: SourceParams, det_s: DetectorParams,
                   det_i: DetectorParams, link: LinkParams | None = None, *,
                   block_s: float = DEFAULT_BLOCK_S, workers: int | None = None,
                   sampler: DelaySampler | None = None) -> EventStream:
    """Simulate a stream of signal (``SignalA``) and idler (``IdlerB``) detections.

    Pairs are emitted as a Poisson process. The idler reaches its detector
    ``link.delay_s`` after emission and the signal a further ``tau`` later,
    with ``tau`` drawn from ``|psi(tau)|^2``. The signal survives with
    probability ``efficiency * filter_transmission``; the idler with
    ``efficiency * link transmission`` (times ``filter_transmission`` when
    doubly filtered). Surviving times get Gaussian detector jitter, and dark
    counts arrive uniformly on each channel.
    """
    link = link or LinkParams()
    sampler = sampler or DelaySampler(comb)
    eta_s = det_s.efficiency * comb.filter_transmission
    eta_i = det_i.efficiency * link.transmission
    if comb.filter_mode is FilterMode.DOUBLY:
        eta_i *= comb.filter_transmission
    n_blocks = max(1, math.ceil(source.duration_s / block_s - 1e-12))
    spans = [(b, b * block_s, min(block_s, source.duration_s - b * block_s))
             for b in range(n_blocks)]

    def run(span):
        b, t0, length = span
        return _simulate_block(b, t0, length, source.pair_rate_hz, sampler, eta_s, eta_i,
                               det_s, det_i, link.delay_s, source.seed)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(run, spans))
    else:
        parts = [run(s) for s in spans]
    offset = 0
    truth = []
    for n, _, _, local in parts:
        truth.append(np.where(local >= 0, local + offset, DARK))
        offset += n
    params = {"comb": _snapshot(comb), "source": asdict(source), "det_s": asdict(det_s),
              "det_i": asdict(det_i), "link": asdict(link), "block_s": block_s,
              "duration_s": source.duration_s, "pairs_emitted": offset}
    if not parts:
        return EventStream.empty(seed=source.seed, params=params)
    return EventStream.from_unsorted(np.concatenate([p[1] for p in parts]),
                                     np.concatenate([p[2] for p in parts]),
                                     np.concatenate(truth), seed=source.seed, params=params)


def _snapshot(comb: CombParams) -> dict:
    d = asdict(comb)
    d["filter_mode"] = comb.filter_mode.value
    return d


def hbt_split(stream: EventStream, split_ratio: float, seed: int) -> EventStream:
    """Route every ``IdlerB`` record to ``IdlerB1`` (probability ``split_ratio``)
    or ``IdlerB2``, as behind a beam splitter."""
    if not 0 < split_ratio < 1:
        raise ValueError("split_ratio must lie strictly between 0 and 1")
    idx = np.flatnonzero(stream.channels == Channel.IDLER_B)
    if idx.size == 0:
        raise NoIdlerRecords("stream has no IdlerB records")
    rng = np.random.default_rng(seed)
    to_b1 = rng.random(idx.size) < split_ratio
    chans = stream.channels.copy()
    chans[idx] = np.where(to_b1, Channel.IDLER_B1, Channel.IDLER_B2)
    params = dict(stream.params, hbt_split_ratio=split_ratio, hbt_seed=seed)
    return EventStream.from_unsorted(stream.times, chans, stream.truth,
                                     seed=stream.seed, params=params)


def multi_pair_emission(mu_per_window: float, n_windows: int, seed: int) -> np.ndarray:
    """Independent Poisson pair counts for ``n_windows`` coincidence windows."""
    if mu_per_window < 0:
        raise ValueError("mu_per_window must be >= 0")
    return np.random.default_rng(seed).poisson(mu_per_window, int(n_windows))


def run_seed(seed: int, index: int) -> int:
    """Deterministic child seed for the ``index``-th run of a scan."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(1_000_003, index))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def generate_filter_scan(comb: CombParams, source: SourceParams, det_s: DetectorParams,
                         det_i: DetectorParams, link: LinkParams | None = None, *,
                         cross_talk: float = 0.0, block_s: float = DEFAULT_BLOCK_S):
    """One stream per (signal bin, idler bin) band-pass setting.

    The pair rate of each run is ``source.pair_rate_hz`` scaled by the ideal
    JSI weight of that bin pair; the delay statistics are those of a single
    comb line. Returns ``[(m_signal, m_idler, stream), ...]``.
    """
    from .schmidt import ideal_jsi

    jsi = ideal_jsi(comb, cross_talk)
    single = comb.replace(n_lines=1)
    sampler = DelaySampler(single)
    runs = []
    N = comb.n_half
    for i, ms in enumerate(range(-N, N + 1)):
        for j, mi in enumerate(range(-N, N + 1)):
            k = i * comb.n_lines + j
            src = SourceParams(source.pair_rate_hz * jsi[ms, mi], source.duration_s,
                               run_seed(source.seed, k), source.window_s)
            runs.append((ms, mi, generate_pairs(single, src, det_s, det_i, link,
                                                block_s=block_s, sampler=sampler)))
    return runs
