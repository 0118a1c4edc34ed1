"""Franson-interference observables of the biphoton frequency comb.

The recurrence visibility at a Franson delay imbalance ``delta_tau`` is the
normalised magnitude of the Fourier transform of the biphoton spectral
density,

    V(delta_tau) = |int S(W) exp(i W delta_tau) dW| / int S(W) dW,

evaluated by adaptive quadrature. :func:`recurrence_visibility_time_domain`
computes the same quantity in the delay domain (phase-matching triangle
convolved with the comb coherence function) and serves as an independent
check.
"""
from __future__ import annotations

import functools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, optimize

from .core_model import CombParams, FilterMode
from .errors import BinOutOfRange, FitDivergence, InsufficientSamples, QuadratureError

BELL_THRESHOLD = 1.0 / math.sqrt(2.0)
#: B/S ratio implied by the bin-0 raw/subtracted pair 72.34 / 99.46.
DEFAULT_BACKGROUND_RATIO = 0.375
QUAD_RTOL = 1e-8
QUAD_LIMIT = 400


@dataclass
class VisibilityTable:
    bins: list
    v_raw: np.ndarray
    v_subtracted: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        self.bins = list(self.bins)
        self.v_raw = np.asarray(self.v_raw, dtype=float)
        self.v_subtracted = np.asarray(self.v_subtracted, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        n = len(self.bins)
        if not (len(self.v_raw) == len(self.v_subtracted) == len(self.sigma) == n):
            raise ValueError("table columns must have equal length")
        eps = 1e-12
        if np.any(self.v_raw < -eps) or np.any(self.v_raw > self.v_subtracted + eps) \
                or np.any(self.v_subtracted > 1 + eps):
            raise ValueError("need 0 <= v_raw <= v_subtracted <= 1 in every bin")
        if np.any(self.sigma < 0):
            raise ValueError("sigma must be >= 0")

    def __len__(self):
        return len(self.bins)


@dataclass
class FringeCurve:
    """Coincidence counts versus interferometer phase.

    ``background`` is the flat accidental floor expressed as a fraction of
    the signal scale, B/S.
    """

    phase_grid: np.ndarray
    counts: np.ndarray
    true_v: float | None = None
    background: float = 0.0

    def __post_init__(self):
        self.phase_grid = np.asarray(self.phase_grid, dtype=float)
        self.counts = np.asarray(self.counts, dtype=float)
        if self.phase_grid.shape != self.counts.shape:
            raise ValueError("phase_grid and counts must have the same shape")
        if np.any(self.counts < 0):
            raise ValueError("counts must be >= 0")
        if self.background < 0:
            raise ValueError("background must be >= 0")


# -- spectral quadrature -----------------------------------------------------

def _quad_pieces(func, edges, delta_tau):
    """Sum of ``int func(W) cos(W delta_tau)`` over consecutive edges."""
    total = 0.0
    err = 0.0
    # full_output returns convergence messages instead of warning, which is
    # thread-safe; the accumulated error estimate is checked by the caller
    for a, b in zip(edges[:-1], edges[1:]):
        if delta_tau == 0:
            r, e = integrate.quad(func, a, b, epsabs=0, epsrel=QUAD_RTOL * 0.1, limit=QUAD_LIMIT,
                                  full_output=1)[:2]
        else:
            r, e = integrate.quad(func, a, b, weight="cos", wvar=delta_tau, epsabs=0,
                                  epsrel=QUAD_RTOL * 0.1, limit=QUAD_LIMIT, full_output=1)[:2]
        total += r
        err += e
    return total, err


def _comb_edges(comb: CombParams) -> tuple[list[float], float]:
    """Non-negative breakpoints around the comb lines and the far cut-off."""
    dw, dO, N = comb.delta_omega, comb.delta_Omega, comb.n_half
    pts = {0.0}
    for m in range(-N, N + 1):
        for k in (-40.0, -4.0, 0.0, 4.0, 40.0):
            p = m * dO + k * dw
            if p > 0:
                pts.add(p)
    for m in range(N + 1):
        pts.add((m + 0.5) * dO)
    inner = sorted(pts)
    # tail beyond the last line falls like sinc^2 / W^2; 12 decades of margin
    w_sum = float(comb.line_weights().sum())
    x_cut = (comb.n_lines * dw / (3 * math.pi * comb.sinc_scale ** 2 * w_sum * 1e-12)) ** (1 / 3)
    far = max(x_cut, 4 * inner[-1])
    return inner + list(np.geomspace(inner[-1] * 2, far, 6)), far


def scalar_density(comb: CombParams):
    """Pure-float twin of :func:`spectral_density` for use inside ``quad``."""
    a = comb.sinc_scale
    dw2 = comb.delta_omega ** 2
    centers = [m * comb.delta_Omega for m in comb.line_indices]
    doubly = comb.filter_mode is FilterMode.DOUBLY
    peak = 0.0
    for c in centers:
        ell = dw2 / (dw2 + c * c)
        peak += ell * ell if doubly else ell
    sin = math.sin

    def density(w):
        x = a * w
        env = 1.0 if x == 0 else (sin(x) / x) ** 2
        tot = 0.0
        for c in centers:
            d = w - c
            ell = dw2 / (dw2 + d * d)
            tot += ell * ell if doubly else ell
        return env * tot / peak

    return density


@functools.lru_cache(maxsize=64)
def _comb_setup(comb: CombParams):
    edges, _ = _comb_edges(comb)
    density = scalar_density(comb)
    norm, err = _quad_pieces(density, edges, 0.0)
    return edges, density, norm, err


def recurrence_visibility(comb: CombParams, delta_tau: float) -> float:
    """Franson visibility at delay imbalance ``delta_tau`` (seconds)."""
    delta_tau = abs(float(delta_tau))
    if comb.filter_mode is FilterMode.UNFILTERED:
        # transform of sinc^2 is a triangle of half-width 2A
        return max(0.0, 1.0 - delta_tau / (2 * comb.sinc_scale))
    edges, density, norm, norm_err = _comb_setup(comb)
    if delta_tau == 0:
        return 1.0
    num, err = _quad_pieces(density, edges, delta_tau)
    if err + norm_err > 10 * QUAD_RTOL * norm:
        raise QuadratureError(
            f"quadrature error {err / norm:.2e} above tolerance at delta_tau={delta_tau:.3e}")
    return min(1.0, abs(num) / norm)


def recurrence_visibility_time_domain(comb: CombParams, delta_tau: float) -> float:
    """Delay-domain evaluation of :func:`recurrence_visibility`.

    The transform of ``sinc^2(A W)`` is a triangle of half-width ``2A`` and
    the transform of the Lorentzian comb is ``exp(-dw|s|) sum cos(m dW s)``
    (``(1 + dw|s|) exp(-dw|s|)`` per line when doubly filtered), so the
    visibility is their convolution evaluated at ``delta_tau``, normalised at
    zero delay.
    """
    a2 = 2 * comb.sinc_scale
    if comb.filter_mode is FilterMode.UNFILTERED:
        return max(0.0, 1.0 - abs(delta_tau) / a2)
    dw, dO = comb.delta_omega, comb.delta_Omega
    ms = comb.line_indices
    doubly = comb.filter_mode is FilterMode.DOUBLY

    freqs = [float(m * dO) for m in ms]
    cos, exp = math.cos, math.exp

    def coherence(s):
        s = abs(s)
        env = exp(-dw * s) * ((1 + dw * s) if doubly else 1.0)
        return env * sum(cos(f * s) for f in freqs)

    def conv(d):
        f = lambda t: (1 - abs(t) / a2) * coherence(d - t)
        pts = [0.0] + ([d] if -a2 < d < a2 else [])
        r = integrate.quad(f, -a2, a2, points=pts, epsabs=0, epsrel=1e-12, limit=400,
                           full_output=1)[0]
        return r

    return abs(conv(float(delta_tau))) / conv(0.0)


def _map(func, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(func, items))
    return [func(x) for x in items]


def recurrence_table(comb: CombParams, n_bins: int, *,
                     background_ratio: float = DEFAULT_BACKGROUND_RATIO,
                     mode: str = "quadrature", workers: int | None = None) -> VisibilityTable:
    """Theoretical visibilities at integer multiples of the round-trip time.

    ``mode="quadrature"`` uses :func:`recurrence_visibility`;
    ``mode="envelope"`` uses the narrow-line recurrence envelope
    ``exp(-dw n dT)``. Raw visibilities follow the flat-floor background
    model ``V_raw = V / (1 + B/S)``.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if background_ratio < 0:
        raise ValueError("background_ratio must be >= 0")
    n = np.arange(n_bins)
    if mode == "quadrature":
        v = np.array(_map(lambda k: recurrence_visibility(comb, k * comb.round_trip_time),
                          list(n), workers))
    elif mode == "envelope":
        v = np.exp(-comb.delta_omega * comb.round_trip_time * n)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return VisibilityTable(list(n), v / (1 + background_ratio), v, np.zeros(n_bins))


@dataclass
class DecayFit:
    linewidth_fwhm_hz: float
    decay_per_bin: float
    predicted: np.ndarray
    residuals: np.ndarray = field(repr=False)

    @property
    def max_abs_deviation(self) -> float:
        return float(np.max(np.abs(self.residuals)))


def fit_recurrence_decay(visibilities: Sequence[float], fsr_hz: float) -> DecayFit:
    """Least-squares effective linewidth from recurrence visibilities.

    ``visibilities[n]`` is taken at ``n`` round trips and modelled as
    ``exp(-pi * linewidth * n / fsr)``. Values may be fractions or percent;
    the fit is done on whatever scale is given.
    """
    v = np.asarray(visibilities, dtype=float)
    scale = v[0] if v[0] > 0 else 1.0
    n = np.arange(len(v))

    def model(gamma):
        return scale * np.exp(-gamma * n)

    res = optimize.minimize_scalar(lambda g: float(np.sum((model(g) - v) ** 2)),
                                   bounds=(0.0, 20.0), method="bounded",
                                   options={"xatol": 1e-12})
    gamma = float(res.x)
    pred = model(gamma)
    return DecayFit(gamma * fsr_hz / math.pi, math.exp(-gamma), pred, pred - v)


def frequency_pair_visibility(comb: CombParams, m_signal: int, m_idler: int,
                              bpf_fwhm_hz: float, delta_tau: float = 0.0) -> float:
    """Franson visibility after selecting one signal and one idler comb line.

    Both photons pass Gaussian band-pass filters of FWHM ``bpf_fwhm_hz``
    centred on their lines. Energy conservation pairs signal line ``m`` with
    idler line ``-m``; any other pairing returns exactly zero.
    """
    N = comb.n_half
    for m in (m_signal, m_idler):
        if abs(m) > N:
            raise BinOutOfRange(f"bin {m} outside [-{N}, {N}]")
    if not 0 < bpf_fwhm_hz < comb.fsr_hz:
        raise ValueError("bpf_fwhm_hz must be positive and narrower than the FSR")
    if m_idler != -m_signal:
        return 0.0
    center = m_signal * comb.delta_Omega
    sigma = 2 * math.pi * bpf_fwhm_hz / (2 * math.sqrt(2 * math.log(2)))

    density = scalar_density(comb)

    def reduced(w):
        # signal and idler filters both select detuning +m dW
        return density(w) * math.exp(-((w - center) / sigma) ** 2)

    dw = comb.delta_omega
    pts = sorted({center + k * dw for k in (-40, -4, 0, 4, 40)}
                 | {center + k * sigma for k in (-8, -3, 3, 8)})
    norm, _ = _quad_pieces(reduced, pts, 0.0)
    if delta_tau == 0:
        return 1.0
    # shift to baseband so the oscillatory weight only carries the envelope
    cos_part, _ = _quad_pieces(lambda w: reduced(w + center), [p - center for p in pts], delta_tau)
    sin_part = sum(integrate.quad(lambda w: reduced(w + center), a - center, b - center,
                                  weight="sin", wvar=delta_tau, epsabs=0,
                                  epsrel=QUAD_RTOL * 0.1, limit=QUAD_LIMIT, full_output=1)[0]
                   for a, b in zip(pts[:-1], pts[1:]))
    return min(1.0, math.hypot(cos_part, sin_part) / norm)


# -- fringes -----------------------------------------------------------------

def synthesize_fringe(true_v: float, background_ratio: float, phase_grid, scale: float,
                      *, phase_offset: float = 0.0, seed: int | None = None) -> FringeCurve:
    """Fringe ``scale*(1 + V cos(phi + phi0)) + scale*B/S``, Poisson-noised if seeded."""
    if not 0 <= true_v <= 1:
        raise ValueError("true_v must lie in [0, 1]")
    if background_ratio < 0:
        raise ValueError("background_ratio must be >= 0")
    phase = np.asarray(phase_grid, dtype=float)
    counts = scale * (1 + true_v * np.cos(phase + phase_offset)) + scale * background_ratio
    if seed is not None:
        counts = np.random.default_rng(seed).poisson(counts).astype(float)
    return FringeCurve(phase, counts, true_v, background_ratio)


def fit_visibility(fringe: FringeCurve, subtract_background: bool = False, *,
                   max_reduced_chi2: float = 25.0) -> tuple[float, float]:
    """Fit ``C = S(1 + V cos(phi + phi0)) + B`` and return ``(V, sigma_V)``.

    The model is linear in ``(offset, a cos, a sin)``; the fit is weighted by
    Poisson variances and the covariance is scaled by the reduced chi-square.
    With ``subtract_background`` the flat floor ``B = (B/S) * S`` is removed
    before forming ``(Cmax - Cmin) / (Cmax + Cmin - 2B)``.
    """
    phi, c = fringe.phase_grid, fringe.counts
    if len(phi) < 8:
        raise InsufficientSamples(f"need >= 8 phase samples, got {len(phi)}")
    step = np.median(np.diff(np.sort(phi))) if len(phi) > 1 else 0.0
    if (phi.max() - phi.min()) + step < 2 * math.pi * (1 - 1e-9):
        raise InsufficientSamples("phase samples must span at least 2*pi")
    X = np.column_stack([np.ones_like(phi), np.cos(phi), np.sin(phi)])
    w = 1.0 / np.sqrt(np.maximum(c, 1.0))
    coef, *_ = np.linalg.lstsq(X * w[:, None], c * w, rcond=None)
    a0, a1, a2 = coef
    resid = (c - X @ coef) * w
    dof = max(len(phi) - 3, 1)
    chi2_red = float(resid @ resid) / dof
    if chi2_red > max_reduced_chi2:
        raise FitDivergence(f"reduced chi-square {chi2_red:.3g} exceeds {max_reduced_chi2}")
    cov = np.linalg.inv((X * w[:, None] ** 2).T @ X) * chi2_red
    factor = (1 + fringe.background) if subtract_background else 1.0
    if a0 <= 0:
        raise FitDivergence("fitted mean count is not positive")
    amp = math.hypot(a1, a2)
    v = factor * amp / a0
    if amp > 0:
        grad = factor * np.array([-amp / a0 ** 2, a1 / (amp * a0), a2 / (amp * a0)])
        sigma = math.sqrt(max(float(grad @ cov @ grad), 0.0))
    else:
        sigma = factor * math.sqrt(max(cov[1, 1] + cov[2, 2], 0.0)) / a0
    return min(max(v, 0.0), 1.0), sigma


def bell_violation(v: float) -> bool:
    """True when a sinusoidal fringe visibility beats the CHSH bound 1/sqrt(2)."""
    if not 0 <= v <= 1:
        raise ValueError("visibility must lie in [0, 1]")
    return v > BELL_THRESHOLD
