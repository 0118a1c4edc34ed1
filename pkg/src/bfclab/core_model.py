"""Closed-form biphoton frequency comb model.

Internal units are SI: seconds for delays, rad/s for angular detunings.
Configuration values given in Hz are converted once, here:

* comb spacing        ``delta_Omega = 2*pi*fsr_hz``
* half linewidth      ``delta_omega = pi*linewidth_fwhm_hz``
* phase-matching      ``A = 1.39 / (pi*phase_matching_fwhm_hz)`` so that
  ``sinc(A*Omega)**2`` has a FWHM of ``phase_matching_fwhm_hz`` in Hz.

``sinc`` is the unnormalised ``sin(x)/x`` throughout.
"""
from __future__ import annotations

import dataclasses
import enum
import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, signal

from .errors import ResolutionError

#: Samples per cavity round trip on the default delay grid.
GRID_SAMPLES_PER_PERIOD = 64
#: Temporal truncation in units of the cavity decay time ``1/delta_omega``.
TRUNCATION_DECAYS = 20.0
#: Gaussian jitter kernels are cut at this many standard deviations.
KERNEL_HALF_WIDTH_SIGMAS = 6.0
#: FWHM of a Gaussian divided by its RMS width.
FWHM_PER_RMS = 2.0 * math.sqrt(2.0 * math.log(2.0))


class FilterMode(str, enum.Enum):
    SINGLY = "singly"
    DOUBLY = "doubly"
    UNFILTERED = "unfiltered"


class TraceKind(str, enum.Enum):
    AMPLITUDE = "amplitude"
    INTENSITY = "intensity"
    HISTOGRAM = "histogram"
    FRINGE = "fringe"


def sinc(x):
    """Unnormalised sinc, ``sin(x)/x``."""
    return np.sinc(np.asarray(x, dtype=float) / np.pi)


@dataclass(frozen=True)
class CombParams:
    """Physical scenario of a filtered SPDC biphoton frequency comb.

    ``filter_transmission`` is the one-pass peak transmission of the cavity.
    The signal always passes the cavity; in doubly-filtered mode the idler
    does as well.
    """

    fsr_hz: float
    linewidth_fwhm_hz: float
    phase_matching_fwhm_hz: float
    n_lines: int = 5
    center_wavelength_nm: float = 1316.0
    filter_mode: FilterMode = FilterMode.SINGLY
    filter_transmission: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "filter_mode", FilterMode(self.filter_mode))
        if not (self.fsr_hz > self.linewidth_fwhm_hz > 0):
            raise ValueError(
                f"need fsr_hz > linewidth_fwhm_hz > 0, got {self.fsr_hz!r}, "
                f"{self.linewidth_fwhm_hz!r}")
        if int(self.n_lines) != self.n_lines or self.n_lines < 1 or self.n_lines % 2 == 0:
            raise ValueError(f"n_lines must be an odd integer >= 1, got {self.n_lines!r}")
        object.__setattr__(self, "n_lines", int(self.n_lines))
        if not self.phase_matching_fwhm_hz > 0:
            raise ValueError("phase_matching_fwhm_hz must be positive")
        if not self.center_wavelength_nm > 0:
            raise ValueError("center_wavelength_nm must be positive")
        if not 0 < self.filter_transmission <= 1:
            raise ValueError("filter_transmission must lie in (0, 1]")

    @classmethod
    def nominal(cls, **changes) -> "CombParams":
        """The 45.32 GHz / 1.56 GHz / 245 GHz five-line singly-filtered comb."""
        base = cls(fsr_hz=45.32e9, linewidth_fwhm_hz=1.56e9,
                   phase_matching_fwhm_hz=245e9, n_lines=5)
        return dataclasses.replace(base, **changes) if changes else base

    def replace(self, **changes) -> "CombParams":
        return dataclasses.replace(self, **changes)

    @property
    def n_half(self) -> int:
        return (self.n_lines - 1) // 2

    @property
    def line_indices(self) -> np.ndarray:
        return np.arange(-self.n_half, self.n_half + 1)

    @property
    def delta_Omega(self) -> float:
        """Comb line spacing in rad/s."""
        return 2.0 * math.pi * self.fsr_hz

    @property
    def delta_omega(self) -> float:
        """Cavity half linewidth in rad/s."""
        return math.pi * self.linewidth_fwhm_hz

    @property
    def sinc_scale(self) -> float:
        """Phase-matching parameter ``A`` in seconds."""
        return 1.39 / (math.pi * self.phase_matching_fwhm_hz)

    @property
    def round_trip_time(self) -> float:
        return 1.0 / self.fsr_hz

    @property
    def tau_max(self) -> float:
        """Truncation delay ``20/delta_omega``."""
        return TRUNCATION_DECAYS / self.delta_omega

    @property
    def default_tau_step(self) -> float:
        return self.round_trip_time / GRID_SAMPLES_PER_PERIOD

    def line_amplitudes(self) -> np.ndarray:
        """``sinc(A m dOmega)`` for m = -N..N."""
        return sinc(self.sinc_scale * self.line_indices * self.delta_Omega)

    def line_weights(self) -> np.ndarray:
        """Phase-matching weight ``sinc^2(A m dOmega)`` of each comb line."""
        return self.line_amplitudes() ** 2


@dataclass(frozen=True)
class DetectorParams:
    jitter_rms_s: float = 0.0
    efficiency: float = 1.0
    dark_rate_hz: float = 0.0

    def __post_init__(self):
        if self.jitter_rms_s < 0:
            raise ValueError("jitter_rms_s must be >= 0")
        if not 0 <= self.efficiency <= 1:
            raise ValueError("efficiency must lie in [0, 1]")
        if self.dark_rate_hz < 0:
            raise ValueError("dark_rate_hz must be >= 0")


@dataclass
class CorrelationTrace:
    """A function of relative delay sampled on a uniform grid."""

    tau_start_s: float
    tau_step_s: float
    values: np.ndarray
    kind: TraceKind = TraceKind.INTENSITY
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kind = TraceKind(self.kind)
        self.values = np.asarray(self.values)
        if not self.tau_step_s > 0:
            raise ValueError("tau_step_s must be positive")
        if self.kind in (TraceKind.INTENSITY, TraceKind.HISTOGRAM):
            if np.iscomplexobj(self.values) or np.any(self.values < 0):
                raise ValueError(f"{self.kind.value} traces must be real and nonnegative")

    @property
    def tau(self) -> np.ndarray:
        return self.tau_start_s + self.tau_step_s * np.arange(len(self.values))

    def __len__(self):
        return len(self.values)

    def integral(self) -> float:
        """Riemann sum of the values over the grid."""
        return float(np.sum(self.values) * self.tau_step_s)

    def normalized(self) -> "CorrelationTrace":
        peak = np.max(np.abs(self.values))
        vals = self.values / peak if peak > 0 else self.values
        return CorrelationTrace(self.tau_start_s, self.tau_step_s, vals, self.kind, dict(self.meta))


def _grid_params(tau_grid) -> tuple[np.ndarray, float]:
    tau = np.asarray(tau_grid, dtype=float)
    if tau.ndim != 1 or tau.size < 2:
        raise ValueError("tau_grid must be a 1-D array with at least two points")
    steps = np.diff(tau)
    step = float(np.mean(steps))
    if step <= 0 or not np.allclose(steps, step, rtol=1e-6, atol=0):
        raise ValueError("tau_grid must be uniform and increasing")
    return tau, step


def delay_grid(comb: CombParams, step: float | None = None,
               margin_s: float = 0.0) -> np.ndarray:
    """Uniform delay grid covering the truncated support of ``|psi|^2``.

    The grid contains ``tau = 0`` exactly and extends ``margin_s`` beyond the
    support on both sides (use a margin of several jitter widths before
    convolving).
    """
    step = comb.default_tau_step if step is None else float(step)
    if comb.filter_mode is FilterMode.SINGLY:
        lo, hi = 0.0, comb.tau_max
    elif comb.filter_mode is FilterMode.DOUBLY:
        lo, hi = -comb.tau_max, comb.tau_max
    else:
        lo, hi = -comb.sinc_scale, comb.sinc_scale
    k_lo = math.floor((lo - margin_s) / step)
    k_hi = math.ceil((hi + margin_s) / step)
    return step * np.arange(k_lo, k_hi + 1)


def spectral_density(comb: CombParams, omega):
    """Normalised biphoton spectral density ``S(Omega)``.

    ``omega`` is the detuning from degeneracy in rad/s (scalar or array).
    Each comb line contributes a Lorentzian ``1/(dw^2 + (Omega - m dOmega)^2)``
    (squared in doubly-filtered mode) and the whole comb is enveloped by the
    phase-matching ``sinc^2``. The result is scaled so that ``S(0) = 1``.
    """
    omega = np.asarray(omega, dtype=float)
    envelope = sinc(comb.sinc_scale * omega) ** 2
    if comb.filter_mode is FilterMode.UNFILTERED:
        return envelope
    power = 2 if comb.filter_mode is FilterMode.DOUBLY else 1
    return envelope * _comb_lorentzians(comb, omega, power) / _comb_lorentzians(comb, 0.0, power)


def _comb_lorentzians(comb: CombParams, omega, power: int):
    dw2 = comb.delta_omega ** 2
    omega = np.asarray(omega, dtype=float)
    total = np.zeros_like(omega)
    for m in comb.line_indices:
        total = total + (dw2 / (dw2 + (omega - m * comb.delta_Omega) ** 2)) ** power
    return total


def _raw_wavefunction(comb: CombParams, tau: np.ndarray) -> np.ndarray:
    c = comb.line_amplitudes()
    comb_sum = np.zeros_like(tau)
    for cm, m in zip(c, comb.line_indices):
        comb_sum += cm * np.cos(m * comb.delta_Omega * tau)
    if comb.filter_mode is FilterMode.SINGLY:
        return np.where(tau >= 0, np.exp(-comb.delta_omega * np.clip(tau, 0, None)) * comb_sum, 0.0)
    return np.exp(-comb.delta_omega * np.abs(tau)) * comb_sum


@functools.lru_cache(maxsize=64)
def _peak_magnitude(comb: CombParams) -> float:
    """Largest ``|psi|`` before normalisation.

    The comb sum repeats every round trip while the envelope decays, so the
    peak lies in ``[0, dT]``. With all line amplitudes nonnegative it is the
    value at ``tau = 0``; otherwise it is located by dense sampling and a
    bounded refinement.
    """
    c = comb.line_amplitudes()
    if np.all(c >= 0):
        return float(c.sum())
    T = comb.round_trip_time
    tau = np.linspace(0.0, T, 64 * comb.n_lines + 1)
    mag = np.abs(_raw_wavefunction(comb, tau))
    k = int(np.argmax(mag))
    lo, hi = tau[max(k - 1, 0)], tau[min(k + 1, tau.size - 1)]
    res = optimize.minimize_scalar(lambda t: -abs(float(_raw_wavefunction(comb, np.array([t]))[0])),
                                   bounds=(lo, hi), method="bounded", options={"xatol": T * 1e-9})
    return max(float(mag[k]), -float(res.fun))


def _wavefunction_values(comb: CombParams, tau: np.ndarray) -> np.ndarray:
    if comb.filter_mode is FilterMode.UNFILTERED:
        return (np.abs(tau) <= comb.sinc_scale).astype(float)
    return _raw_wavefunction(comb, tau) / _peak_magnitude(comb)


def temporal_wavefunction(comb: CombParams, tau_grid) -> CorrelationTrace:
    """Time-domain biphoton amplitude ``psi(tau)``, unit peak at ``tau = 0``.

    Singly filtered: one-sided decay, zero for ``tau < 0``.
    Doubly filtered: the same comb sum with ``exp(-dw |tau|)``.
    """
    tau, step = _grid_params(tau_grid)
    vals = _wavefunction_values(comb, tau)
    return CorrelationTrace(float(tau[0]), step, vals, TraceKind.AMPLITUDE)


def combined_jitter(t1: float, t2: float) -> float:
    """Quadrature sum of two independent RMS timing jitters."""
    if t1 < 0 or t2 < 0:
        raise ValueError("jitter values must be >= 0")
    return math.hypot(t1, t2)


def gaussian_kernel(step: float, sigma: float) -> np.ndarray:
    """Unit-sum Gaussian sampled on ``step``, truncated at +-6 sigma."""
    half = int(math.ceil(KERNEL_HALF_WIDTH_SIGMAS * sigma / step))
    x = step * np.arange(-half, half + 1)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def smear(values: np.ndarray, step: float, sigma: float) -> np.ndarray:
    """Convolve sampled values with a Gaussian of RMS ``sigma``.

    The discrete sum of ``values`` is conserved as long as the kernel does not
    run off the ends of the grid.
    """
    if sigma == 0:
        return np.array(values, dtype=float, copy=True)
    out = signal.fftconvolve(values, gaussian_kernel(step, sigma), mode="same")
    return np.clip(out, 0.0, None)


def cross_correlation(comb: CombParams, det_a: DetectorParams, det_b: DetectorParams,
                      tau_grid, normalize: bool = True) -> CorrelationTrace:
    """Jitter-convolved second-order cross-correlation ``G2(tau)``.

    ``|psi|^2`` is smeared by a Gaussian whose RMS is the quadrature sum of
    the two detector jitters. With ``normalize`` the trace has unit peak;
    otherwise the Riemann integral of ``|psi|^2`` is preserved.
    """
    tau, step = _grid_params(tau_grid)
    tj = combined_jitter(det_a.jitter_rms_s, det_b.jitter_rms_s)
    if tj > 0:
        limit = min(comb.round_trip_time / 20.0, tj / 5.0)
        if step > limit * (1 + 1e-9):
            raise ResolutionError(
                f"delay step {step:.3e} s exceeds min(dT/20, t_j/5) = {limit:.3e} s")
    intensity = _wavefunction_values(comb, tau) ** 2
    vals = smear(intensity, step, tj)
    trace = CorrelationTrace(float(tau[0]), step, vals, TraceKind.INTENSITY,
                             {"jitter_rms_s": tj})
    return trace.normalized() if normalize else trace


def oscillation_contrast(trace: CorrelationTrace, period: float, start: float,
                         n_periods: int = 5) -> float:
    """Largest local peak-to-valley swing within each period, over ``n_periods``.

    Each period window is detrended by a straight line through its end points
    so that a smooth decay is not counted as oscillation. The result is
    relative to the trace peak.
    """
    tau, vals = trace.tau, np.asarray(trace.values, dtype=float)
    peak = np.max(vals)
    worst = 0.0
    for n in range(n_periods):
        lo, hi = start + n * period, start + (n + 1) * period
        sel = (tau >= lo) & (tau <= hi)
        if sel.sum() < 3:
            continue
        x, y = tau[sel], vals[sel]
        line = y[0] + (y[-1] - y[0]) * (x - x[0]) / (x[-1] - x[0])
        r = y - line
        worst = max(worst, float(r.max() - r.min()))
    return worst / peak
