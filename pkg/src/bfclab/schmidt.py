"""Schmidt-mode bookkeeping for binned biphoton weights.

Weights are treated as unnormalised Schmidt eigenvalues: each bin's weight is
proportional to its eigenvalue, and the Schmidt number is the inverse
participation ratio ``K = (sum w)^2 / sum w^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core_model import CombParams
from .errors import AllZeroWeights, InvalidOrdering

_FLOOR_EPS = 1e-9


@dataclass
class JSIMatrix:
    """Coincidence weights indexed by (signal bin, idler bin) in [-N..N]^2.

    ``weights[i, j]`` holds the pair ``(i - N, j - N)``.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] % 2 == 0:
            raise ValueError("JSI must be a square matrix with an odd number of bins")
        if np.any(w < 0):
            raise ValueError("JSI weights must be >= 0")
        if not np.any(w > 0):
            raise AllZeroWeights("JSI has no positive weight")
        self.weights = w

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def n_half(self) -> int:
        return (self.n - 1) // 2

    def __getitem__(self, pair):
        ms, mi = pair
        return self.weights[ms + self.n_half, mi + self.n_half]

    def anti_diagonal(self) -> np.ndarray:
        """Weights of the symmetric pairs (m, -m) for m = -N..N."""
        n = self.n
        return self.weights[np.arange(n), n - 1 - np.arange(n)]


@dataclass
class SchmidtResult:
    eigenvalues: np.ndarray
    schmidt_number: float
    separable_contamination: float = 0.0

    @property
    def dimension_lower_bound(self) -> int:
        return dimension_lower_bound(self.schmidt_number, self.schmidt_number)


def schmidt_from_weights(weights) -> SchmidtResult:
    w = np.asarray(weights, dtype=float).ravel()
    if w.size == 0 or np.any(w < 0):
        raise ValueError("weights must be a nonempty sequence of nonnegative numbers")
    total = w.sum()
    if total <= 0:
        raise AllZeroWeights("all weights are zero")
    lam = np.sort(w / total)[::-1]
    # sum of squares on the normalised values keeps K scale invariant
    k = 1.0 / float(np.sum(lam ** 2))
    k = min(max(k, 1.0), float(w.size))
    return SchmidtResult(lam, k)


def schmidt_from_jsi(jsi: JSIMatrix) -> SchmidtResult:
    """Schmidt number from the symmetric-pair weights of a JSI.

    Off-anti-diagonal mass is reported as ``separable_contamination`` (its
    fraction of the total) and does not enter K.
    """
    diag = jsi.anti_diagonal()
    result = schmidt_from_weights(diag)
    total = jsi.weights.sum()
    result.separable_contamination = float((total - diag.sum()) / total)
    return result


def dimension_lower_bound(k_signal: float, k_idler: float) -> int:
    if k_signal < 1 or k_idler < 1:
        raise ValueError("Schmidt numbers must be >= 1")
    return int(math.floor(k_signal * k_idler + _FLOOR_EPS))


def ideal_jsi(comb: CombParams, cross_talk: float = 0.0) -> JSIMatrix:
    """Ideal frequency-correlation matrix of the comb.

    Symmetric pairs carry the phase-matching weight ``sinc^2(A m dW)``; every
    other entry is ``cross_talk`` times the anti-diagonal weight nearest to it.
    """
    if not 0 <= cross_talk < 1:
        raise ValueError("cross_talk must lie in [0, 1)")
    w = comb.line_weights()
    n, N = comb.n_lines, comb.n_half
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            ms, mi = i - N, j - N
            if mi == -ms:
                out[i, j] = w[i]
            elif cross_talk:
                # projection of (ms, mi) onto the anti-diagonal (k, -k)
                k = (ms - mi) / 2
                lo, hi = math.floor(k), math.ceil(k)
                out[i, j] = cross_talk * 0.5 * (w[lo + N] + w[hi + N])
    return JSIMatrix(out)


@dataclass(frozen=True)
class DimensionPlan:
    n_f: int
    n_t: int
    product: float

    @property
    def consistent(self) -> bool:
        return abs(self.n_f * self.n_t - self.product) / self.product <= 0.1


def plan_dimensionality(b_spdc_hz: float, fsr_hz: float, linewidth_fwhm_hz: float) -> DimensionPlan:
    """Frequency-bin count, time-bin count and their ideal product.

    ``n_f = B/FSR`` and ``n_t = FSR/linewidth`` (floored); the product
    ``pi B / dw`` with ``dw = pi * linewidth`` is ``B / linewidth``.
    """
    if not b_spdc_hz > fsr_hz > linewidth_fwhm_hz > 0:
        raise InvalidOrdering("need b_spdc_hz > fsr_hz > linewidth_fwhm_hz > 0")
    n_f = int(math.floor(b_spdc_hz / fsr_hz + _FLOOR_EPS))
    n_t = int(math.floor(fsr_hz / linewidth_fwhm_hz + _FLOOR_EPS))
    return DimensionPlan(n_f, n_t, b_spdc_hz / linewidth_fwhm_hz)
