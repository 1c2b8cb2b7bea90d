"""Central and noncentral chi-square tails, quantiles and detection probability."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from ._validation import check_positive_int, check_probability
from .exceptions import InvalidInputError

__all__ = [
    "DetectionCurvePoint",
    "chi2_tail",
    "chi2_quantile",
    "noncentral_chi2_tail",
    "noncentral_chi2_cdf",
    "detection_probability",
]


def chi2_tail(q: int, x: float) -> float:
    """Right tail ``P(chi2_q > x)`` as a regularized upper incomplete gamma."""
    q = check_positive_int(q, "q")
    x = float(x)
    if x < 0 or not math.isfinite(x):
        raise InvalidInputError(f"x must be finite and nonnegative, got {x}")
    return float(special.gammaincc(0.5 * q, 0.5 * x))


def _chi2_cdf(q: int, x: float) -> float:
    return float(special.gammainc(0.5 * q, 0.5 * x))


def chi2_quantile(q: int, p: float, xtol: float = 1e-14) -> float:
    """The threshold x with ``chi2_tail(q, x) == p``.

    Brackets the root in ``[0, q + 10 sqrt(2q) + 50]`` (widened if the tail
    there is still above p), bisects, then takes Newton steps on the density.
    """
    return _quantile(check_positive_int(q, "q"), check_probability(p, "p"), float(xtol))


@functools.lru_cache(maxsize=1024)
def _quantile(q: int, p: float, xtol: float) -> float:
    lo, hi = 0.0, q + 10.0 * math.sqrt(2.0 * q) + 50.0
    while chi2_tail(q, hi) > p:
        lo, hi = hi, 2.0 * hi
    while hi - lo > xtol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if chi2_tail(q, mid) > p:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    # tail' = -density; Newton only while it improves the residual
    for _ in range(3):
        dens = float(stats.chi2.pdf(x, q))
        if dens <= 0:
            break
        step = (chi2_tail(q, x) - p) / dens
        cand = x + step
        if cand < 0 or abs(chi2_tail(q, cand) - p) >= abs(chi2_tail(q, x) - p):
            break
        x = cand
    return x


def _poisson_window(mean: float, tail_mass: float) -> tuple[int, int]:
    if mean == 0.0:
        return 0, 0
    # continuous inverse of the Poisson cdf; one step of slack on each side
    lo = math.floor(special.pdtrik(tail_mass / 2.0, mean))
    hi = math.ceil(special.pdtrik(1.0 - tail_mass / 2.0, mean))
    return max(0, lo - 1), hi + 1


def noncentral_chi2_tail(q: int, lam: float, x: float, tail_mass: float = 1e-14) -> float:
    """Right tail ``P(chi2_q(lam) > x)`` of the noncentral chi-square.

    Poisson mixture ``sum_j Pois(j; lam/2) * Q_{q+2j}(x)``, summed over the
    central window of the Poisson law that leaves out at most `tail_mass`.
    The complementary series (lower incomplete gamma) is used when the tail
    is above one half so that values near 1 keep their relative accuracy.
    """
    q = check_positive_int(q, "q")
    lam = float(lam)
    x = float(x)
    if lam < 0 or not math.isfinite(lam):
        raise InvalidInputError(f"noncentrality must be finite and nonnegative, got {lam}")
    if x < 0 or not math.isfinite(x):
        raise InvalidInputError(f"x must be finite and nonnegative, got {x}")
    if x == 0.0:
        return 1.0
    if lam == 0.0:
        return chi2_tail(q, x)
    mean = 0.5 * lam
    lo, hi = _poisson_window(mean, tail_mass)
    j = np.arange(lo, hi + 1)
    log_w = j * math.log(mean) - mean - special.gammaln(j + 1.0)
    w = np.exp(log_w)
    shapes = 0.5 * q + j
    upper = float(np.dot(w, special.gammaincc(shapes, 0.5 * x)))
    if upper <= 0.5:
        return upper
    lower = float(np.dot(w, special.gammainc(shapes, 0.5 * x)))
    return 1.0 - lower


def noncentral_chi2_cdf(q: int, lam: float, x: float, tail_mass: float = 1e-14) -> float:
    """Left tail ``P(chi2_q(lam) <= x)`` with relative accuracy down to underflow.

    Sums the lower incomplete gammas from j = 0, since for tiny results the
    low-index terms dominate even though their Poisson weights are small.
    """
    q = check_positive_int(q, "q")
    lam = float(lam)
    x = float(x)
    if lam < 0 or not math.isfinite(lam):
        raise InvalidInputError(f"noncentrality must be finite and nonnegative, got {lam}")
    if x < 0 or not math.isfinite(x):
        raise InvalidInputError(f"x must be finite and nonnegative, got {x}")
    if x == 0.0:
        return 0.0
    if lam == 0.0:
        return _chi2_cdf(q, x)
    mean = 0.5 * lam
    _, hi = _poisson_window(mean, tail_mass)
    j = np.arange(0, hi + 1)
    log_w = j * math.log(mean) - mean - special.gammaln(j + 1.0)
    return float(np.dot(np.exp(log_w), special.gammainc(0.5 * q + j, 0.5 * x)))


@dataclass(frozen=True)
class DetectionCurvePoint:
    q: int
    lam: float
    p_false_alarm: float
    threshold: float
    p_detect: float
    p_miss: float = float("nan")


def detection_probability(q: int, lam: float, p_false_alarm: float) -> DetectionCurvePoint:
    """Detection probability of a test sized at `p_false_alarm`.

    The threshold is the central quantile; the detection probability is the
    noncentral tail at that threshold. With ``lam == 0`` the test detects at
    exactly its size. `p_miss` is the complementary probability evaluated
    directly, so it stays accurate when `p_detect` rounds to one.
    """
    q = check_positive_int(q, "q")
    p_false_alarm = check_probability(p_false_alarm, "p_false_alarm")
    tau = chi2_quantile(q, p_false_alarm)
    if float(lam) == 0.0:
        pd, pm = p_false_alarm, 1.0 - p_false_alarm
    else:
        pd = noncentral_chi2_tail(q, lam, tau)
        pm = noncentral_chi2_cdf(q, lam, tau)
    return DetectionCurvePoint(q=q, lam=float(lam), p_false_alarm=p_false_alarm, threshold=tau, p_detect=pd, p_miss=pm)
