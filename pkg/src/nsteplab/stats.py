"""Per-run window means, Student-t confidence intervals and Welch's test.

The statistical unit is a run: each seed contributes one window mean.
The t distribution is evaluated through the regularized incomplete beta
function from scipy.special.
"""
from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.optimize import brentq

from nsteplab.errors import ContractError

WINDOWS = ("first50", "last50", "all")
WINDOW_SIZE = 50

@dataclass(frozen=True)
class SummaryStats:
    n_samples: int
    mean: float
    sample_sd: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class WelchResult:
    t_stat: float
    dof: float
    p_value: float


def _returns(records) -> np.ndarray:
    out = []
    for r in records:
        out.append(float(getattr(r, "episode_return", r)))
    return np.asarray(out, dtype=np.float64)


def window_mean(records: Sequence, window: str) -> float:
    """Mean episode return of one run over ``first50``, ``last50`` or ``all``.

    ``records`` may hold EpisodeRecords or plain returns.
    """
    r = _returns(records)
    if window == "all":
        if r.size == 0:
            raise ContractError("no episodes")
        return float(r.mean())
    if window not in WINDOWS:
        raise ContractError(f"unknown window {window!r}; expected one of {WINDOWS}")
    if r.size < WINDOW_SIZE:
        raise ContractError(f"window {window} needs {WINDOW_SIZE} episodes, run has {r.size}")
    part = r[:WINDOW_SIZE] if window == "first50" else r[-WINDOW_SIZE:]
    return float(part.mean())


def _two_sided_tail(t: float, dof: float) -> float:
    # P(|T| > |t|) = I_{dof/(dof+t^2)}(dof/2, 1/2); the complementary form keeps
    # precision when t^2 is small next to dof
    t2 = t * t
    denom = dof + t2
    if t2 < dof:
        return float(special.betaincc(0.5, 0.5 * dof, t2 / denom))
    return float(special.betainc(0.5 * dof, 0.5, dof / denom))


def t_cdf(x: float, dof: float) -> float:
    """Student-t cumulative distribution function."""
    if not dof > 0.0:
        raise ContractError("dof must be positive")
    if math.isnan(x):
        return math.nan
    if math.isinf(x):
        return 1.0 if x > 0 else 0.0
    half_tail = 0.5 * _two_sided_tail(x, dof)
    return 1.0 - half_tail if x > 0.0 else half_tail


def t_quantile(p: float, dof: float) -> float:
    """Inverse of :func:`t_cdf` in ``x`` (root-bracketed)."""
    if not 0.0 < p < 1.0:
        raise ContractError("p must lie in (0, 1)")
    if p == 0.5:
        return 0.0
    hi = 1.0
    while (t_cdf(hi, dof) - p) * (t_cdf(-hi, dof) - p) > 0.0:
        hi *= 2.0
    return brentq(lambda x: t_cdf(x, dof) - p, -hi, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)


def summarize(values: Iterable[float]) -> SummaryStats:
    """Mean, sample sd and two-sided 95% t interval over runs."""
    v = np.asarray(list(values), dtype=np.float64)
    n = v.size
    if n < 2:
        raise ContractError("summarize needs at least two values")
    mean = float(v.mean())
    sd = float(v.std(ddof=1))
    half = t_quantile(0.975, n - 1) * sd / math.sqrt(n)
    return SummaryStats(n, mean, sd, mean - half, mean + half)


def welch_from_summary(mean_a: float, sd_a: float, n_a: int,
                       mean_b: float, sd_b: float, n_b: int) -> WelchResult:
    if n_a < 2 or n_b < 2:
        raise ContractError("Welch's test needs at least two samples per group")
    if sd_a < 0.0 or sd_b < 0.0:
        raise ContractError("standard deviations must be non-negative")
    va = sd_a * sd_a / n_a
    vb = sd_b * sd_b / n_b
    se2 = va + vb
    if se2 <= 0.0:
        raise ContractError("both samples have zero variance")
    t = (mean_a - mean_b) / math.sqrt(se2)
    dof = se2 * se2 / (va * va / (n_a - 1) + vb * vb / (n_b - 1))
    p = min(1.0, max(0.0, _two_sided_tail(t, dof)))
    return WelchResult(t, dof, p)


def welch_test(a: Iterable[float], b: Iterable[float]) -> WelchResult:
    """Two-sided Welch's t-test for a difference in means."""
    xa = np.asarray(list(a), dtype=np.float64)
    xb = np.asarray(list(b), dtype=np.float64)
    if xa.size < 2 or xb.size < 2:
        raise ContractError("Welch's test needs at least two samples per group")
    return welch_from_summary(float(xa.mean()), float(xa.std(ddof=1)), xa.size,
                              float(xb.mean()), float(xb.std(ddof=1)), xb.size)
