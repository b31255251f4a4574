"""Accuracy, bits per trial, ITR under an explicit time base, and the paired t-test."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

TIME_BASES = ("stimulation", "compute")


def accuracy(predictions: Sequence[int], labels: Sequence[int]) -> float:
    p = np.asarray(predictions)
    y = np.asarray(labels)
    if p.shape != y.shape:
        raise ValueError(f"{p.size} predictions but {y.size} labels")
    if p.size == 0:
        raise ValueError("accuracy of an empty prediction set is undefined")
    return float(np.mean(p == y))


def _xlog2x(x: float) -> float:
    return 0.0 if x == 0 else x * math.log2(x)


def bits_per_trial(P: float, N: int) -> float:
    """Wolpaw bits per selection, with x*log2(x) taken as 0 at x = 0."""
    if not 0.0 <= P <= 1.0 or math.isnan(P):
        raise ValueError(f"accuracy P must lie in [0, 1], got {P}")
    if N < 2:
        raise ValueError(f"command count N must be >= 2, got {N}")
    if P == 1.0 / N:
        return 0.0
    rest = 1.0 - P
    # (1-P)*log2((1-P)/(N-1)) = xlog2x(1-P) - (1-P)*log2(N-1)
    return math.log2(N) + _xlog2x(P) + _xlog2x(rest) - rest * math.log2(N - 1)


def classifications_per_minute(seconds_per_classification: float) -> float:
    if not seconds_per_classification > 0:
        raise ValueError(f"seconds per classification must be > 0, got {seconds_per_classification}")
    return 60.0 / seconds_per_classification


def itr_bits_per_minute(B: float, Q: float) -> float:
    """ITR = B * Q with Q in classifications per minute."""
    if not Q > 0:
        raise ValueError(f"Q must be > 0 classifications per minute, got {Q}")
    return B * Q


@dataclass(frozen=True)
class ItrResult:
    P: float
    N: int
    seconds_per_classification: float
    time_base: str
    bits_per_trial: float
    per_minute: float
    itr_bpm: float

    def describe(self) -> str:
        return (f"ITR {self.itr_bpm:.3f} bits/min (P={self.P:.4f}, N={self.N}, "
                f"B={self.bits_per_trial:.4f} bits/trial, Q={self.per_minute:.3f}/min, "
                f"time base: {self.time_base}, {self.seconds_per_classification:.4g} s per classification)")


def itr(P: float, N: int, seconds_per_classification: float, time_base: str = "stimulation") -> ItrResult:
    """ITR with the time base recorded alongside the number.

    ``stimulation`` uses the flicker duration as the time per selection;
    ``compute`` uses a measured average classification time.
    """
    if time_base not in TIME_BASES:
        raise ValueError(f"time_base must be one of {TIME_BASES}, got {time_base!r}")
    B = bits_per_trial(P, N)
    Q = classifications_per_minute(seconds_per_classification)
    return ItrResult(P, N, seconds_per_classification, time_base, B, Q, itr_bits_per_minute(B, Q))


def implied_seconds_per_classification(P: float, N: int, itr_bpm: float) -> float:
    """Time per classification that turns accuracy P into a given ITR."""
    B = bits_per_trial(P, N)
    if B <= 0 or itr_bpm <= 0:
        raise ValueError("need positive bits per trial and ITR")
    return 60.0 * B / itr_bpm


# -- Student t distribution --------------------------------------------------

def _betacf(a: float, b: float, x: float, eps: float = 1e-15, max_iter: int = 500) -> float:
    # Modified Lentz evaluation of the incomplete-beta continued fraction.
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if math.isinf(t):
        return 0.0
    return regularized_beta(df / 2.0, 0.5, df / (df + t * t))


def t_cdf(t: float, df: float) -> float:
    tail = 0.5 * t_sf_two_sided(t, df)
    return 1.0 - tail if t >= 0 else tail


@dataclass(frozen=True)
class TTestResult:
    t: float
    p_value: float
    df: int
    mean_difference: float

    @property
    def p_one_sided_greater(self) -> float:
        """p-value for the alternative mean(a - b) > 0."""
        return 1.0 - t_cdf(self.t, self.df)


def paired_t_test(scores_a: Sequence[float], scores_b: Sequence[float]) -> TTestResult:
    """Two-sided paired t-test on ``a - b``."""
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be 1-D and of equal length")
    n = a.size
    if n < 2:
        raise ValueError("paired t-test needs at least 2 pairs")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0 or sd <= 1e-12 * max(1.0, abs(mean)):
        raise ValueError("differences have zero variance; t statistic is undefined")
    t = mean / (sd / math.sqrt(n))
    return TTestResult(t, t_sf_two_sided(t, n - 1), n - 1, mean)
