import math
from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from ssvepbci.metrics import (
    accuracy, bits_per_trial, implied_seconds_per_classification, itr, itr_bits_per_minute, paired_t_test,
    regularized_beta, t_cdf, t_sf_two_sided,
)


def bits_oracle(P, N):
    """Wolpaw bits evaluated in 50-digit decimal arithmetic."""
    getcontext().prec = 50
    P, N = Decimal(P), Decimal(N)
    ln2 = Decimal(2).ln()
    out = N.ln() / ln2
    if P > 0:
        out += P * P.ln() / ln2
    if P < 1:
        out += (1 - P) * ((1 - P) / (N - 1)).ln() / ln2
    return float(out)


def t_cdf_oracle(t, df):
    c = math.gamma((df + 1) / 2) / (math.sqrt(df * math.pi) * math.gamma(df / 2))
    dens = lambda x: c * (1 + x * x / df) ** (-(df + 1) / 2)  # noqa: E731
    val, _ = integrate.quad(dens, -np.inf, t, epsabs=1e-13, epsrel=1e-12)
    return val


def test_accuracy_examples():
    assert accuracy([1] * 60 + [0] * 15, [1] * 75) == 0.8
    assert accuracy([0, 1, 2], [0, 1, 2]) == 1.0
    with pytest.raises(ValueError):
        accuracy([], [])
    with pytest.raises(ValueError):
        accuracy([0, 1], [0])


def test_accuracy_chance_level():
    rng = np.random.default_rng(0)
    assert accuracy(rng.integers(0, 3, 1000), rng.integers(0, 3, 1000)) == pytest.approx(1 / 3, abs=0.05)


def test_bits_documented_values():
    assert bits_per_trial(0.8, 3) == pytest.approx(0.6630, abs=1e-4)
    assert bits_per_trial(0.8, 3) == pytest.approx(bits_oracle("0.8", 3), abs=1e-12)
    assert bits_per_trial(1 / 3, 3) == 0.0
    assert bits_per_trial(1.0, 3) == math.log2(3)


@pytest.mark.parametrize("P, N", [(0.5, 2), (0.9, 4), (0.01, 3), (0.0, 3), (0.37, 5)])
def test_bits_against_decimal_oracle(P, N):
    assert bits_per_trial(P, N) == pytest.approx(bits_oracle(str(P), N), abs=1e-12)


def test_bits_monotone_above_chance():
    grid = np.linspace(1 / 3, 1, 100)
    b = [bits_per_trial(p, 3) for p in grid]
    assert all(x < y for x, y in zip(b, b[1:]))


def test_bits_errors():
    for P, N in [(1.1, 3), (-0.1, 3), (0.5, 1), (float("nan"), 3)]:
        with pytest.raises(ValueError):
            bits_per_trial(P, N)


def test_itr_stimulation_base():
    r = itr(0.8, 3, 5.0, "stimulation")
    assert r.per_minute == 12.0
    assert r.itr_bpm == pytest.approx(7.956, abs=0.01)
    assert "stimulation" in r.describe()


def test_itr_zero_bits_and_linearity():
    assert itr_bits_per_minute(0.0, 37.0) == 0.0
    assert itr_bits_per_minute(2 * 0.5, 10) == 2 * itr_bits_per_minute(0.5, 10)
    assert itr_bits_per_minute(0.5, 20) == 2 * itr_bits_per_minute(0.5, 10)
    with pytest.raises(ValueError):
        itr_bits_per_minute(0.5, 0)
    with pytest.raises(ValueError):
        itr(0.8, 3, 5.0, "wallclock")


def test_paper_itr_needs_compute_time_base():
    s = implied_seconds_per_classification(0.8, 3, 103.0)
    assert s == pytest.approx(0.386, abs=1e-3)
    r = itr(0.8, 3, s, "compute")
    assert r.itr_bpm == pytest.approx(103.0) and r.per_minute == pytest.approx(155.4, abs=0.1)
    assert "compute" in r.describe()


@pytest.mark.parametrize("t, df", [(0.0, 4), (1.0, 1), (-2.5, 3), (5.0, 4), (0.3, 30), (-8.0, 7), (2.2, 100)])
def test_t_cdf_against_quadrature(t, df):
    assert t_cdf(t, df) == pytest.approx(t_cdf_oracle(t, df), abs=1e-10)


def test_regularized_beta_edges():
    assert regularized_beta(2, 3, 0.0) == 0.0 and regularized_beta(2, 3, 1.0) == 1.0
    # I_x(1, 1) = x
    assert regularized_beta(1, 1, 0.37) == pytest.approx(0.37, abs=1e-14)


def test_paired_t_documented_example():
    d = np.array([0.05, 0.02, 0.08, 0.04, 0.06])
    r = paired_t_test(d, np.zeros(5))
    assert r.t == pytest.approx(5.0, abs=1e-9)
    assert r.df == 4 and r.mean_difference == pytest.approx(0.05)
    oracle = 2 * (1 - t_cdf_oracle(5.0, 4))
    assert r.p_value == pytest.approx(oracle, abs=1e-10)
    assert r.p_value == pytest.approx(0.0074, abs=1e-4)


def test_paired_t_degenerate():
    a = np.array([0.1, 0.4, 0.3, 0.2, 0.5])
    with pytest.raises(ValueError):
        paired_t_test(a, a)
    with pytest.raises(ValueError):
        paired_t_test(a + 1, a)
    with pytest.raises(ValueError):
        paired_t_test([1.0], [0.0])


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=20), st.integers(0, 1000))
def test_paired_t_antisymmetric(a, seed):
    b = np.random.default_rng(seed).uniform(-10, 10, len(a))
    try:
        r1 = paired_t_test(a, b)
    except ValueError:
        return
    r2 = paired_t_test(b, a)
    assert r2.t == pytest.approx(-r1.t)
    assert r2.p_value == pytest.approx(r1.p_value)
    assert 0.0 <= r1.p_value <= 1.0


def test_one_sided_p():
    r = paired_t_test([0.05, 0.02, 0.08, 0.04, 0.06], [0] * 5)
    assert r.p_one_sided_greater == pytest.approx(r.p_value / 2)


def test_two_sided_tail_symmetry():
    assert t_sf_two_sided(2.0, 5) == pytest.approx(t_sf_two_sided(-2.0, 5))
