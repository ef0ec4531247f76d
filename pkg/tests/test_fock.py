import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad
from scipy.special import eval_genlaguerre

from homodyne.fock import PSI_BOUND, eval_laguerre, eval_psi, eval_psi_row, hermite_gauss, laguerre_functions


def psi_oracle(k, x, dps=40):
    """Physicists' Hermite polynomial evaluated in high precision, then normalized."""
    with mpmath.workdps(dps):
        x = mpmath.mpf(x)
        h = mpmath.hermite(k, x)
        norm = mpmath.sqrt(mpmath.mpf(2) ** k * mpmath.factorial(k) * mpmath.sqrt(mpmath.pi))
        return float(h * mpmath.exp(-x**2 / 2) / norm)


def test_ground_state_at_origin():
    assert eval_psi_row(0, 0.0)[0] == pytest.approx(np.pi**-0.25, rel=1e-15)


def test_first_excited_vanishes_at_origin():
    assert eval_psi_row(1, 0.0)[1] == 0.0


def test_psi8_against_symbolic_hermite():
    assert eval_psi_row(8, 1.3)[8] == pytest.approx(psi_oracle(8, 1.3), abs=1e-10)


@pytest.mark.parametrize("k,x", [(0, 3.1), (5, -2.2), (12, 0.7), (40, 6.5), (128, 11.0), (256, 19.5), (256, -3.3)])
def test_relative_accuracy_high_order(k, x):
    ref = psi_oracle(k, x)
    assert eval_psi(k, np.array([x]))[k, 0] == pytest.approx(ref, rel=1e-11)


def test_direct_polynomial_agreement_low_order():
    x = np.linspace(-5, 5, 41)
    vals = eval_psi(12, x)
    for k in range(13):
        coef = np.zeros(k + 1)
        coef[k] = 1
        direct = np.polynomial.hermite.hermval(x, coef) * np.exp(-x**2 / 2)
        direct /= math.sqrt(2.0**k * math.factorial(k) * math.sqrt(math.pi))
        assert np.max(np.abs(vals[k] - direct)) < 1e-10


def test_orthonormality_gauss_hermite():
    nodes, weights = hermite_gauss(80)
    psi = eval_psi(32, nodes)
    gram = (psi * weights) @ psi.T
    assert np.max(np.abs(gram - np.eye(33))) < 1e-9


def test_cramer_bound_dense_grid():
    x = np.linspace(-20, 20, 20001)
    assert np.max(np.abs(eval_psi(64, x))) <= PSI_BOUND


@given(st.integers(0, 60), st.floats(-15, 15))
def test_parity(k, x):
    a = eval_psi(k, np.array([x, -x]))[k]
    assert a[1] == pytest.approx((-1) ** k * a[0], abs=1e-14)


def test_far_tail_is_finite_and_tiny():
    vals = eval_psi(64, np.array([25.0, -40.0, 1e3]))
    assert np.all(np.isfinite(vals))
    assert np.max(np.abs(vals)) < 1e-60


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_non_finite_rejected(bad):
    with pytest.raises(ValueError):
        eval_psi_row(3, bad)


def test_laguerre_degree_zero():
    assert eval_laguerre(0, 3, 7.2) == 1.0


def test_laguerre_gram_schmidt_oracle():
    # orthogonalize {1, t} under the weight exp(-t) t and fix the leading coefficient to -1
    w = lambda t: math.exp(-t) * t
    m0 = quad(w, 0, np.inf)[0]
    m1 = quad(lambda t: t * w(t), 0, np.inf)[0]
    g = lambda t: -(t - m1 / m0)
    assert eval_laguerre(1, 1, 0.5) == pytest.approx(g(0.5), abs=1e-12)


def test_laguerre_orthogonality():
    val = quad(lambda t: math.exp(-t) * t * eval_laguerre(1, 1, t) * eval_laguerre(2, 1, t), 0, np.inf)[0]
    assert abs(val) < 1e-9


@given(st.integers(0, 25), st.integers(0, 8), st.floats(0, 40))
def test_laguerre_matches_scipy(j, d, t):
    ref = eval_genlaguerre(j, d, t)
    assert eval_laguerre(j, d, t) == pytest.approx(ref, rel=1e-9, abs=1e-9 * max(1.0, abs(ref)))


def test_laguerre_negative_index():
    with pytest.raises(ValueError):
        eval_laguerre(-1, 0, 1.0)
    with pytest.raises(ValueError):
        eval_laguerre(1, -2, 1.0)


def test_laguerre_functions_normalized_form():
    u = np.linspace(0, 30, 61)
    got = laguerre_functions(10, 3, u)
    for j in range(11):
        ref = (math.sqrt(math.factorial(j) / math.factorial(j + 3)) * u**1.5 * np.exp(-u / 2)
               * eval_genlaguerre(j, 3, u))
        assert np.max(np.abs(got[j] - ref)) < 1e-11
    assert np.max(np.abs(got)) <= 1 + 1e-12
