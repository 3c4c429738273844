import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import trapezoid
from scipy.special import eval_genlaguerre

from fluxgrow.modes import (CavityGeometry, ModeIndex, QuadratureConfig, QuadratureError, laguerre, mode_function,
                            mode_norm, mode_overlap, radial_quadrature)


def laguerre_series(n, k, x):
    # explicit coefficients sum_j (-1)^j C(n+k, n-j) x^j / j!
    return sum((-1) ** j * math.comb(n + k, n - j) * x ** j / math.factorial(j) for j in range(n + 1))


def test_laguerre_examples():
    assert laguerre(0, 5, 3.7) == 1.0
    assert laguerre(1, 0, 0.0) == 1.0
    assert laguerre(3, 2, 1.5) == pytest.approx(laguerre_series(3, 2, 1.5), rel=1e-14)


@given(st.integers(0, 12), st.integers(0, 15), st.floats(0.0, 30.0))
def test_laguerre_matches_scipy(n, k, x):
    assert laguerre(n, k, x) == pytest.approx(eval_genlaguerre(n, k, x), rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("x", [0.1, 1.0, 5.0])
def test_laguerre_summation_identity(x):
    for n in range(7):
        for l in range(11):
            lhs = sum(laguerre(p, l, x) for p in range(n + 1))
            assert lhs == pytest.approx(laguerre(n, l + 1, x), abs=1e-12 * max(1.0, abs(lhs)))


def test_laguerre_vectorized():
    x = np.linspace(0, 4, 9)
    assert np.allclose(laguerre(4, 3, x), eval_genlaguerre(4, 3, x))


def test_mode_index_validation():
    with pytest.raises(ValueError):
        ModeIndex(-1, 0)
    assert ModeIndex(0, 6).in_lll and ModeIndex(0, 4).alpha == 1 and not ModeIndex(1, 3).in_lll


def test_geometry_degeneracy():
    geo = CavityGeometry(2.0, {(0, 0): 1.5, (0, 1): 2.5})
    assert geo.frequency(ModeIndex(0, 3)) == geo.frequency(ModeIndex(0, 9)) == 1.5
    assert geo.frequency(ModeIndex(0, 7)) == 2.5
    with pytest.raises(ValueError):
        CavityGeometry(0.0)


def test_mode_function_examples():
    assert mode_function(ModeIndex(0, 0), 0.0, 0.0) == pytest.approx(math.sqrt(2 / math.pi))
    assert mode_function(ModeIndex(0, 3), 0.0, 1.234) == 0
    # term-by-term evaluation of C x^l e^{il phi} e^{-x^2} L_n^l(2x^2)
    r, phi = 0.8, math.pi / 4
    C = math.sqrt(2 ** 4 * 1 / (math.pi * math.factorial(4)))
    ref = C * r ** 3 * complex(math.cos(3 * phi), math.sin(3 * phi)) * math.exp(-r * r) * (4 - 2 * r * r)
    assert mode_function(ModeIndex(1, 3), r, phi) == pytest.approx(ref, rel=1e-14)


def test_mode_function_large_l_no_overflow():
    v = mode_function(ModeIndex(3, 40), np.array([0.5, 3.0, 6.0]), 0.0)
    assert np.all(np.isfinite(v))


@given(st.integers(0, 4), st.integers(0, 12), st.floats(0.0, 4.0), st.floats(0.0, 6.3), st.floats(0.3, 3.0))
def test_scale_covariance(n, l, r, phi, w0):
    m = ModeIndex(n, l)
    assert mode_function(m, r, phi, w0) == pytest.approx(mode_function(m, r / w0, phi, 1.0) / w0, rel=1e-12, abs=1e-14)


def test_mode_norm_log_space():
    assert mode_norm(0, 0) == pytest.approx(math.sqrt(2 / math.pi))
    assert mode_norm(2, 30) > 0 and math.isfinite(mode_norm(2, 30))


def test_overlap_examples():
    assert abs(mode_overlap(ModeIndex(0, 0), ModeIndex(0, 0)) - 1) <= 1e-10
    assert abs(mode_overlap(ModeIndex(0, 3), ModeIndex(1, 3))) <= 1e-10
    assert mode_overlap(ModeIndex(0, 3), ModeIndex(0, 6)) == 0


def test_orthonormality_grid():
    worst = 0.0
    for l in range(13):
        for n in range(5):
            for n2 in range(5):
                v = mode_overlap(ModeIndex(n, l), ModeIndex(n2, l))
                worst = max(worst, abs(v - (n == n2)))
    assert worst <= 1e-8


def test_quadrature_moments():
    assert radial_quadrature(lambda x: x * np.exp(-2 * x * x))[0] == pytest.approx(0.25, rel=1e-12)
    assert radial_quadrature(lambda x: x ** 3 * np.exp(-2 * x * x))[0] == pytest.approx(1 / 8, rel=1e-12)
    assert radial_quadrature(lambda x: x ** 9 * np.exp(-2 * x * x))[0] == pytest.approx(24 / 64, rel=1e-12)


def test_quadrature_budget_error():
    cfg = QuadratureConfig(rtol=1e-15, max_evals=100)
    with pytest.raises(QuadratureError) as info:
        radial_quadrature(lambda x: np.abs(np.sin(40 * x)) * np.exp(-x * x), cfg)
    assert info.value.err_estimate > 0


def test_quadrature_breakpoints_resolve_sharp_feature():
    a = 1e-4
    f = lambda x: x * x / (a ** 3 + x ** 3) * np.exp(-x * x)  # noqa: E731
    v, _ = radial_quadrature(f, QuadratureConfig(rtol=1e-12, breakpoints=(a, 4 * a, 64 * a)))
    # dense log-spaced trapezoid as an independent estimate
    x = np.concatenate([[0.0], np.geomspace(1e-9, 12.0, 400_001)])
    assert v == pytest.approx(trapezoid(f(x), x), rel=1e-6)
