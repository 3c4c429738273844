import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import trapezoid

from fluxgrow.couplings import kappa
from fluxgrow.losses import (LossParams, dark_overlap_pin, fidelity_surface, five_level_dark_state,
                             five_level_evolve, five_level_hamiltonian, flux_insertion_fidelity, gaussian_density,
                             mixing_angles, survival_average, survival_closed_form, survival_integral_numeric)
from fluxgrow.stirap import Step

steps = st.sampled_from([Step.ONE, Step.TWO])


def test_params_validation():
    with pytest.raises(ValueError):
        LossParams(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        LossParams(1.0, 1.0, -1.0)
    with pytest.raises(ValueError):
        gaussian_density(0.0)


def test_mixing_angle_limits():
    p = LossParams(60.0, 20.0, 100.0)
    early = mixing_angles(Step.ONE, 1.0, -40.0, p)
    late = mixing_angles(Step.ONE, 1.0, 40.0, p)
    # the OAM drive is on first, so the photon starts in the low mode
    assert early.phi == pytest.approx(0.0, abs=1e-8)
    assert late.phi == pytest.approx(math.pi / 2, abs=1e-8)
    assert math.tan(early.theta) == pytest.approx(60.0 * float(kappa(1.0, p.a)) / 20.0, rel=1e-8)
    assert math.tan(late.theta) == pytest.approx(3.0, rel=1e-8)


def test_closed_form_example():
    p = LossParams(60.0, 20.0, 100.0)
    f = float(kappa(0.3, p.a))
    expo = 2 / 400 - 1 / (400 + 3600) - 1 / (400 + f * f * 3600)
    assert survival_closed_form(0.3, p, Step.ONE) == pytest.approx(math.exp(-25 * expo), rel=1e-14)
    assert survival_closed_form(0.3, p, Step.ONE) == pytest.approx(0.8885794789392488, rel=1e-12)


@given(st.floats(0.0, 2.5), st.floats(5, 200), st.floats(2, 100), st.floats(0, 200), steps)
def test_closed_form_equals_integral(x, W, g, gam, step):
    p = LossParams(W, g, gam)
    assert survival_closed_form(x, p, step) == pytest.approx(survival_integral_numeric(x, p, step), rel=1e-9,
                                                             abs=1e-12)


@given(st.floats(0.0, 3.0), st.floats(1, 300), st.floats(1, 300), st.floats(0, 500), steps)
def test_survival_bounded(x, W, g, gam, step):
    e = survival_closed_form(x, LossParams(W, g, gam), step)
    assert 0.0 <= e <= 1.0


@given(st.floats(0.01, 2.0), st.floats(5, 200), st.floats(1, 100), st.floats(1, 100), steps)
def test_survival_monotone_in_g_and_gamma(x, W, g, gam, step):
    e = survival_closed_form(x, LossParams(W, g, gam), step)
    assert survival_closed_form(x, LossParams(W, 1.5 * g, gam), step) >= e
    assert survival_closed_form(x, LossParams(W, g, 1.5 * gam), step) <= e


@given(st.floats(0.01, 2.0), st.floats(5, 200), st.floats(1, 100), st.floats(1, 100), st.floats(1.1, 10), steps)
def test_log_survival_scales_as_inverse_duration(x, W, g, gam, s, step):
    e1 = survival_closed_form(x, LossParams(W, g, gam), step)
    es = survival_closed_form(x, LossParams(s * W, s * g, s * gam), step)
    assert math.log(es) == pytest.approx(math.log(e1) / s, rel=1e-10, abs=1e-14)


def test_strong_drive_limit():
    p = LossParams(1e7, 5.0, 10.0)
    assert survival_closed_form(1.0, p, Step.ONE) == pytest.approx(math.exp(-10 / (2 * 25)), rel=1e-9)


def test_no_loss_without_decay():
    p = LossParams(60.0, 20.0, 0.0)
    assert survival_closed_form(0.3, p, Step.TWO) == 1.0
    assert five_level_evolve(0.3, p, Step.ONE) == pytest.approx(1.0, abs=1e-10)


def test_five_level_dark_state_is_null():
    A, B, g = 3.0, 1.7, 2.2
    d = five_level_dark_state(A, B, g)
    assert np.linalg.norm(d) == pytest.approx(1.0)
    assert np.max(np.abs(five_level_hamiltonian(A, B, g, 0.0) @ d)) <= 1e-14
    assert np.max(np.abs(five_level_hamiltonian(A, B, g, 5.0) @ d)) <= 1e-14


@pytest.mark.parametrize("step", [Step.ONE, Step.TWO])
def test_five_level_matches_closed_form_at_reference_point(step):
    p = LossParams(60.0, 20.0, 100.0)
    ref = five_level_evolve(0.3, p, step)
    assert survival_closed_form(0.3, p, step) == pytest.approx(ref, rel=0.05)


def test_five_level_matches_closed_form_deep_in_strong_coupling():
    p = LossParams(60.0, 200.0, 100.0)
    assert survival_closed_form(0.3, p, Step.ONE) == pytest.approx(five_level_evolve(0.3, p, Step.ONE), rel=1e-6)


def test_pin_matches_dense_trapezoid():
    p = LossParams(40.0, 30.0, 100.0, a=0.005, xi=0.25)
    x = np.linspace(0, 3.0, 600001)
    s = (40.0 * kappa(x, p.a)) ** 2
    w = x * np.exp(-x ** 2 / 0.25 ** 2)
    ref = trapezoid(w * s / (900 + s), x) / trapezoid(w, x)
    assert dark_overlap_pin(p) == pytest.approx(ref, rel=1e-6)


def test_survival_average_matches_dense_trapezoid():
    p = LossParams(60.0, 20.0, 100.0, a=0.005, xi=0.25)
    x = np.linspace(0, 3.0, 600001)
    e = survival_closed_form(x, p, Step.ONE) * survival_closed_form(x, p, Step.TWO)
    w = x * np.exp(-x ** 2 / 0.25 ** 2)
    assert survival_average(p) == pytest.approx(trapezoid(w * e, x) / trapezoid(w, x), rel=1e-6)


def test_custom_density_is_used():
    ring = lambda x: np.exp(-((np.asarray(x) - 0.5) / 0.05) ** 2)
    a = flux_insertion_fidelity(LossParams(60.0, 20.0, 100.0, density=ring))
    b = flux_insertion_fidelity(LossParams(60.0, 20.0, 100.0))
    assert a != pytest.approx(b, rel=1e-3)


def test_fidelity_factorizes_and_surface_csv(tmp_path):
    W, G = [20.0, 100.0], [5.0, 50.0]
    surf = fidelity_surface(W, G)
    assert surf.F.shape == (2, 2)
    assert np.all((surf.F >= 0) & (surf.F <= 1))
    for i, w in enumerate(W):
        for j, g in enumerate(G):
            prm = LossParams(w, g, 100.0)
            assert surf.F[i, j] == pytest.approx(survival_average(prm) * dark_overlap_pin(prm), rel=1e-14)
            assert surf.F[i, j] == pytest.approx(flux_insertion_fidelity(prm), rel=1e-14)
    rows = list(csv.reader(surf.to_csv(tmp_path / "s.csv").open()))
    assert rows[0] == ["Omega_T", "g_T", "p", "p_in", "F"] and len(rows) == 5
    assert float(rows[2][0]) == 20.0 and float(rows[2][1]) == 50.0
