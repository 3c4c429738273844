"""Non-adiabatic losses of the flux insertion and the resulting fidelity.

Everything is expressed in the dimensionless groups Omega T, g T and
gamma T with time tau = t / T.  Losses are evaluated on two-photon and
one-photon resonance with equal cavity couplings for the two modes.

An atom at radius x = r / w0 follows the dark state of a five-level system
(excited e, spin s, Rydberg r, two cavity photons).  With strong damping the
bright states can be eliminated and the probability to stay dark is

    e(x) = exp{ -(2 gamma / g^2) int (phi'^2 sin^2 theta + theta'^2 cos^2 theta) dt }

with tan phi and tan theta the ratios of the pulse amplitudes.  For the
sigmoid pulses this integral has a closed form, see :func:`survival_closed_form`.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.integrate import quad, solve_ivp

from .couplings import _kappa_breakpoints, kappa
from .modes import QuadratureConfig, radial_quadrature
from .stirap import Step, envelope_derivatives, envelopes

# half width of the time window used for the loss integrals; the sigmoids
# are saturated to e^{-30} of their peak there
_HALF_WINDOW = 60.0


def gaussian_density(xi: float) -> Callable:
    """n(x) = exp(-x^2 / xi^2), x = r / w0 (unnormalized)."""
    if not xi > 0:
        raise ValueError("xi must be positive")
    return lambda x: np.exp(-np.asarray(x, dtype=float) ** 2 / xi ** 2)


@dataclass(frozen=True)
class LossParams:
    """Dimensionless loss parameters; ``density`` defaults to a Gaussian of radius xi."""

    Omega_T: float
    g_T: float
    gamma_T: float
    a: float = 0.005
    xi: float = 0.25
    density: Callable | None = field(default=None, compare=False)
    tau1: float = 6.0

    def __post_init__(self):
        for name in ("Omega_T", "g_T", "a", "xi"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.gamma_T < 0:
            raise ValueError("gamma_T must be non-negative")
        if self.density is None:
            object.__setattr__(self, "density", gaussian_density(self.xi))

    def profile(self, step: Step, x):
        """Spatial factor f_1 = kappa(x) or f_2 = x^2 of the OAM-carrying drive."""
        if Step(step) is Step.ONE:
            return kappa(x, self.a)
        return np.asarray(x, dtype=float) ** 2

    def center(self, step: Step) -> float:
        return 0.0 if Step(step) is Step.ONE else 2 * self.tau1


@dataclass(frozen=True)
class MixingAngles:
    phi: float
    theta: float
    which_step: Step


def _amplitudes(step: Step, x: float, tau, p: LossParams):
    """(A, B, A', B') where A couples e-s and B couples s-r.

    In step one A = Omega_1 (OAM drive) and B = Omega_0; in step two A is the
    Omega_0 field and B the x^2 drive, so that in both steps the dark state
    starts with B -> 0.
    """
    step = Step(step)
    act, om0 = envelopes(step, tau, p.tau1)
    dact, dom0 = envelope_derivatives(step, tau, p.tau1)
    f = p.profile(step, x)
    W = p.Omega_T
    if step is Step.ONE:
        return f * W * act, W * om0, f * W * dact, W * dom0
    return W * om0, f * W * act, W * dom0, f * W * dact


def mixing_angles(step: Step, x: float, tau: float, params: LossParams) -> MixingAngles:
    """tan phi = B / A (Omega_0 / Omega_1 in step one, Omega_2 / Omega_0 in step two), tan theta = sqrt(A^2+B^2) / g."""
    A, B, _, _ = _amplitudes(step, x, tau, params)
    A, B = float(A), float(B)
    return MixingAngles(math.atan2(B, A), math.atan2(math.hypot(A, B), params.g_T), Step(step))


def _loss_rate_integrand(tau, step, x, p: LossParams):
    A, B, dA, dB = _amplitudes(step, x, tau, p)
    rho2 = A * A + B * B
    if rho2 == 0.0:
        return 0.0
    rho = math.sqrt(rho2)
    g = p.g_T
    dphi = (A * dB - B * dA) / rho2
    dtheta = g * (A * dA + B * dB) / (rho * (g * g + rho2))
    sin2 = rho2 / (g * g + rho2)
    return dphi * dphi * sin2 + dtheta * dtheta * (1.0 - sin2)


def survival_integral_numeric(x: float, params: LossParams, step: Step) -> float:
    """Probability to stay dark from direct quadrature of the mixing-angle rates."""
    step = Step(step)
    c = params.center(step)
    value, err = quad(_loss_rate_integrand, c - _HALF_WINDOW, c + _HALF_WINDOW, args=(step, x, params),
                      points=[c], limit=500, epsabs=1e-14, epsrel=1e-12)
    return math.exp(-2.0 * params.gamma_T / params.g_T ** 2 * value)


def survival_closed_form(x, params: LossParams, step: Step):
    """exp{-(gamma T / 4) (2/g^2 - 1/(g^2 + Omega^2) - 1/(g^2 + f^2 Omega^2))} in units of 1/T."""
    f = params.profile(step, x)
    g2 = params.g_T ** 2
    W2 = params.Omega_T ** 2
    fW2 = f * f * W2
    # 1/g^2 - 1/(g^2 + s) = s / (g^2 (g^2 + s)), free of cancellation for g >> Omega
    expo = (W2 / (g2 + W2) + fW2 / (g2 + fW2)) / g2
    out = np.exp(-0.25 * params.gamma_T * expo)
    return out if np.ndim(out) else float(out)


def _inv_sqrt_1p_exp_scalar(z: float) -> float:
    if z > 0:
        return math.exp(-0.5 * z) / math.sqrt(1.0 + math.exp(-z))
    return 1.0 / math.sqrt(1.0 + math.exp(z))


def five_level_hamiltonian(A: float, B: float, g: float, gamma: float) -> np.ndarray:
    """Non-Hermitian Hamiltonian over (e, s, r, a_1, a_2)."""
    return np.array([
        [-1j * gamma, A, 0, g, 0],
        [A, 0, B, 0, 0],
        [0, B, -1j * gamma, 0, g],
        [g, 0, 0, 0, 0],
        [0, 0, g, 0, 0],
    ], dtype=complex)


def five_level_dark_state(A: float, B: float, g: float) -> np.ndarray:
    """Null vector (0, -cos theta, 0, cos phi sin theta, sin phi sin theta) of the Hermitian part."""
    rho = math.hypot(A, B)
    phi = math.atan2(B, A)
    theta = math.atan2(rho, g)
    return np.array([0.0, -math.cos(theta), 0.0, math.cos(phi) * math.sin(theta), math.sin(phi) * math.sin(theta)],
                    dtype=complex)


def five_level_evolve(x: float, params: LossParams, step: Step, half_window: float = 40.0,
                      rtol: float = 1e-10, atol: float = 1e-12) -> float:
    """Brute-force survival: start in the dark state, evolve the five-level system, project on the final dark state."""
    step = Step(step)
    c = params.center(step)
    g, gam = params.g_T, params.gamma_T

    f = float(params.profile(step, x))
    W = params.Omega_T
    h0 = five_level_hamiltonian(0.0, 0.0, g, gam)
    m_a = five_level_hamiltonian(1.0, 0.0, 0.0, 0.0)
    m_b = five_level_hamiltonian(0.0, 1.0, 0.0, 0.0)

    def amps(tau):
        # scalar copy of _amplitudes; the RHS is called ~1e5 times
        if step is Step.ONE:
            return f * W * _inv_sqrt_1p_exp_scalar(tau), W * _inv_sqrt_1p_exp_scalar(-tau)
        c2 = 2 * params.tau1
        return W * _inv_sqrt_1p_exp_scalar(tau - c2), f * W * _inv_sqrt_1p_exp_scalar(c2 - tau)

    def rhs(tau, y):
        A, B = amps(tau)
        return -1j * ((h0 + A * m_a + B * m_b) @ y)

    t0, t1 = c - half_window, c + half_window
    y0 = five_level_dark_state(*amps(t0), g)
    sol = solve_ivp(rhs, (t0, t1), y0, method="DOP853", rtol=rtol, atol=atol)
    if sol.status != 0:
        raise RuntimeError(f"five-level integration failed at tau={sol.t[-1]:.6g}: {sol.message}")
    return float(abs(np.vdot(five_level_dark_state(*amps(t1), g), sol.y[:, -1])) ** 2)


def _radial_average(values: Callable, params: LossParams) -> float:
    """int x n(x) values(x) dx / int x n(x) dx over [0, inf)."""
    cfg = QuadratureConfig(rtol=1e-11, breakpoints=_kappa_breakpoints(params.a) + (params.xi,))
    dens = params.density
    num, _ = radial_quadrature(lambda x: x * dens(x) * values(x), cfg)
    den, _ = radial_quadrature(lambda x: x * dens(x), cfg)
    if not den > 0:
        raise ValueError("density is not normalizable")
    return num / den


def _pin_integrand(x, params: LossParams):
    s = (params.Omega_T * kappa(x, params.a)) ** 2
    return s / (params.g_T ** 2 + s)


def dark_overlap_pin(params: LossParams) -> float:
    """Density-weighted overlap of the initial photon state with the step-one dark state."""
    return _radial_average(lambda x: _pin_integrand(x, params), params)


def _survival_product(x, params: LossParams):
    return survival_closed_form(x, params, Step.ONE) * survival_closed_form(x, params, Step.TWO)


def survival_average(params: LossParams) -> float:
    """p = density average of e_1(x) e_2(x)."""
    return _radial_average(lambda x: _survival_product(x, params), params)


def flux_insertion_fidelity(params: LossParams) -> float:
    """F = p * p_in."""
    return survival_average(params) * dark_overlap_pin(params)


@dataclass
class FidelitySurface:
    Omega_T: np.ndarray
    g_T: np.ndarray
    p: np.ndarray
    p_in: np.ndarray

    @property
    def F(self) -> np.ndarray:
        return self.p * self.p_in

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["Omega_T", "g_T", "p", "p_in", "F"])
            for i, W in enumerate(self.Omega_T):
                for j, g in enumerate(self.g_T):
                    w.writerow([f"{v:.17g}" for v in (W, g, self.p[i, j], self.p_in[i, j], self.F[i, j])])
        return path


def fidelity_surface(Omega_T_values, g_T_values, gamma_T: float = 100.0, a: float = 0.005,
                     xi: float = 0.25, density: Callable | None = None) -> FidelitySurface:
    """p, p_in and F on the (Omega T, g T) grid."""
    W = np.asarray(Omega_T_values, dtype=float)
    G = np.asarray(g_T_values, dtype=float)
    p = np.empty((len(W), len(G)))
    pin = np.empty_like(p)
    for i, w in enumerate(W):
        for j, g in enumerate(G):
            prm = LossParams(w, g, gamma_T, a, xi, density)
            p[i, j] = survival_average(prm)
            pin[i, j] = dark_overlap_pin(prm)
    return FidelitySurface(W, G, p, pin)
