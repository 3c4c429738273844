"""Single-excitation dynamics of the two flux-insertion steps.

In the one-excitation (weak probe) sector the Heisenberg-Langevin system is
linear, so the operators are replaced by c-number amplitudes over

    a_l        cavity modes (n = 0)
    P_{n,l}    optical polarization |g>-|e>
    S_{n,l}    spin coherence |g>-|s>
    R_{n,l}    optical polarization |g>-|r>

and evolved as d(psi)/dtau = -i G(tau) psi with tau = t / T.  All rates
entering G are multiplied by T.  Noise operators are dropped.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .couplings import CouplingTable, ProfileKind, SpatialProfile, build_coupling_table, kappa


class Step(str, Enum):
    ONE = "One"
    TWO = "Two"


class IntegrationError(RuntimeError):
    pass


def _inv_sqrt_1p_exp(z):
    """1 / sqrt(1 + e^z) without overflow."""
    return np.exp(-0.5 * np.logaddexp(0.0, z))


def envelopes(step: Step, tau, tau1: float = 6.0):
    """Temporal parts (active, Omega_0) of the pulses, in units of the peak Rabi frequency."""
    step = Step(step)
    tau = np.asarray(tau, dtype=float)
    if step is Step.ONE:
        return _inv_sqrt_1p_exp(tau), _inv_sqrt_1p_exp(-tau)
    return _inv_sqrt_1p_exp(2 * tau1 - tau), _inv_sqrt_1p_exp(tau - 2 * tau1)


def envelope_derivatives(step: Step, tau, tau1: float = 6.0):
    """d/dtau of :func:`envelopes`."""
    step = Step(step)
    tau = np.asarray(tau, dtype=float)
    if step is Step.ONE:
        u, v = tau, -tau
        su, sv = 1.0, -1.0
    else:
        u, v = 2 * tau1 - tau, tau - 2 * tau1
        su, sv = -1.0, 1.0
    # d/dz (1+e^z)^{-1/2} = -(1/2) (1+e^z)^{-1/2} * sigmoid(z)
    sig = lambda z: 0.5 * (1.0 + np.tanh(0.5 * z))  # noqa: E731
    return (-0.5 * su * _inv_sqrt_1p_exp(u) * sig(u), -0.5 * sv * _inv_sqrt_1p_exp(v) * sig(v))


@dataclass(frozen=True)
class PulseSchedule:
    """Peak Rabi frequency, pulse length T, switch time tau1 and spatial profile of one step."""

    Omega_peak: float
    T: float
    tau1: float = 6.0
    step: Step = Step.ONE
    profile: SpatialProfile | None = None

    def __post_init__(self):
        object.__setattr__(self, "step", Step(self.step))
        if self.Omega_peak < 0 or not self.T > 0:
            raise ValueError("need Omega_peak >= 0 and T > 0")
        if self.profile is None:
            prof = (SpatialProfile(ProfileKind.KAPPA_STEP1, 0.01) if self.step is Step.ONE
                    else SpatialProfile(ProfileKind.KAPPA_TILDE_STEP2))
            object.__setattr__(self, "profile", prof)

    @property
    def window(self) -> tuple[float, float]:
        if self.step is Step.ONE:
            return (-self.tau1, self.tau1)
        return (self.tau1, 3 * self.tau1)


def pulse_amplitudes(schedule: PulseSchedule, tau, x):
    """(Omega_active, Omega_0) at dimensionless time tau and radius x = r / w0."""
    act, om0 = envelopes(schedule.step, tau, schedule.tau1)
    spatial = schedule.profile(x)
    return spatial * schedule.Omega_peak * act, schedule.Omega_peak * om0


@dataclass(frozen=True)
class StirapParams:
    """Cavity couplings g_l (scalar = same for every l), detuning, decay, sector and truncation."""

    g: float | Mapping[int, float]
    delta: float = 0.0
    gamma: float = 0.0
    m_sector: int = 0
    n_max: int = 5
    a: float = 0.01

    def __post_init__(self):
        if self.gamma < 0 or self.n_max < 0 or self.m_sector < 0:
            raise ValueError("gamma, n_max and m_sector must be non-negative")
        gs = self.g.values() if isinstance(self.g, Mapping) else [self.g]
        if any(not v > 0 for v in gs):
            raise ValueError("cavity couplings must be positive")

    def g_of(self, l: int) -> float:
        if isinstance(self.g, Mapping):
            return float(self.g[l])
        return float(self.g)


def cavity_label(l: int) -> str:
    return f"a_{l}"


def atom_label(kind: str, n: int, l: int) -> str:
    return f"{kind}_{n}_{l}"


@dataclass
class SingleExcitationState:
    """Amplitudes over named modes in the one-excitation sector."""

    labels: tuple[str, ...]
    amplitudes: np.ndarray

    def __post_init__(self):
        self.labels = tuple(self.labels)
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (len(self.labels),):
            raise ValueError("amplitude vector does not match labels")

    @classmethod
    def single(cls, labels: Sequence[str], occupied: str) -> "SingleExcitationState":
        amps = np.zeros(len(labels), complex)
        amps[list(labels).index(occupied)] = 1.0
        return cls(tuple(labels), amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def amplitude(self, label: str) -> complex:
        return complex(self.amplitudes[self.labels.index(label)])

    def population(self, label: str) -> float:
        return abs(self.amplitude(label)) ** 2

    def extended(self, labels: Sequence[str]) -> "SingleExcitationState":
        """Same state on a label set containing the current one (new modes empty)."""
        new = list(self.labels) + [lb for lb in labels if lb not in self.labels]
        amps = np.zeros(len(new), complex)
        amps[: len(self.labels)] = self.amplitudes
        return SingleExcitationState(tuple(new), amps)


@dataclass
class StepGenerator:
    """G(tau) = static + active(tau) * M_active + omega0(tau) * M_0 (all dimensionless)."""

    labels: tuple[str, ...]
    static: np.ndarray
    m_active: np.ndarray
    m_omega0: np.ndarray
    pulse: Callable[[float], tuple[float, float]]
    meta: dict = field(default_factory=dict)

    def __call__(self, tau: float) -> np.ndarray:
        act, om0 = self.pulse(tau)
        return self.static + act * self.m_active + om0 * self.m_omega0

    @property
    def dim(self) -> int:
        return len(self.labels)


def _step_labels(step: Step, m: int, n_max: int):
    if step is Step.ONE:
        low, high, p_l = 3 * m, 3 * m + 1, 3 * m
    else:
        low, high, p_l = 3 * m + 1, 3 * m + 3, 3 * m + 3
    s_l = 3 * m + 1
    labels = [cavity_label(low), cavity_label(high)]
    labels += [atom_label("P", n, p_l) for n in range(n_max + 1)]
    labels += [atom_label("S", n, s_l) for n in range(n_max + 1)]
    labels += [atom_label("R", n, s_l) for n in range(n_max + 1)]
    return labels, low, high, p_l, s_l


def _build_generator(step: Step, params: StirapParams, table: CouplingTable, schedule: PulseSchedule,
                     drop_residuals: bool) -> StepGenerator:
    m, nm = params.m_sector, params.n_max
    if table.n_max < nm or table.m_max < m:
        raise ValueError(f"coupling table (m_max={table.m_max}, n_max={table.n_max}) "
                         f"does not cover sector {m} with n_max={nm}")
    labels, low, high, p_l, s_l = _step_labels(step, m, nm)
    idx = {lb: i for i, lb in enumerate(labels)}
    dim = len(labels)
    T = schedule.T
    static = np.zeros((dim, dim), complex)
    m_act = np.zeros((dim, dim), complex)
    m_om0 = np.zeros((dim, dim), complex)
    # the P mode couples to the cavity mode sharing its l; R couples to l = 3m+1
    g_p = params.g_of(p_l) * T
    g_r = params.g_of(s_l) * T
    a_p = cavity_label(p_l)
    a_r = cavity_label(s_l)
    loss = (params.delta - 1j * params.gamma) * T
    for n in range(nm + 1):
        P, S, R = idx[atom_label("P", n, p_l)], idx[atom_label("S", n, s_l)], idx[atom_label("R", n, s_l)]
        static[P, P] = loss
        static[R, R] = loss
        m_om0[S, R] = m_om0[R, S] = -1.0
        for n2 in range(nm + 1):
            chi = table.values[m, n, n2]  # row = P index n, col = S index n2
            if drop_residuals and n2 == 0 and n > 0:
                chi = 0.0
            S2 = idx[atom_label("S", n2, s_l)]
            m_act[P, S2] = -chi
            m_act[S2, P] = -np.conj(chi)
    P0, R0 = idx[atom_label("P", 0, p_l)], idx[atom_label("R", 0, s_l)]
    static[idx[a_p], P0] = static[P0, idx[a_p]] = -g_p
    static[idx[a_r], R0] = static[R0, idx[a_r]] = -g_r
    peak = schedule.Omega_peak * T
    tau1 = schedule.tau1

    def pulse(tau):
        act, om0 = envelopes(step, tau, tau1)
        return peak * float(act), peak * float(om0)

    meta = {"step": step.value, "m": m, "n_max": nm, "low": cavity_label(low), "high": cavity_label(high)}
    return StepGenerator(tuple(labels), static, m_act, m_om0, pulse, meta)


def build_step1_generator(params: StirapParams, table: CouplingTable, schedule: PulseSchedule,
                          drop_residuals: bool = False) -> StepGenerator:
    """Generator of the first step (a_{3m} -> a_{3m+1}).

    With ``n_max = 0`` (or ``drop_residuals``) this is the reduced system in
    which the S_0 -> P_{n>0} residual couplings are neglected.
    """
    if table.profile.kind is not ProfileKind.KAPPA_STEP1:
        raise ValueError("step one needs a KappaStep1 coupling table")
    if not math.isclose(table.a, params.a, rel_tol=1e-12):
        raise ValueError(f"table cutoff a={table.a} differs from params a={params.a}")
    return _build_generator(Step.ONE, params, table, schedule, drop_residuals)


def build_step2_generator(params: StirapParams, table: CouplingTable, schedule: PulseSchedule) -> StepGenerator:
    """Generator of the second step (a_{3m+1} -> a_{3m+3}) with the x^2 profile."""
    if table.profile.kind is not ProfileKind.KAPPA_TILDE_STEP2:
        raise ValueError("step two needs a KappaTildeStep2 coupling table")
    return _build_generator(Step.TWO, params, table, schedule, False)


def dark_polariton(step: Step, m: int, Omega_active: float, Omega_0: float, g_low: float, g_high: float) -> np.ndarray:
    """Normalized dark-state polariton over (a_low, a_high, S_{0,3m+1}).

    Step one: a_low = a_{3m}, a_high = a_{3m+1}, g_low = g_{3m}, g_high = g_{3m+1}.
    Step two: a_low = a_{3m+1}, a_high = a_{3m+3}, g_low = g_{3m+1}, g_high = g_{3m+3}.
    """
    step = Step(step)
    if step is Step.ONE:
        v = np.array([g_high * math.sqrt(2.0 / (3 * m + 1)) * Omega_active, g_low * Omega_0, -g_low * g_high], complex)
    else:
        ratio = math.sqrt(math.exp(math.lgamma(3 * m + 4) - math.lgamma(3 * m + 2)))
        v = np.array([g_high * Omega_0, g_low * 0.5 * Omega_active * ratio, -g_high * g_low], complex)
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise ValueError("dark polariton undefined for all-zero couplings")
    return v / nrm


def dark_state_vector(generator: StepGenerator, tau: float, params: StirapParams) -> SingleExcitationState:
    """Instantaneous dark polariton of a step embedded in the generator's labels."""
    step = Step(generator.meta["step"])
    m = generator.meta["m"]
    act, om0 = generator.pulse(tau)
    if step is Step.ONE:
        g_low, g_high = params.g_of(3 * m), params.g_of(3 * m + 1)
    else:
        g_low, g_high = params.g_of(3 * m + 1), params.g_of(3 * m + 3)
    d = dark_polariton(step, m, act, om0, g_low, g_high)
    amps = np.zeros(generator.dim, complex)
    amps[generator.labels.index(generator.meta["low"])] = d[0]
    amps[generator.labels.index(generator.meta["high"])] = d[1]
    amps[generator.labels.index(atom_label("S", 0, 3 * m + 1))] = d[2]
    return SingleExcitationState(generator.labels, amps)


@dataclass
class SimulationTrace:
    """Amplitudes of every labelled mode on a time grid plus run metadata."""

    times: np.ndarray
    labels: tuple[str, ...]
    amplitudes: np.ndarray
    metadata: dict = field(default_factory=dict)

    def column(self, label: str) -> np.ndarray:
        return self.amplitudes[:, self.labels.index(label)]

    def population(self, label: str) -> np.ndarray:
        return np.abs(self.column(label)) ** 2

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.amplitudes, axis=1)

    def final_state(self) -> SingleExcitationState:
        return SingleExcitationState(self.labels, self.amplitudes[-1].copy())

    def state_at(self, i: int) -> SingleExcitationState:
        return SingleExcitationState(self.labels, self.amplitudes[i].copy())

    @staticmethod
    def concatenate(traces: Sequence["SimulationTrace"], metadata: dict | None = None) -> "SimulationTrace":
        labels: list[str] = []
        for tr in traces:
            labels += [lb for lb in tr.labels if lb not in labels]
        times, rows = [], []
        for tr in traces:
            pos = [labels.index(lb) for lb in tr.labels]
            block = np.zeros((len(tr.times), len(labels)), complex)
            block[:, pos] = tr.amplitudes
            times.append(tr.times)
            rows.append(block)
        return SimulationTrace(np.concatenate(times), tuple(labels), np.vstack(rows), metadata or {})

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            header = ["t"]
            for lb in self.labels:
                header += [f"re_{lb}", f"im_{lb}"]
            header += [f"pop_{lb}" for lb in self.labels]
            w.writerow(header)
            for t, row in zip(self.times, self.amplitudes):
                out = [f"{t:.17g}"]
                for z in row:
                    out += [f"{z.real:.17g}", f"{z.imag:.17g}"]
                out += [f"{abs(z) ** 2:.17g}" for z in row]
                w.writerow(out)
        return path


def integrate(generator: StepGenerator, initial: SingleExcitationState, t_grid,
              rtol: float = 1e-10, atol: float = 1e-12) -> SimulationTrace:
    """Evolve ``initial`` under ``generator`` and sample on ``t_grid``.

    Modes of ``initial`` that the generator does not know are carried along
    unchanged.  Uses an adaptive 8th-order Runge-Kutta (DOP853).
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) < 1 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    state = initial.extended(generator.labels)
    sel = np.array([state.labels.index(lb) for lb in generator.labels])
    y0 = state.amplitudes[sel]
    out = np.repeat(state.amplitudes[None, :], len(t_grid), axis=0)
    if len(t_grid) > 1:
        if not np.any(generator.static) and not np.any(generator.m_active) and not np.any(generator.m_omega0):
            ys = np.repeat(y0[:, None], len(t_grid), axis=1)
        else:
            sol = solve_ivp(lambda t, y: -1j * (generator(t) @ y), (t_grid[0], t_grid[-1]), y0,
                            method="DOP853", t_eval=t_grid, rtol=rtol, atol=atol)
            if sol.status != 0:
                t_fail = sol.t[-1] if len(sol.t) else t_grid[0]
                raise IntegrationError(f"integration failed at tau={t_fail:.6g}: {sol.message}")
            ys = sol.y
        out[:, sel] = ys.T
    return SimulationTrace(t_grid, state.labels, out, dict(generator.meta))


@lru_cache(maxsize=32)
def _cached_tables(a: float, m_max: int, n_max: int):
    t1 = build_coupling_table(SpatialProfile(ProfileKind.KAPPA_STEP1, a), m_max, n_max)
    t2 = build_coupling_table(SpatialProfile(ProfileKind.KAPPA_TILDE_STEP2), m_max, n_max)
    return t1, t2


def coupling_tables(params: StirapParams, m_max: int | None = None) -> tuple[CouplingTable, CouplingTable]:
    """Cached (step one, step two) tables covering the parameter set."""
    return _cached_tables(float(params.a), m_max if m_max is not None else params.m_sector, params.n_max)


def _with_sector(params: StirapParams, m: int) -> StirapParams:
    return StirapParams(params.g, params.delta, params.gamma, m, params.n_max, params.a)


def run_step(step: Step, params: StirapParams, Omega: float, T: float, state: SingleExcitationState | None = None,
             tau1: float = 6.0, n_points: int = 241, tables=None, drop_residuals: bool = False) -> SimulationTrace:
    """Integrate one step over its default window."""
    step = Step(step)
    t1, t2 = tables or coupling_tables(params)
    if step is Step.ONE:
        sched = PulseSchedule(Omega, T, tau1, Step.ONE, t1.profile)
        gen = build_step1_generator(params, t1, sched, drop_residuals)
        start = cavity_label(3 * params.m_sector)
    else:
        sched = PulseSchedule(Omega, T, tau1, Step.TWO, t2.profile)
        gen = build_step2_generator(params, t2, sched)
        start = cavity_label(3 * params.m_sector + 1)
    if state is None:
        state = SingleExcitationState.single(gen.labels, start)
    lo, hi = sched.window
    return integrate(gen, state, np.linspace(lo, hi, n_points))


def run_flux_insertion(params: StirapParams, Omega: float, T: float, n_cycles: int = 1, tau1: float = 6.0,
                       n_points: int = 241, initial: SingleExcitationState | None = None) -> SimulationTrace:
    """Chain step one and step two ``n_cycles`` times starting in sector ``params.m_sector``.

    The photon starts in a_{3m}; each cycle moves it up by three units of
    angular momentum.  Per-cycle transfer efficiencies |a_target|^2 and the
    intermediate populations at t1 are stored in ``metadata``.  Trace time
    is tau shifted by 4 tau1 per cycle.
    """
    if n_cycles < 1:
        raise ValueError("n_cycles must be >= 1")
    tables = coupling_tables(params, params.m_sector + n_cycles - 1)
    state = initial
    parts, eff, mid = [], [], []
    for k in range(n_cycles):
        p = _with_sector(params, params.m_sector + k)
        tr1 = run_step(Step.ONE, p, Omega, T, state, tau1, n_points, tables)
        mid.append(float(tr1.population(cavity_label(3 * p.m_sector + 1))[-1]))
        tr2 = run_step(Step.TWO, p, Omega, T, tr1.final_state(), tau1, n_points, tables)
        eff.append(float(tr2.population(cavity_label(3 * p.m_sector + 3))[-1]))
        shift = 4 * tau1 * k
        for tr in (tr1, tr2):
            tr.times = tr.times + shift
        # step two starts where step one ends; keep that sample once
        parts += [tr1, _drop_first(tr2)]
        state = tr2.final_state()
    meta = {"efficiencies": eff, "population_at_t1": mid, "n_cycles": n_cycles, "tau1": tau1,
            "m_start": params.m_sector, "n_max": params.n_max, "a": params.a}
    return SimulationTrace.concatenate(parts, meta)


def _drop_first(tr: SimulationTrace) -> SimulationTrace:
    return SimulationTrace(tr.times[1:], tr.labels, tr.amplitudes[1:], tr.metadata)


def transfer_at_t1(params: StirapParams, Omega: float, T: float, tau1: float = 6.0) -> float:
    """Population of a_{3m+1} at the end of step one."""
    tr = run_step(Step.ONE, params, Omega, T, None, tau1, n_points=2)
    return float(tr.population(cavity_label(3 * params.m_sector + 1))[-1])


def convergence_report(params: StirapParams, Omega: float, T: float, extra: int = 2, tau1: float = 6.0) -> dict:
    """Compare cavity amplitudes of a full cycle at n_max and n_max + extra."""
    base = run_flux_insertion(params, Omega, T, 1, tau1)
    finer_params = StirapParams(params.g, params.delta, params.gamma, params.m_sector, params.n_max + extra, params.a)
    finer = run_flux_insertion(finer_params, Omega, T, 1, tau1)
    cav = [lb for lb in base.labels if lb.startswith("a_")]
    diff = max(float(np.max(np.abs(base.column(lb) - finer.column(lb)))) for lb in cav)
    return {"n_max": params.n_max, "n_max_check": params.n_max + extra, "max_cavity_amplitude_diff": diff}
