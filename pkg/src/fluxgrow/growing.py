"""Growing a photonic Laughlin state by alternating flux insertion and pumping.

The flux insertion is the effective rapid-adiabatic-passage scheme: the
first Landau manifold (l = 3m+1) is swept through resonance with the lowest
one (l = 3m) while a weak hopping moves photons 3m -> 3m+1 (step i, first
half of the sweep) and then 3m+1 -> 3m+3 (step ii, second half).  One sweep
adds 3 units of angular momentum per photon; two sweeps turn |LN, N> into
the two-quasi-hole state, which a resonant pump on the l = 0 mode then
converts into |LN, N+1>.

Energies are in units chosen by the caller (V0 = 1 for the defaults), times
in the inverse of those units, hbar = 1.  Everything is written in the frame
rotating at the lowest-manifold frequency.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .fqh import (FockBasis, FockVector, SparseOperator, build_hint, build_operator, laughlin_angular_momentum,
                  laughlin_state, many_body_gap, number_operator, pump_overlap, quasihole_state)


class SweepPhase(str, Enum):
    STEP_I = "StepI"
    STEP_II = "StepII"


class AdiabaticityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ProtocolConfig:
    """Parameters of the growing protocol (defaults: V0 = 1 units).

    ``dt`` is the Magnus step used during sweeps; ``samples_per_stage`` sets
    the resolution of the recorded observables.  The basis holds up to
    ``N_target + 1`` photons so that pump leakage past the target is resolved.
    """

    Delta0: float = 10.0
    V0: float = 1.0
    Omega_p: float = 0.05
    g_a: float = 0.2
    g_b: float = 0.2
    tau_f: float = 5000.0
    N_target: int = 3
    lll_modes: tuple[int, ...] | None = None
    first_modes: tuple[int, ...] | None = None
    gamma_eff: float = 0.0
    Lambda_N: tuple[float, ...] = ()
    Delta_LN: float | None = None
    ramp_fraction: float = 0.0
    dt: float = 1.0
    samples_per_stage: int = 100
    max_photons: int | None = None

    def __post_init__(self):
        for name in ("Delta0", "V0", "Omega_p", "g_a", "g_b", "tau_f", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.N_target < 1:
            raise ValueError("N_target must be >= 1")
        if self.gamma_eff < 0:
            raise ValueError("gamma_eff must be non-negative")
        if not 0.0 <= self.ramp_fraction < 0.5:
            raise ValueError("ramp_fraction must lie in [0, 0.5)")
        if self.samples_per_stage < 1:
            raise ValueError("samples_per_stage must be >= 1")
        l_max = 6 * (self.N_target - 1) + 3
        if self.lll_modes is None:
            object.__setattr__(self, "lll_modes", tuple(range(0, l_max + 1, 3)))
        if self.first_modes is None:
            object.__setattr__(self, "first_modes", tuple(range(1, l_max + 1, 3)))
        if any(l % 3 != 0 for l in self.lll_modes) or any(l % 3 != 1 for l in self.first_modes):
            raise ValueError("lowest-manifold modes need l = 0 mod 3, first-manifold modes l = 1 mod 3")
        if 0 not in self.lll_modes:
            raise ValueError("the pumped l = 0 mode must be in the basis")
        mp = self.max_photons if self.max_photons is not None else self.N_target + 1
        if mp < self.N_target:
            raise ValueError("max_photons must be >= N_target")
        object.__setattr__(self, "max_photons", mp)

    def delta_of_t(self, t):
        """Detuning of the first manifold, -Delta0 + (4 Delta0 / tau_f) |t - tau_f / 2|."""
        return -self.Delta0 + 4.0 * self.Delta0 / self.tau_f * np.abs(np.asarray(t, dtype=float) - 0.5 * self.tau_f)

    def validity_flags(self, Delta_LN: float) -> dict:
        """Ratios behind the three slowness/weakness conditions; ``ok`` means ratio < 1."""
        out = {
            "g_over_gap": max(self.g_a, self.g_b) / Delta_LN,
            "pump_over_V0": self.Omega_p / self.V0,
            "adiabatic_time_over_tau_f": 4.0 * self.Delta0 / Delta_LN ** 2 / self.tau_f,
        }
        return {k: {"ratio": v, "ok": bool(v < 1.0)} for k, v in out.items()}


def fidelity_scaling(N: int, gamma_eff: float, tau: float, Delta_LN: float, Lambda_N: float) -> float:
    """exp[-(N/2)((1/2) gamma_eff tau (N+1) + Lambda_N^2 / (Delta_LN tau)^2)]."""
    if N < 0 or gamma_eff < 0 or not tau > 0 or not Delta_LN > 0:
        raise ValueError("need N, gamma_eff >= 0 and tau, Delta_LN > 0")
    return math.exp(-0.5 * N * (0.5 * gamma_eff * tau * (N + 1) + (Lambda_N / (Delta_LN * tau)) ** 2))


def optimal_tau(N: int, gamma_eff: float, Delta_LN: float, Lambda_N: float) -> float:
    """Stationary point (4 Lambda^2 / (gamma (N+1) Delta^2))^{1/3} of :func:`fidelity_scaling` in tau."""
    if not (gamma_eff > 0 and Lambda_N != 0):
        raise ValueError("an interior optimum needs gamma_eff > 0 and Lambda_N != 0")
    return (4.0 * Lambda_N ** 2 / (gamma_eff * (N + 1) * Delta_LN ** 2)) ** (1.0 / 3.0)


# ---------------------------------------------------------------- operators

def mixed_basis(modes: Sequence[int], max_photons: int) -> FockBasis:
    """All Fock states with 0..max_photons photons over ``modes``."""
    modes = tuple(sorted(modes))
    rows = []
    for N in range(max_photons + 1):
        rows.extend(FockBasis.for_sector(modes, N).occ.tolist())
    return FockBasis.from_occupations(modes, rows)


def _modes_of(basis: FockBasis, residue: int) -> tuple[int, ...]:
    return tuple(l for l in basis.modes if l % 3 == residue)


def build_h0_rotating(basis: FockBasis, Delta: float) -> SparseOperator:
    """Delta times the number of first-manifold photons."""
    first = _modes_of(basis, 1)
    if not first:
        return SparseOperator(sp.csr_matrix((basis.dim, basis.dim)), basis)
    n1 = number_operator(basis, first)
    return SparseOperator((Delta * n1.matrix).tocsr(), basis)


def build_hc(basis: FockBasis, g_a: float, g_b: float, phase: SweepPhase) -> SparseOperator:
    """Inter-manifold hopping: g_a(a+_{3m} a_{3m+1} + h.c.) or g_b(a+_{3m+1} a_{3m+3} + h.c.)."""
    phase = SweepPhase(phase)
    modes = set(basis.modes)
    terms = []
    for l in sorted(modes):
        if l % 3 != 0:
            continue
        if phase is SweepPhase.STEP_I:
            lo, hi, g = l, l + 1, g_a
        else:
            lo, hi, g = l + 1, l + 3, g_b
        if lo in modes and hi in modes:
            terms += [((lo, None, hi, None), g), ((hi, None, lo, None), g)]
    if not terms:
        raise ValueError(f"basis has no mode pairs for {phase.value}")
    return build_operator(basis, terms)


def build_pump(basis: FockBasis, Omega_p: float) -> SparseOperator:
    """Omega_p (a+_0 + a_0)."""
    if 0 not in basis.modes:
        raise ValueError("pump needs the l = 0 mode")
    return build_operator(basis, [((0, None, None, None), Omega_p), ((None, None, 0, None), Omega_p)])


# ---------------------------------------------------------------- propagation

_SQ3 = math.sqrt(3.0)


def _expm_herm(K: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(K)
    return (v * np.exp(-1j * w)) @ v.conj().T


def propagate(psi: np.ndarray, static: sp.spmatrix, parts: Sequence[tuple[Callable[[float], float], sp.spmatrix]],
              t0: float, t1: float, dt: float, n_samples: int):
    """Evolve under H(t) = static + sum_k f_k(t) B_k on [t0, t1].

    The Hilbert space is split into the connected components of the union
    sparsity graph (these are invariant), and each occupied component is
    stepped with the two-point fourth-order Magnus integrator, the
    exponential taken exactly by diagonalization.  Returns (times, states) at ``n_samples + 1`` equally
    spaced instants including both ends.
    """
    psi = np.asarray(psi, dtype=complex)
    pattern = abs(static).tocsr()
    for _, B in parts:
        pattern = pattern + abs(B)
    n_comp, labels = connected_components(pattern, directed=False)
    n_steps = max(n_samples, int(math.ceil((t1 - t0) / dt / n_samples)) * n_samples)
    h = (t1 - t0) / n_steps
    stride = n_steps // n_samples
    times = t0 + h * stride * np.arange(n_samples + 1)
    out = np.zeros((n_samples + 1, len(psi)), dtype=complex)
    out[0] = psi
    static = static.tocsr()
    parts = [(f, B.tocsr()) for f, B in parts]
    for c in range(n_comp):
        idx = np.nonzero(labels == c)[0]
        y = psi[idx]
        if not np.any(np.abs(y) > 1e-15):
            continue
        A = static[idx][:, idx].toarray()
        Bs = [(f, B[idx][:, idx].toarray()) for f, B in parts]
        Bs = [(f, B) for f, B in Bs if np.any(B)]
        if not Bs:
            # time-independent: exact exponentials at the sample instants
            w, v = np.linalg.eigh(A)
            coef = v.conj().T @ y
            for s in range(1, n_samples + 1):
                out[s, idx] = v @ (np.exp(-1j * w * (times[s] - t0)) * coef)
            continue
        for s in range(1, n_samples + 1):
            for k in range(stride):
                t = t0 + h * ((s - 1) * stride + k)
                ta, tb = t + h * (0.5 - _SQ3 / 6), t + h * (0.5 + _SQ3 / 6)
                H1 = A + sum(f(ta) * B for f, B in Bs)
                H2 = A + sum(f(tb) * B for f, B in Bs)
                K = 0.5 * h * (H1 + H2) + 1j * (_SQ3 / 12.0) * h * h * (H1 @ H2 - H2 @ H1)
                y = _expm_herm(K) @ y
            out[s, idx] = y
    return times, out


# ---------------------------------------------------------------- system

@dataclass
class ProtocolTrace:
    """Observables on a time grid, stage boundaries and per-stage notes."""

    times: np.ndarray
    observables: dict[str, np.ndarray]
    stage_states: list[np.ndarray] = field(default_factory=list)
    stages: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def final_state(self) -> np.ndarray:
        return self.stage_states[-1]

    def final(self, name: str) -> float:
        return float(self.observables[name][-1])

    @staticmethod
    def concatenate(traces: Sequence["ProtocolTrace"], metadata: dict | None = None) -> "ProtocolTrace":
        names = list(traces[0].observables)
        times, obs = [], {k: [] for k in names}
        states, stages = [], []
        for j, tr in enumerate(traces):
            sl = slice(1, None) if j else slice(None)
            times.append(tr.times[sl])
            for k in names:
                obs[k].append(tr.observables[k][sl])
            states += tr.stage_states
            stages += tr.stages
        return ProtocolTrace(np.concatenate(times), {k: np.concatenate(v) for k, v in obs.items()},
                             states, stages, metadata or {})

    def to_csv(self, path) -> Path:
        path = Path(path)
        names = list(self.observables)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + names)
            for i, t in enumerate(self.times):
                w.writerow([f"{t:.17g}"] + [f"{self.observables[k][i]:.17g}" for k in names])
        return path

    def summary(self) -> dict:
        return {"final": {k: float(v[-1]) for k, v in self.observables.items()},
                "stages": self.stages, **self.metadata}

    def summary_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.summary(), indent=2, sort_keys=True))
        return path


class GrowingSystem:
    """Basis, operators and reference states shared by all protocol stages."""

    def __init__(self, config: ProtocolConfig):
        self.config = config
        modes = tuple(sorted(set(config.lll_modes) | set(config.first_modes)))
        self.basis = mixed_basis(modes, config.max_photons)
        self.h_int = build_hint(self.basis, config.V0).matrix
        self.n_first = number_operator(self.basis, config.first_modes).matrix
        self.hc = {ph: build_hc(self.basis, config.g_a, config.g_b, ph).matrix for ph in SweepPhase}
        self.pump = build_pump(self.basis, config.Omega_p).matrix
        self.N = self.basis.particle_numbers()
        self.L = self.basis.angular_momenta()
        self.n_first_diag = self.n_first.diagonal().real

    def vector(self, fv: FockVector) -> np.ndarray:
        return fv.to_array(self.basis)

    def vacuum(self) -> np.ndarray:
        return self.vector(FockVector({(): 1.0}))

    @cached_property
    def references(self) -> dict[str, np.ndarray]:
        """Named reference states whose populations are tracked."""
        refs = {}
        for l in (0, 3, 6):
            if l in self.basis.modes:
                refs[f"p_{l}"] = self.vector(FockVector({(l,): 1.0}))
        lmax = max(self.basis.modes)
        for N in range(2, self.config.N_target + 1):
            refs[f"p_LN_{N}"] = self.vector(laughlin_state(N))
        for N in range(1, self.config.N_target):
            for m in (1, 2):
                qh = quasihole_state(N, m)
                if max(qh.support()) <= lmax:
                    refs[f"p_{m}qh_{N}"] = self.vector(qh)
        return refs

    def observables(self, states: np.ndarray) -> dict[str, np.ndarray]:
        states = np.atleast_2d(states)
        pops = np.abs(states) ** 2
        obs = {k: np.abs(states @ v.conj()) ** 2 for k, v in self.references.items()}
        obs["mean_N"] = pops @ self.N
        obs["mean_L"] = pops @ self.L
        obs["norm"] = np.sqrt(pops.sum(axis=1))
        obs["E_int"] = np.real(np.einsum("ij,ij->i", states.conj(), (self.h_int @ states.T).T))
        return obs

    def _trace(self, times, states, stage: dict) -> ProtocolTrace:
        return ProtocolTrace(times, self.observables(states), [states[-1].copy()], [stage])

    def _g_envelope(self, t: float, t_on: float, t_off: float) -> float:
        frac = self.config.ramp_fraction
        if frac == 0.0:
            return 1.0
        ramp = frac * self.config.tau_f
        if t - t_on < ramp:
            return math.sin(0.5 * math.pi * (t - t_on) / ramp) ** 2
        if t_off - t < ramp:
            return math.sin(0.5 * math.pi * (t_off - t) / ramp) ** 2
        return 1.0

    def flux_sweep(self, psi: np.ndarray, t_start: float = 0.0) -> ProtocolTrace:
        """One full detuning sweep: step i on [0, tau_f/2), step ii on [tau_f/2, tau_f]."""
        cfg = self.config
        half = 0.5 * cfg.tau_f
        n = max(1, cfg.samples_per_stage // 2)
        traces = []
        y = psi
        for phase, (a, b) in ((SweepPhase.STEP_I, (0.0, half)), (SweepPhase.STEP_II, (half, cfg.tau_f))):
            parts = [(lambda t: float(cfg.delta_of_t(t)), self.n_first)]
            if cfg.ramp_fraction:
                parts.append((lambda t, a=a, b=b: self._g_envelope(t, a, b), self.hc[phase]))
                static = self.h_int
            else:
                static = self.h_int + self.hc[phase]
            times, states = propagate(y, static, parts, a, b, cfg.dt, n)
            y = states[-1]
            traces.append(self._trace(times + t_start, states, {"stage": f"sweep_{phase.value}"}))
        tr = ProtocolTrace.concatenate(traces)
        tr.stage_states = [y.copy()]
        pops = np.abs(y) ** 2
        target = float(pops[self.n_first_diag == 0].sum())
        stage = {"stage": "flux_sweep", "duration": cfg.tau_f, "population_back_in_lowest_manifold": target}
        if target < 0.9:
            msg = f"flux sweep left {1 - target:.3f} of the population outside the lowest manifold"
            warnings.warn(msg, AdiabaticityWarning, stacklevel=2)
            stage["warning"] = msg
        tr.stages = [stage]
        return tr

    def pump_pulse(self, psi: np.ndarray, N_current: int, t_start: float = 0.0) -> ProtocolTrace:
        """Resonant pump pi-pulse of duration pi / (2 Omega_p <LN,N+1|a+_0|2qh,N>)."""
        cfg = self.config
        overlap = pump_overlap(N_current)
        tau_p = math.pi / (2.0 * cfg.Omega_p * overlap)
        stage = {"stage": "pump", "N": N_current, "tau_p": tau_p, "pump_overlap": overlap}
        if N_current > 0:
            qh = self.vector(quasihole_state(N_current, 2))
            pre = float(abs(np.vdot(qh, psi)) ** 2)
            stage["pre_pulse_2qh_population"] = pre
            if pre < 0.9:
                msg = f"pump started with only {pre:.3f} population in the 2-quasi-hole state"
                warnings.warn(msg, AdiabaticityWarning, stacklevel=2)
                stage["warning"] = msg
        # after a full sweep the first manifold sits at +Delta0
        static = self.h_int + cfg.Delta0 * self.n_first + self.pump
        times, states = propagate(psi, static, [], 0.0, tau_p, tau_p, max(1, cfg.samples_per_stage // 4))
        tr = self._trace(times + t_start, states, stage)
        return tr


def run_growing_protocol(config: ProtocolConfig, system: GrowingSystem | None = None) -> ProtocolTrace:
    """Pump from the vacuum, then (two sweeps + pump) until N_target photons."""
    sysm = system or GrowingSystem(config)
    psi = sysm.vacuum()
    t = 0.0
    traces = [sysm.pump_pulse(psi, 0, t)]
    psi, t = traces[-1].final_state, traces[-1].times[-1]
    for N in range(1, config.N_target):
        for _ in range(2):
            traces.append(sysm.flux_sweep(psi, t))
            psi, t = traces[-1].final_state, traces[-1].times[-1]
        traces.append(sysm.pump_pulse(psi, N, t))
        psi, t = traces[-1].final_state, traces[-1].times[-1]
    gap = config.Delta_LN
    if gap is None:
        gap = many_body_gap(max(config.N_target, 2), V0=config.V0)
    meta = {"config": _config_dict(config), "Delta_LN": gap, "validity": config.validity_flags(gap),
            "basis_dim": sysm.basis.dim, "target_L": laughlin_angular_momentum(config.N_target)}
    tr = ProtocolTrace.concatenate(traces, meta)
    fin = tr.stage_states[-1]
    tr.metadata["final_fidelity"] = float(abs(np.vdot(sysm.vector(laughlin_state(config.N_target)), fin)) ** 2)
    tr.metadata["final_mean_L"] = float(np.abs(fin) ** 2 @ sysm.L)
    tr.metadata["final_norm_drift"] = float(abs(np.linalg.norm(fin) - 1.0))
    return tr


def _config_dict(config: ProtocolConfig) -> dict:
    d = asdict(config)
    for k in ("lll_modes", "first_modes", "Lambda_N"):
        d[k] = list(d[k]) if d[k] is not None else None
    return d
