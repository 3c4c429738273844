"""Coupling matrix elements between collective atomic Laguerre-Gauss modes.

Index convention, used everywhere in this package: a coupling entry is
addressed as ``(sector m, row, col)`` where ``row`` is the radial index of
the optical-polarization mode P (angular momentum 3m in step one, 3m+3 in
step two) and ``col`` is the radial index of the spin-coherence mode S
(angular momentum 3m+1).  ``chi_numeric(m, n, n_prime)`` takes the S index
first, so ``table[m, n_prime, n] == chi_numeric(m, n, n_prime)``.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .modes import QuadratureConfig, laguerre, radial_quadrature

_LOG2 = math.log(2.0)


class ProfileKind(str, Enum):
    KAPPA_STEP1 = "KappaStep1"
    KAPPA_TILDE_STEP2 = "KappaTildeStep2"


@dataclass(frozen=True)
class SpatialProfile:
    """Radial profile of the OAM-carrying drive: kappa(x) for step one, x^2 for step two."""

    kind: ProfileKind
    a: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ProfileKind(self.kind))
        if self.kind is ProfileKind.KAPPA_STEP1:
            if self.a is None or not self.a > 0:
                raise ValueError("KappaStep1 needs a cutoff a > 0")
        elif self.a is not None:
            raise ValueError("KappaTildeStep2 takes no cutoff")

    def __call__(self, x):
        if self.kind is ProfileKind.KAPPA_STEP1:
            return kappa(x, self.a)
        return np.asarray(x, dtype=float) ** 2


def kappa(x, a: float):
    """Step-one drive profile x^2 / (a^3 + x^3)."""
    if not a > 0:
        raise ValueError("a must be positive")
    x = np.asarray(x, dtype=float)
    out = x * x / (a ** 3 + x ** 3)
    return out if out.ndim else float(out)


def _kappa_breakpoints(a: float) -> tuple[float, ...]:
    return tuple(a * s for s in (0.25, 0.5, 1.0, 2.0, 4.0, 16.0, 64.0, 256.0))


def _log_chi_prefactor(m: int, n: int, n_prime: int) -> float:
    # 2^{3m+2} sqrt(2 n! n'! / ((3m+1+n)! (3m+n')!))
    return (3 * m + 2) * _LOG2 + 0.5 * (
        _LOG2 + math.lgamma(n + 1) + math.lgamma(n_prime + 1)
        - math.lgamma(3 * m + 2 + n) - math.lgamma(3 * m + n_prime + 1)
    )


def chi_numeric(m: int, n: int, n_prime: int, a: float, config: QuadratureConfig | None = None) -> float:
    """Step-one coupling chi_{3m}^{n', n} at finite cutoff a, by quadrature.

    ``n`` is the S (l = 3m+1) radial index, ``n_prime`` the P (l = 3m) one.
    """
    if m < 0 or n < 0 or n_prime < 0:
        raise ValueError("indices must be non-negative")
    logc = _log_chi_prefactor(m, n, n_prime)
    a3 = a ** 3

    def integrand(x):
        y = 2 * x * x
        with np.errstate(divide="ignore", invalid="ignore"):
            # x^{6m+2} e^{-2x^2} folded with the prefactor in log space
            logw = logc + (6 * m + 4) * np.log(x) - y
            w = np.where(x > 0, np.exp(logw), 0.0)
        return w / (a3 + x ** 3) * laguerre(n, 3 * m + 1, y) * laguerre(n_prime, 3 * m, y)

    cfg = config or QuadratureConfig(rtol=1e-12, breakpoints=_kappa_breakpoints(a))
    value, _ = radial_quadrature(integrand, cfg)
    return value


def chi_analytic_a0(m: int, n: int, n_prime: int) -> float:
    """a -> 0 limit of chi_{3m}^{n', n}; zero unless n >= n'."""
    if m < 0 or n < 0 or n_prime < 0:
        raise ValueError("indices must be non-negative")
    if n < n_prime:
        return 0.0
    return math.exp(0.5 * (
        _LOG2 + math.lgamma(3 * m + n_prime + 1) + math.lgamma(n + 1)
        - math.lgamma(n_prime + 1) - math.lgamma(3 * m + n + 2)
    ))


def chi_correction_small_a(a: float) -> float:
    """Lowest-order residual coupling -(8 pi / 3) sqrt(2/3) a^2 (m = 0)."""
    return -(8.0 * math.pi / 3.0) * math.sqrt(2.0 / 3.0) * a * a


def _check_tilde_m(m: int):
    if m < 1:
        raise ValueError("chi_tilde needs m >= 1: there is no l = 3m - 2 mode for m = 0")


def chi_tilde(m: int, n_prime: int) -> float:
    """Step-two coupling from S_{0, 3m-2} into P_{n', 3m}; exactly zero for n' > 0."""
    _check_tilde_m(m)
    if n_prime < 0:
        raise ValueError("n_prime must be non-negative")
    if n_prime > 0:
        return 0.0
    return 0.5 * math.sqrt(math.exp(math.lgamma(3 * m + 1) - math.lgamma(3 * m - 1)))


def chi_tilde_exact(m: int, n_prime: int, n: int) -> float:
    """Closed form of tilde-chi_{3m}^{n', n} for any S index n.

    Uses L_n^{k-2} = L_n^k - 2 L_{n-1}^k + L_{n-2}^k and Laguerre
    orthogonality, so only n' in {n, n-1, n-2} survive.
    """
    _check_tilde_m(m)
    weight = {n: 1.0, n - 1: -2.0, n - 2: 1.0}.get(n_prime, 0.0)
    if weight == 0.0 or n_prime < 0:
        return 0.0
    k = 3 * m
    log_mag = 0.5 * (
        math.lgamma(n + 1) + math.lgamma(n_prime + 1) - math.lgamma(k - 1 + n) - math.lgamma(k + n_prime + 1)
    ) + math.lgamma(k + n_prime + 1) - math.lgamma(n_prime + 1)
    return 0.5 * weight * math.exp(log_mag)


def chi_tilde_numeric(m: int, n_prime: int, n: int = 0, config: QuadratureConfig | None = None) -> float:
    """Quadrature of tilde-chi_{3m}^{n', n} with the x^2 profile."""
    _check_tilde_m(m)
    k = 3 * m
    # 2^{3m+1} sqrt(n! n'! / ((3m-2+n)! (3m+n')!))
    logc = (k + 1) * _LOG2 + 0.5 * (
        math.lgamma(n + 1) + math.lgamma(n_prime + 1) - math.lgamma(k - 1 + n) - math.lgamma(k + n_prime + 1)
    )

    def integrand(x):
        y = 2 * x * x
        with np.errstate(divide="ignore"):
            w = np.where(x > 0, np.exp(logc + (2 * k + 1) * np.log(x) - y), 0.0)
        return w * laguerre(n, k - 2, y) * laguerre(n_prime, k, y)

    value, _ = radial_quadrature(integrand, config or QuadratureConfig(rtol=1e-13))
    return value


def fit_residual_scaling(n_prime: int = 1, a_values=None, m: int = 0) -> tuple[float, float]:
    """Log-log slope and a^2 prefactor of the residual coupling chi_{3m}^{n',0}(a)."""
    if a_values is None:
        a_values = np.geomspace(1e-3, 1e-2, 7)
    a_values = np.asarray(a_values, dtype=float)
    vals = np.array([chi_numeric(m, 0, n_prime, a) for a in a_values])
    slope, _ = np.polyfit(np.log(a_values), np.log(np.abs(vals)), 1)
    prefactor = float(np.median(vals / a_values ** 2))
    return float(slope), prefactor


@dataclass(frozen=True)
class CouplingTable:
    """Dense, read-only coupling table indexed ``[sector m, row (P), col (S)]``.

    For the step-one profile, sector m holds chi_{3m}; for the step-two
    profile it holds tilde-chi_{3m+3}, i.e. the coupling used when the
    photon moves from l = 3m+1 to l = 3m+3.
    """

    values: np.ndarray
    profile: SpatialProfile
    computed_by: str
    m_max: int
    n_max: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("coupling table has non-finite entries")
        self.values.setflags(write=False)

    @property
    def a(self) -> float | None:
        return self.profile.a

    def entry(self, m: int, row: int, col: int) -> float:
        return float(self.values[m, row, col])

    def rows(self):
        for m in range(self.m_max + 1):
            for row in range(self.n_max + 1):
                for col in range(self.n_max + 1):
                    yield m, row, col, float(self.values[m, row, col])

    def to_csv(self, path) -> Path:
        path = Path(path)
        a = "" if self.a is None else repr(float(self.a))
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["m", "n_row", "n_col", "value", "method", "a"])
            for m, row, col, v in self.rows():
                w.writerow([m, row, col, f"{v:.17g}", self.computed_by, a])
        return path


def _table_entry(args):
    kind, a, method, m, row, col = args
    if kind is ProfileKind.KAPPA_STEP1:
        if method == "analytic":
            return chi_analytic_a0(m, col, row)
        return chi_numeric(m, col, row, a)
    if method == "analytic":
        return chi_tilde_exact(m + 1, row, col)
    return chi_tilde_numeric(m + 1, row, col)


def build_coupling_table(profile: SpatialProfile, m_max: int, n_max: int,
                         method: str = "quadrature", jobs: int = 1) -> CouplingTable:
    """Tabulate all couplings with sector m <= m_max and radial indices <= n_max."""
    if m_max < 0 or n_max < 0:
        raise ValueError("table bounds must be non-negative")
    if method not in ("quadrature", "analytic"):
        raise ValueError(f"unknown method {method!r}")
    if profile.kind is ProfileKind.KAPPA_STEP1 and method == "analytic":
        computed_by = "AnalyticLimit"
    elif method == "analytic":
        computed_by = "Analytic"
    else:
        computed_by = "Quadrature"
    index = [(m, r, c) for m in range(m_max + 1) for r in range(n_max + 1) for c in range(n_max + 1)]
    tasks = [(profile.kind, profile.a, method, m, r, c) for m, r, c in index]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_table_entry, tasks, chunksize=8))
    else:
        results = []
        for t in tasks:
            try:
                results.append(_table_entry(t))
            except Exception as exc:
                raise RuntimeError(f"coupling entry (m={t[3]}, row={t[4]}, col={t[5]}) failed: {exc}") from exc
    values = np.array(results, dtype=float).reshape(m_max + 1, n_max + 1, n_max + 1)
    if profile.kind is ProfileKind.KAPPA_TILDE_STEP2:
        # the x^2 profile cancels every S_0 -> P_{n'>0} coupling identically
        values[:, 1:, 0] = 0.0
    meta = {
        "index_convention": "values[m, n_row(P mode), n_col(S mode)]",
        "coupling": "chi_{3m}" if profile.kind is ProfileKind.KAPPA_STEP1 else "tilde_chi_{3m+3}",
    }
    return CouplingTable(values, profile, computed_by, m_max, n_max, meta)
