"""Interacting photons in the lowest Landau manifold: Fock bases, the contact
interaction, Laughlin / quasi-hole states and exact diagonalization.

Fock states are written over n = 0 Laguerre-Gauss modes labelled by their
angular momentum l.  A many-body amplitude is keyed by the non-decreasing
tuple of occupied l values (one entry per photon), e.g. ``(0, 0, 6)`` is
|n_0 = 2, n_6 = 1>.

First-quantized wave functions use z = x + i y in units of w0, so that the
monomial z^l e^{-|z|^2} equals f_{0,l} / C_{0,l}.
"""
from __future__ import annotations

import csv
import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from ._kernels import apply_terms, encode
from .modes import log_mode_norm

DEFAULT_BASIS_CAP = 200_000
DENSE_LIMIT = 2000
MAX_EXPANSION_N = 5


class BasisTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class InteractionParams:
    """Van der Waals strength C6, blockade radius a_B and magnetic length l_B = w0 / 2."""

    C6: float
    a_B: float
    l_B: float

    def __post_init__(self):
        if not (self.C6 > 0 and self.a_B > 0 and self.l_B > 0):
            raise ValueError("C6, a_B and l_B must be positive")

    @property
    def V0(self) -> float:
        return haldane_v0(self.C6, self.l_B, self.a_B)

    @property
    def contact_regime(self) -> bool:
        """True when a_B < l_B, where the zeroth pseudopotential dominates."""
        return self.a_B < self.l_B


def haldane_v0(C6: float, l_B: float, a_B: float) -> float:
    """Zeroth pseudopotential 3 C6 / (8 l_B^2 a_B^4) of the blockaded interaction."""
    if not (C6 > 0 and l_B > 0 and a_B > 0):
        raise ValueError("inputs must be positive")
    return 3.0 * C6 / (8.0 * l_B ** 2 * a_B ** 4)


def log_interaction_element(l1: int, l2: int, l3: int, l4: int) -> float:
    """log of V / (V0/2) for a conserving quadruple."""
    s = l1 + l2
    return math.lgamma(s + 1) - s * math.log(2.0) - 0.5 * sum(math.lgamma(l + 1) for l in (l1, l2, l3, l4))


def interaction_element(l1: int, l2: int, l3: int, l4: int, V0: float = 1.0) -> float:
    """(V0/2) (l1+l2)! sqrt(2^{-2(l1+l2)} / (l1! l2! l3! l4!)) if l1+l2 == l3+l4, else 0."""
    if min(l1, l2, l3, l4) < 0:
        raise ValueError("angular momenta must be non-negative")
    if l1 + l2 != l3 + l4:
        return 0.0
    return 0.5 * V0 * math.exp(log_interaction_element(l1, l2, l3, l4))


# ---------------------------------------------------------------- bases

def _sector_states(modes: Sequence[int], N: int, L: int | None) -> Iterator[tuple[int, ...]]:
    """Occupation tuples over ``modes`` with N photons and (optionally) total L."""
    M = len(modes)
    occ = [0] * M
    max_l = max(modes) if modes else 0

    def rec(i, n_left, l_left):
        if i == M:
            if n_left == 0 and (L is None or l_left == 0):
                yield tuple(occ)
            return
        if L is not None and l_left > n_left * max_l:
            return
        l = modes[i]
        top = n_left if (L is None or l == 0) else min(n_left, l_left // l)
        for k in range(top, -1, -1):
            occ[i] = k
            yield from rec(i + 1, n_left - k, None if L is None else l_left - k * l)
        occ[i] = 0

    yield from rec(0, N, L)


@dataclass(frozen=True)
class FockBasis:
    """Ordered Fock basis over a list of mode angular momenta.

    States are sorted by their mixed-radix key, so ``keys`` is increasing
    and state index lookup is a binary search.
    """

    modes: tuple[int, ...]
    occ: np.ndarray
    base: int
    keys: np.ndarray
    sector: tuple[int, int | None] | None = None

    @classmethod
    def from_occupations(cls, modes: Sequence[int], occ, sector=None, cap: int = DEFAULT_BASIS_CAP) -> "FockBasis":
        modes = tuple(int(l) for l in modes)
        if len(set(modes)) != len(modes) or any(l < 0 for l in modes):
            raise ValueError("modes must be distinct non-negative angular momenta")
        occ = np.asarray(occ, dtype=np.int64).reshape(-1, len(modes))
        if len(occ) > cap:
            raise BasisTooLarge(f"basis has {len(occ)} states, above the cap {cap}")
        if np.any(occ < 0):
            raise ValueError("negative occupation")
        base = int(occ.max()) + 2 if len(occ) else 2
        keys = encode(occ, base)
        order = np.argsort(keys, kind="stable")
        keys, occ = keys[order], occ[order]
        if len(keys) > 1 and np.any(np.diff(keys) == 0):
            raise ValueError("duplicate basis states")
        occ.setflags(write=False)
        keys.setflags(write=False)
        return cls(modes, occ, base, keys, sector)

    @classmethod
    def for_sector(cls, modes: Sequence[int], N: int, L: int | None = None, cap: int = DEFAULT_BASIS_CAP) -> "FockBasis":
        if N < 0:
            raise ValueError("N must be non-negative")
        modes = tuple(modes)
        rows = []
        for st in _sector_states(modes, N, L):
            rows.append(st)
            if len(rows) > cap:
                raise BasisTooLarge(f"sector (N={N}, L={L}) exceeds the basis cap {cap}")
        return cls.from_occupations(modes, rows, (N, L), cap)

    @property
    def dim(self) -> int:
        return len(self.occ)

    def index(self, occupation: Sequence[int]) -> int:
        occupation = np.asarray(occupation, dtype=np.int64)
        if np.any(occupation >= self.base):
            raise KeyError(tuple(occupation))
        k = int(encode(occupation[None, :], self.base)[0])
        i = int(np.searchsorted(self.keys, k))
        if i >= len(self.keys) or self.keys[i] != k:
            raise KeyError(tuple(occupation.tolist()))
        return i

    def particle_numbers(self) -> np.ndarray:
        return self.occ.sum(axis=1)

    def angular_momenta(self) -> np.ndarray:
        return self.occ @ np.asarray(self.modes, dtype=np.int64)

    def key_of(self, i: int) -> tuple[int, ...]:
        """Photon-list key (non-decreasing l values) of state i."""
        return tuple(l for l, n in zip(self.modes, self.occ[i]) for _ in range(int(n)))

    def occupation_of(self, key: Sequence[int]) -> np.ndarray:
        cnt = Counter(key)
        if any(l not in self.modes for l in cnt):
            raise KeyError(tuple(key))
        return np.array([cnt.get(l, 0) for l in self.modes], dtype=np.int64)


# ---------------------------------------------------------------- operators

@dataclass(frozen=True)
class SparseOperator:
    """Immutable CSR operator on a :class:`FockBasis`."""

    matrix: sp.csr_matrix
    basis: FockBasis

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        d = self.matrix - self.matrix.getH()
        return d.nnz == 0 or float(np.max(np.abs(d.data))) <= tol

    def commutator_norm(self, other: "SparseOperator") -> float:
        c = self.matrix @ other.matrix - other.matrix @ self.matrix
        c.eliminate_zeros()
        return float(np.max(np.abs(c.data))) if c.nnz else 0.0

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def __matmul__(self, vec):
        return self.matrix @ vec


def build_operator(basis: FockBasis, terms: Iterable[tuple[Sequence[int], complex]]) -> SparseOperator:
    """Sparse matrix of sum_k c_k O_k with O_k = a+_{c1} a+_{c2} a_{a1} a_{a2}.

    Each term is ``((c1, c2, a1, a2), coeff)`` with mode angular momenta;
    use ``None`` for an unused slot.  Targets leaving the basis are dropped.
    """
    pos = {l: i for i, l in enumerate(basis.modes)}
    rows, coeffs = [], []
    for ls, c in terms:
        if c == 0:
            continue
        try:
            rows.append([-1 if l is None else pos[l] for l in ls])
        except KeyError:
            continue
        coeffs.append(c)
    terms_arr = np.array(rows, dtype=np.int64).reshape(-1, 4)
    r, cidx, v = apply_terms(basis.occ, basis.keys, np.arange(basis.dim, dtype=np.int64), basis.base,
                             terms_arr, np.array(coeffs, dtype=complex))
    mat = sp.csr_matrix((v, (r, cidx)), shape=(basis.dim, basis.dim))
    mat.sum_duplicates()
    mat.eliminate_zeros()
    return SparseOperator(mat, basis)


def interaction_terms(modes: Sequence[int], V0: float = 1.0):
    """All conserving quadruples of the contact interaction over ``modes``."""
    modes = sorted(modes)
    out = []
    for l1, l2, l3 in itertools.product(modes, repeat=3):
        l4 = l1 + l2 - l3
        if l4 in modes:
            out.append(((l1, l2, l3, l4), interaction_element(l1, l2, l3, l4, V0)))
    return out


def build_hint(basis: FockBasis, V0: float = 1.0) -> SparseOperator:
    """Contact interaction sum V a+_{l1} a+_{l2} a_{l3} a_{l4} over the basis's modes."""
    return build_operator(basis, interaction_terms(basis.modes, V0))


def total_angular_momentum(basis: FockBasis) -> SparseOperator:
    return SparseOperator(sp.diags(basis.angular_momenta().astype(float), format="csr"), basis)


def number_operator(basis: FockBasis, modes: Iterable[int] | None = None) -> SparseOperator:
    sel = basis.modes if modes is None else tuple(modes)
    mask = np.array([l in sel for l in basis.modes])
    return SparseOperator(sp.diags(basis.occ[:, mask].sum(axis=1).astype(float), format="csr"), basis)


# ---------------------------------------------------------------- Fock vectors

@dataclass
class FockVector:
    """Sparse many-body vector keyed by the non-decreasing tuple of photon l values."""

    components: dict = field(default_factory=dict)

    def norm(self) -> float:
        return math.sqrt(sum(abs(c) ** 2 for c in self.components.values()))

    def normalized(self) -> "FockVector":
        n = self.norm()
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return FockVector({k: v / n for k, v in self.components.items()})

    def inner(self, other: "FockVector") -> complex:
        """<self | other>."""
        return sum(np.conj(v) * other.components.get(k, 0.0) for k, v in self.components.items())

    @property
    def particle_number(self) -> int:
        ns = {len(k) for k in self.components}
        if len(ns) != 1:
            raise ValueError("vector does not have a sharp photon number")
        return ns.pop()

    def angular_momentum_values(self) -> set[int]:
        return {sum(k) for k, v in self.components.items() if v != 0}

    def support(self) -> set[int]:
        return {l for k, v in self.components.items() if v != 0 for l in k}

    def create(self, l: int) -> "FockVector":
        """a+_l |self> with the sqrt(n_l + 1) factor."""
        out: dict = {}
        for k, v in self.components.items():
            n = k.count(l)
            nk = tuple(sorted(k + (l,)))
            out[nk] = out.get(nk, 0.0) + v * math.sqrt(n + 1)
        return FockVector(out)

    def to_array(self, basis: FockBasis) -> np.ndarray:
        vec = np.zeros(basis.dim, dtype=complex)
        for k, v in self.components.items():
            vec[basis.index(basis.occupation_of(k))] += v
        return vec

    @classmethod
    def from_array(cls, basis: FockBasis, vec, tol: float = 0.0) -> "FockVector":
        return cls({basis.key_of(i): complex(v) for i, v in enumerate(vec) if abs(v) > tol})

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["occupation", "re", "im"])
            for k in sorted(self.components):
                v = complex(self.components[k])
                pattern = " ".join(f"{l}:{n}" for l, n in sorted(Counter(k).items()))
                w.writerow([pattern, f"{v.real:.17g}", f"{v.imag:.17g}"])
        return path


# ---------------------------------------------------------------- polynomial expansion

def _poly_mul_binomial(poly: dict, i: int, j: int) -> dict:
    """poly * (w_i - w_j)."""
    out: dict = {}
    for e, c in poly.items():
        for idx, s in ((i, 1), (j, -1)):
            ne = list(e)
            ne[idx] += 1
            ne = tuple(ne)
            v = out.get(ne, 0) + s * c
            if v:
                out[ne] = v
            else:
                out.pop(ne, None)
    return out


def symmetric_expansion(N: int, m: int = 0) -> dict[tuple[int, ...], int]:
    """Integer coefficients of prod_k w_k^m prod_{i<j} (w_i - w_j)^2 on monomial symmetric functions.

    Keys are non-decreasing exponent tuples.
    """
    if N < 0 or m < 0:
        raise ValueError("N and m must be non-negative")
    if N > MAX_EXPANSION_N:
        raise ValueError(f"expansion limited to N <= {MAX_EXPANSION_N}")
    poly = {tuple([m] * N): 1}
    for i, j in itertools.combinations(range(N), 2):
        poly = _poly_mul_binomial(poly, i, j)
        poly = _poly_mul_binomial(poly, i, j)
    # a symmetric polynomial's coefficient on m_lambda is that of any monomial in its orbit
    return {e: c for e, c in poly.items() if list(e) == sorted(e)}


def _fock_from_symmetric(coeffs: Mapping[tuple[int, ...], int]) -> FockVector:
    comps = {}
    for lam, c in coeffs.items():
        ls = tuple(3 * e for e in lam)
        cnt = Counter(ls)
        # z^l e^{-|z|^2} = f_{0,l} / C_{0,l}; the distinct-permutation sum of a
        # product state is sqrt(N! / prod n_l!) times the normalized Fock state
        logw = -sum(log_mode_norm(0, l) for l in ls) - 0.5 * sum(math.lgamma(n + 1) for n in cnt.values())
        comps[ls] = c * math.exp(logw)
    vec = FockVector(comps)
    return vec.normalized() if comps else vec


def laughlin_state(N: int) -> FockVector:
    """nu = 1/2 bosonic Laughlin state in the l = 0 mod 3 modes, normalized."""
    if N < 0:
        raise ValueError("N must be non-negative")
    if N == 0:
        return FockVector({(): 1.0})
    return _fock_from_symmetric(symmetric_expansion(N))


def quasihole_state(N: int, m: int) -> FockVector:
    """Laughlin state multiplied by prod_k z_k^{3m}, normalized."""
    if N < 0 or m < 0:
        raise ValueError("N and m must be non-negative")
    if N == 0:
        return FockVector({(): 1.0})
    return _fock_from_symmetric(symmetric_expansion(N, m))


def laughlin_angular_momentum(N: int) -> int:
    return 3 * N * (N - 1)


def quasihole_angular_momentum(N: int, m: int) -> int:
    """Homogeneous degree 3mN + 3N(N-1) of the quasi-hole polynomial."""
    return 3 * m * N + 3 * N * (N - 1)


def pump_overlap(N: int) -> float:
    """|<LN, N+1| a+_0 |2qh, N>|, the pump matrix element in units of Omega_p."""
    if N < 0:
        raise ValueError("N must be non-negative")
    return float(abs(laughlin_state(N + 1).inner(quasihole_state(N, 2).create(0))))


# ---------------------------------------------------------------- exact diagonalization

def lll_modes(m_max: int) -> tuple[int, ...]:
    return tuple(3 * k for k in range(m_max + 1))


def default_m_max(N: int) -> int:
    return 2 * max(N - 1, 0) + 2


def sector_basis(N: int, L: int, m_max: int | None = None) -> FockBasis:
    return FockBasis.for_sector(lll_modes(default_m_max(N) if m_max is None else m_max), N, L)


def lowest_eigenpairs(op: SparseOperator, k: int | None = None):
    """Ascending eigenpairs: all of them (dense) or the lowest k (iterative, large sectors)."""
    n = op.dim
    if n == 0:
        return np.zeros(0), np.zeros((0, 0))
    if n < DENSE_LIMIT or k is None:
        w, v = np.linalg.eigh(op.toarray())
        return w, v
    w, v = eigsh(op.matrix, k=min(k, n - 1), which="SA")
    order = np.argsort(w)
    return w[order], v[:, order]


@dataclass
class SectorSpectrum:
    N: int
    L: int
    basis: FockBasis
    energies: np.ndarray
    vectors: np.ndarray
    V0: float

    @property
    def zero_tol(self) -> float:
        return 1e-10 * self.V0

    def zero_modes(self) -> list[FockVector]:
        sel = np.nonzero(self.energies <= self.zero_tol)[0]
        return [FockVector.from_array(self.basis, self.vectors[:, i]) for i in sel]

    @property
    def zero_mode_count(self) -> int:
        return int(np.sum(self.energies <= self.zero_tol))

    @property
    def gap(self) -> float | None:
        above = self.energies[self.energies > self.zero_tol]
        if self.zero_mode_count == 0 or len(above) == 0:
            return None
        return float(above[0])

    def report(self) -> dict:
        return {"N": self.N, "L": self.L, "dimension": self.basis.dim,
                "zero_modes": self.zero_mode_count, "gap": self.gap,
                "min_energy": float(self.energies[0]) if len(self.energies) else None}


def diagonalize_sector(N: int, L: int, V0: float = 1.0, m_max: int | None = None, k: int = 12) -> SectorSpectrum:
    basis = sector_basis(N, L, m_max)
    w, v = lowest_eigenpairs(build_hint(basis, V0), k)
    return SectorSpectrum(N, L, basis, w, v, V0)


def zero_energy_subspace(N: int, L: int, V0: float = 1.0, m_max: int | None = None) -> list[FockVector]:
    """Orthonormal zero-energy states of the contact interaction in the (N, L) sector."""
    return diagonalize_sector(N, L, V0, m_max).zero_modes()


def many_body_gap(N: int, L: int | None = None, V0: float = 1.0, m_max: int | None = None) -> float | None:
    """Lowest non-zero energy in the (N, L) sector (default L = 3N(N-1)); None when undefined."""
    if N < 2:
        return None
    return diagonalize_sector(N, laughlin_angular_momentum(N) if L is None else L, V0, m_max).gap
