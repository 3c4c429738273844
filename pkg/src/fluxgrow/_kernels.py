"""Fock-space operator kernels.

Every bosonic operator used by the exact-diagonalization code is a sum of
normal-ordered strings ``a+_c1 a+_c2 a_a1 a_a2`` (unused slots hold -1).
``apply_terms`` returns the COO triplets of such a sum over a basis.

Two implementations are kept in sync: a numba ``@njit`` loop over basis
states and a vectorized numpy path looping over terms.  Set
``FLUXGROW_DISABLE_NUMBA=1`` to force the numpy path.
"""
from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("FLUXGROW_DISABLE_NUMBA", "0") not in ("1", "true", "yes")


def encode(occ: np.ndarray, base: int) -> np.ndarray:
    """Integer key of each occupation row (mixed radix, mode 0 least significant)."""
    pows = base ** np.arange(occ.shape[1], dtype=np.int64)
    return occ.astype(np.int64) @ pows


def apply_terms_numpy(occ, sorted_keys, order, base, terms, coeffs):
    """Numpy path: loop over terms, vectorize over basis states."""
    n_states, n_modes = occ.shape
    pows = base ** np.arange(n_modes, dtype=np.int64)
    rows, cols, vals = [], [], []
    all_cols = np.arange(n_states)
    for k in range(terms.shape[0]):
        work = occ.astype(np.int64).copy()
        amp = np.full(n_states, complex(coeffs[k]))
        alive = np.ones(n_states, dtype=bool)
        # rightmost operator acts first
        for slot, sign in ((3, -1), (2, -1), (1, +1), (0, +1)):
            mode = terms[k, slot]
            if mode < 0:
                continue
            if sign < 0:
                n = work[:, mode]
                alive &= n > 0
                amp *= np.sqrt(np.maximum(n, 0))
                work[:, mode] -= 1
            else:
                n = work[:, mode]
                amp *= np.sqrt(np.maximum(n + 1.0, 0.0))
                work[:, mode] += 1
        alive &= (work < base).all(axis=1)
        if not alive.any():
            continue
        keys = work[alive] @ pows
        pos = np.searchsorted(sorted_keys, keys)
        pos = np.minimum(pos, len(sorted_keys) - 1)
        found = sorted_keys[pos] == keys
        rows.append(order[pos[found]])
        cols.append(all_cols[alive][found])
        vals.append(amp[alive][found])
    if not rows:
        return (np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, np.complex128))
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def _apply_terms_loop(occ, sorted_keys, order, base, terms, coeffs):
    n_states, n_modes = occ.shape
    n_terms = terms.shape[0]
    pows = np.empty(n_modes, dtype=np.int64)
    p = 1
    for i in range(n_modes):
        pows[i] = p
        p *= base
    cap = n_states * n_terms
    rows = np.empty(cap, dtype=np.int64)
    cols = np.empty(cap, dtype=np.int64)
    vals = np.empty(cap, dtype=np.complex128)
    work = np.empty(n_modes, dtype=np.int64)
    count = 0
    n_keys = sorted_keys.shape[0]
    for s in range(n_states):
        for k in range(n_terms):
            for i in range(n_modes):
                work[i] = occ[s, i]
            amp = coeffs[k] + 0j
            ok = True
            for slot in (3, 2):
                mode = terms[k, slot]
                if mode >= 0:
                    if work[mode] == 0:
                        ok = False
                        break
                    amp *= np.sqrt(work[mode])
                    work[mode] -= 1
            if not ok:
                continue
            for slot in (1, 0):
                mode = terms[k, slot]
                if mode >= 0:
                    amp *= np.sqrt(work[mode] + 1.0)
                    work[mode] += 1
                    if work[mode] >= base:
                        ok = False
            if not ok:
                continue
            key = 0
            for i in range(n_modes):
                key += work[i] * pows[i]
            pos = np.searchsorted(sorted_keys, key)
            if pos < n_keys and sorted_keys[pos] == key:
                rows[count] = order[pos]
                cols[count] = s
                vals[count] = amp
                count += 1
    return rows[:count], cols[:count], vals[:count]


if HAVE_NUMBA:
    apply_terms_numba = njit(cache=False)(_apply_terms_loop)
else:  # pragma: no cover
    apply_terms_numba = _apply_terms_loop


def apply_terms(occ, sorted_keys, order, base, terms, coeffs):
    """COO triplets (row, col, value) of ``sum_k coeffs[k] * term_k`` on a basis.

    ``occ`` is the (n_states, n_modes) occupation table, ``sorted_keys`` and
    ``order`` give the lookup from mixed-radix key to state index.  Targets
    outside the basis are dropped (truncation).
    """
    occ = np.ascontiguousarray(occ, dtype=np.int64)
    terms = np.ascontiguousarray(terms, dtype=np.int64)
    coeffs = np.ascontiguousarray(coeffs, dtype=np.complex128)
    if terms.shape[0] == 0 or occ.shape[0] == 0:
        return (np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, np.complex128))
    if USE_NUMBA:
        return apply_terms_numba(occ, sorted_keys, order, int(base), terms, coeffs)
    return apply_terms_numpy(occ, sorted_keys, order, int(base), terms, coeffs)
