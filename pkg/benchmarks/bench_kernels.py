"""Compare the numba and numpy paths of the Fock-space operator kernel.

    python3 benchmarks/bench_kernels.py [--repeats 5]

Assembles the contact interaction on a few bases with both implementations,
checks that the sparse matrices agree and prints the best wall time of each.
"""
import argparse
import time

import numpy as np
import scipy.sparse as sp

from fluxgrow import _kernels
from fluxgrow.fqh import FockBasis, interaction_terms, lll_modes
from fluxgrow.growing import mixed_basis


def _terms(basis):
    pos = {l: i for i, l in enumerate(basis.modes)}
    quads = interaction_terms(basis.modes)
    arr = np.array([[pos[l] for l in q] for q, _ in quads], dtype=np.int64)
    return arr, np.array([c for _, c in quads], dtype=complex)


def _matrix(fn, basis, terms, coeffs):
    r, c, v = fn(basis.occ, basis.keys, np.arange(basis.dim, dtype=np.int64), basis.base, terms, coeffs)
    m = sp.csr_matrix((v, (r, c)), shape=(basis.dim, basis.dim))
    m.sum_duplicates()
    return m


def best_time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    cases = {
        "sector N=4 L=36": FockBasis.for_sector(lll_modes(8), 4, 36),
        "sector N=5 L=60": FockBasis.for_sector(lll_modes(12), 5, 60),
        "growing basis N<=4": mixed_basis(tuple(range(0, 16, 3)) + tuple(range(1, 16, 3)), 4),
        "growing basis N<=5": mixed_basis(tuple(range(0, 22, 3)) + tuple(range(1, 22, 3)), 5),
    }
    if _kernels.HAVE_NUMBA:
        # compile once outside the timed region
        b = cases["sector N=4 L=36"]
        _matrix(_kernels.apply_terms_numba, b, *_terms(b))
    print(f"{'case':<22}{'states':>8}{'terms':>8}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>9}")
    for name, basis in cases.items():
        terms, coeffs = _terms(basis)
        m_np = _matrix(_kernels.apply_terms_numpy, basis, terms, coeffs)
        t_np = best_time(lambda: _matrix(_kernels.apply_terms_numpy, basis, terms, coeffs), args.repeats)
        if _kernels.HAVE_NUMBA:
            m_nb = _matrix(_kernels.apply_terms_numba, basis, terms, coeffs)
            diff = abs(m_np - m_nb).max() if m_np.nnz else 0.0
            if diff > 1e-12:
                raise SystemExit(f"{name}: numba and numpy matrices differ by {diff:.3e}")
            t_nb = best_time(lambda: _matrix(_kernels.apply_terms_numba, basis, terms, coeffs), args.repeats)
            print(f"{name:<22}{basis.dim:>8}{len(terms):>8}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>9.1f}")
        else:
            print(f"{name:<22}{basis.dim:>8}{len(terms):>8}{t_np:>12.4f}{'n/a':>12}{'':>9}")


if __name__ == "__main__":
    main()
