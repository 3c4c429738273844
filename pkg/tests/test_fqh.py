import csv
import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st

from fluxgrow.fqh import (BasisTooLarge, FockBasis, FockVector, InteractionParams, build_hint, build_operator,
                          diagonalize_sector, haldane_v0, interaction_element, laughlin_angular_momentum,
                          laughlin_state, lll_modes, many_body_gap, number_operator, pump_overlap,
                          quasihole_angular_momentum, quasihole_state, sector_basis, symmetric_expansion,
                          total_angular_momentum, zero_energy_subspace)


# ---------------------------------------------------------------- oracles

def moment_element(l1, l2, l3, l4, V0=1.0):
    """Contact element from the Gaussian moments of z^l e^{-|z|^2}, relative to V(0,0,0,0) = V0/2."""
    if l1 + l2 != l3 + l4:
        return 0.0
    s = l1 + l2
    # C_l^2 = 2^{l+1} / (pi l!) and int |z|^{2s} e^{-4|z|^2} = pi s! / 4^{s+1}
    c = math.prod(math.sqrt(2.0 ** (l + 1) / math.factorial(l)) for l in (l1, l2, l3, l4))
    c0 = 2.0 ** 2
    return 0.5 * V0 * (c / c0) * math.factorial(s) / 4.0 ** s


def dense_hint(modes, cutoff, V0=1.0):
    """Contact interaction on the full truncated product space built from Kronecker products."""
    a1 = np.diag(np.sqrt(np.arange(1, cutoff + 1)), 1)
    eye = np.eye(cutoff + 1)
    ops = {}
    for i, l in enumerate(modes):
        mats = [eye] * len(modes)
        mats[i] = a1
        op = mats[0]
        for m in mats[1:]:
            op = np.kron(op, m)
        ops[l] = op
    H = np.zeros_like(ops[modes[0]])
    for l1, l2, l3, l4 in itertools.product(modes, repeat=4):
        v = moment_element(l1, l2, l3, l4, V0)
        if v:
            H += v * ops[l1].T @ ops[l2].T @ ops[l3] @ ops[l4]
    return H


def product_index(occ, cutoff):
    i = 0
    for n in occ:
        i = i * (cutoff + 1) + int(n)
    return i


def poly_weights(expo):
    """int |prod z^e|^2 e^{-2 sum |z|^2}, dropping one factor of pi per particle."""
    return math.prod(Fraction(math.factorial(e), 2 ** (e + 1)) for e in expo)


def poly_coeffs(expr, zs):
    return {k: Fraction(int(v)) for k, v in sympy.Poly(sympy.expand(expr), *zs).as_dict().items()}


def first_quantized_pump_overlap(N):
    """|<Laughlin_{N+1}| a+_0 |quasi-hole_N>| from exact moment integrals of the wave functions."""
    zs = sympy.symbols(f"z0:{N + 1}")
    lau = math.prod([(zs[i] ** 3 - zs[j] ** 3) ** 2 for i, j in itertools.combinations(range(N + 1), 2)],
                    start=sympy.Integer(1))
    qh = math.prod([zs[k] ** 6 for k in range(N)], start=sympy.Integer(1))
    qh *= math.prod([(zs[i] ** 3 - zs[j] ** 3) ** 2 for i, j in itertools.combinations(range(N), 2)],
                    start=sympy.Integer(1))
    L = poly_coeffs(lau, zs)
    Q = poly_coeffs(qh, zs)  # last coordinate carries the normalized l = 0 orbital
    nl = sum(c * c * poly_weights(e) for e, c in L.items())
    nq = sum(c * c * poly_weights(e[:N]) for e, c in Q.items())
    cross = sum(c * L.get(e, 0) * poly_weights(e) for e, c in Q.items())
    # the l = 0 orbital is normalized by 1 / sqrt(1/2)
    sq = (N + 1) * 2 * cross * cross / (nl * nq)
    return math.sqrt(sq), sq


# ---------------------------------------------------------------- interaction

def test_haldane_and_params():
    assert haldane_v0(8.0, 1.0, 1.0) == 3.0
    ip = InteractionParams(C6=8.0, a_B=0.5, l_B=1.0)
    assert ip.V0 == pytest.approx(48.0) and ip.contact_regime
    assert not InteractionParams(1.0, 2.0, 1.0).contact_regime
    with pytest.raises(ValueError):
        InteractionParams(0.0, 1.0, 1.0)


def test_interaction_element_examples():
    assert interaction_element(0, 0, 0, 0, 2.0) == 1.0
    assert interaction_element(0, 3, 1, 1) == 0.0
    assert interaction_element(0, 6, 3, 3) == pytest.approx(0.5 * math.factorial(6) / 64 / math.sqrt(720 * 36))
    with pytest.raises(ValueError):
        interaction_element(-1, 1, 0, 0)


@given(st.tuples(*[st.integers(0, 15)] * 3))
def test_interaction_element_matches_moment_oracle(ls):
    l1, l2, l3 = ls
    l4 = l1 + l2 - l3
    if l4 < 0:
        return
    assert interaction_element(l1, l2, l3, l4, 1.7) == pytest.approx(moment_element(l1, l2, l3, l4, 1.7), rel=1e-12)


def test_double_occupancy_energy():
    b = FockBasis.for_sector((0, 3), 2, 0)
    H = build_hint(b, V0=1.3)
    assert H.toarray()[0, 0] == pytest.approx(1.3)


@pytest.mark.parametrize("modes,N,L", [((0, 3, 6, 9), 3, 9), ((0, 3, 6, 9), 3, None), ((0, 1, 2), 2, None),
                                       ((0, 3, 6), 3, 6)])
def test_hint_matches_dense_product_space(modes, N, L):
    cutoff = N
    basis = FockBasis.for_sector(modes, N, L)
    ref = dense_hint(modes, cutoff, 0.9)
    idx = [product_index(o, cutoff) for o in basis.occ]
    got = build_hint(basis, 0.9).toarray()
    assert np.allclose(got, ref[np.ix_(idx, idx)], atol=1e-13)


def test_two_body_gap():
    assert many_body_gap(2) == pytest.approx(11 / 32, rel=1e-12)
    assert many_body_gap(2, V0=2.0) == pytest.approx(11 / 16, rel=1e-12)
    assert many_body_gap(1) is None


@settings(max_examples=15)
@given(st.integers(1, 3), st.integers(0, 18), st.floats(0.1, 5.0))
def test_hint_hermitian_and_positive(N, L, V0):
    basis = FockBasis.for_sector(lll_modes(4), N, L)
    if basis.dim == 0:
        return
    H = build_hint(basis, V0)
    assert H.is_hermitian()
    assert np.linalg.eigvalsh(H.toarray()).min() >= -1e-12 * V0


@settings(max_examples=10)
@given(st.integers(1, 3))
def test_hint_conserves_angular_momentum_and_number(N):
    basis = FockBasis.for_sector((0, 1, 3, 4, 6), N)
    H = build_hint(basis)
    assert H.commutator_norm(total_angular_momentum(basis)) <= 1e-12
    assert H.commutator_norm(number_operator(basis)) <= 1e-12


def test_build_operator_single_creation():
    b = FockBasis.from_occupations((0, 3), [[1, 0], [0, 1], [1, 1], [2, 0]])
    op = build_operator(b, [((0, None, 3, None), 2.0)]).toarray()  # 2 a+_0 a_3
    assert op[b.index([1, 0]), b.index([0, 1])] == pytest.approx(2.0)
    assert op[b.index([2, 0]), b.index([1, 1])] == pytest.approx(2 * math.sqrt(2))
    assert np.count_nonzero(op) == 2


# ---------------------------------------------------------------- bases

def test_basis_lookup_and_errors():
    b = sector_basis(3, 18)
    for i in range(b.dim):
        assert b.index(b.occ[i]) == i
        assert b.index(b.occupation_of(b.key_of(i))) == i
    assert set(b.angular_momenta()) == {18} and set(b.particle_numbers()) == {3}
    with pytest.raises(KeyError):
        b.index([0] * len(b.modes[:-1]) + [9])
    with pytest.raises(BasisTooLarge):
        FockBasis.for_sector(lll_modes(30), 6, None, cap=1000)
    with pytest.raises(ValueError):
        FockBasis.from_occupations((0, 0), [[1, 0]])


@given(st.integers(0, 4), st.integers(0, 24))
def test_sector_enumeration_complete(N, L):
    modes = lll_modes(4)
    b = FockBasis.for_sector(modes, N, L)
    brute = {c for c in itertools.combinations_with_replacement(modes, N) if sum(c) == L}
    assert {b.key_of(i) for i in range(b.dim)} == brute


# ---------------------------------------------------------------- Laughlin and quasi-holes

def test_symmetric_expansion_examples():
    assert symmetric_expansion(2) == {(0, 2): 1, (1, 1): -2}
    assert symmetric_expansion(2, 1) == {(1, 3): 1, (2, 2): -2}
    with pytest.raises(ValueError):
        symmetric_expansion(6)


def test_laughlin_examples():
    assert laughlin_state(1).components == {(0,): 1.0}
    v = laughlin_state(2)
    assert set(v.components) == {(0, 6), (3, 3)}
    # z^6 and z^3 z^3 with C_{0,l}: weights 1/C_6 and -2/(C_3^2 sqrt 2) up to normalization
    r = v.components[(3, 3)] / v.components[(0, 6)]
    assert r == pytest.approx(-math.sqrt(2 * math.factorial(3) ** 2 / math.factorial(6)), rel=1e-12)
    assert v.norm() == pytest.approx(1.0)


@pytest.mark.parametrize("N", [2, 3, 4])
def test_laughlin_properties(N):
    v = laughlin_state(N)
    assert v.particle_number == N
    assert v.angular_momentum_values() == {laughlin_angular_momentum(N)}
    assert max(v.support()) == 6 * (N - 1) and all(l % 3 == 0 for l in v.support())


@pytest.mark.parametrize("N", [2, 3, 4])
def test_laughlin_is_unique_zero_mode(N):
    spectrum = diagonalize_sector(N, laughlin_angular_momentum(N))
    assert spectrum.zero_mode_count == 1
    zm = spectrum.zero_modes()[0]
    assert abs(zm.inner(laughlin_state(N))) == pytest.approx(1.0, abs=1e-10)


def test_gaps_positive():
    assert many_body_gap(3) == pytest.approx(0.2323, abs=1e-4)
    assert many_body_gap(4) == pytest.approx(0.1565, abs=1e-4)


@pytest.mark.parametrize("N,m", [(2, 1), (2, 2), (3, 1), (3, 2)])
def test_quasihole_is_zero_mode(N, m):
    v = quasihole_state(N, m)
    L = quasihole_angular_momentum(N, m)
    assert v.angular_momentum_values() == {L}
    zs = zero_energy_subspace(N, L, m_max=2 * (N - 1) + m + 2)
    proj = sum(abs(z.inner(v)) ** 2 for z in zs)
    assert proj == pytest.approx(1.0, abs=1e-10)


def test_zero_mode_counts():
    assert len(zero_energy_subspace(2, 12)) == 2
    assert len(zero_energy_subspace(2, 18)) == 1
    assert quasihole_angular_momentum(2, 1) == 12 and quasihole_angular_momentum(2, 2) == 18


def test_create_and_csv(tmp_path):
    v = FockVector({(0,): 1.0, (3,): 1.0j}).create(0)
    assert v.components == {(0, 0): pytest.approx(math.sqrt(2)), (0, 3): 1.0j}
    rows = list(csv.reader(v.to_csv(tmp_path / "v.csv").open()))
    assert rows[0] == ["occupation", "re", "im"] and rows[1][0] == "0:2" and rows[2][0] == "0:1 3:1"
    with pytest.raises(ValueError):
        FockVector({(0,): 1.0, (0, 3): 1.0}).particle_number


def test_array_round_trip():
    b = sector_basis(3, 18)
    v = laughlin_state(3)
    assert FockVector.from_array(b, v.to_array(b), 1e-15).inner(v) == pytest.approx(1.0)


# ---------------------------------------------------------------- pump overlap

def test_pump_overlap_examples():
    assert pump_overlap(0) == pytest.approx(1.0, abs=1e-14)
    assert pump_overlap(1) == pytest.approx(math.sqrt(10 / 11), abs=1e-12)
    assert pump_overlap(2) == pytest.approx(0.96642, abs=1e-5)
    assert pump_overlap(3) == pytest.approx(0.96711, abs=1e-5)


@pytest.mark.parametrize("N", [0, 1, 2])
def test_pump_overlap_matches_first_quantized_moments(N):
    value, square = first_quantized_pump_overlap(N)
    assert pump_overlap(N) == pytest.approx(value, abs=1e-12)
    if N == 1:
        assert square == Fraction(10, 11)


def test_pump_overlap_monte_carlo():
    # sample z from |e^{-|z|^2}|^2, i.e. independent normals of variance 1/4 per component
    rng = np.random.default_rng(1234)
    n = 400_000
    z = (rng.normal(0, 0.5, (n, 2)) + 1j * rng.normal(0, 0.5, (n, 2)))
    lau = (z[:, 0] ** 3 - z[:, 1] ** 3) ** 2
    qh = z[:, 0] ** 6
    cross = np.mean(np.conj(lau) * qh)
    # the sampling density absorbs the l = 0 orbital's normalization, leaving sqrt(N + 1)
    est = math.sqrt(2) * abs(cross) / math.sqrt(np.mean(abs(lau) ** 2) * np.mean(abs(qh) ** 2))
    assert est == pytest.approx(pump_overlap(1), abs=0.03)
