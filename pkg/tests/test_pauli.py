import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from varqsim.pauli import (Graph, PauliString, PauliSum, all_commuting,
                           build_model, diagonal_eigenvalue,
                           diagonalizing_basis, identity_sum, split_diagonal,
                           topology_edges)

import oracles as oc

labels = st.integers(1, 5).flatmap(
    lambda n: st.text(alphabet="IXYZ", min_size=n, max_size=n))


def test_label_validation():
    with pytest.raises(ValueError):
        PauliString("")
    with pytest.raises(ValueError):
        PauliString("XA")
    with pytest.raises(ValueError):
        PauliString("xz")


def test_char_is_text_order():
    ps = PauliString("XYZ")
    # leftmost char is the highest qubit
    assert ps.char(3) == "X" and ps.char(2) == "Y" and ps.char(1) == "Z"
    assert ps.support() == [1, 2, 3]
    assert PauliString("XIZ").support() == [1, 3]
    assert PauliString.from_chars(3, {1: "Z", 3: "X"}).label == "XIZ"


@given(labels)
@settings(max_examples=60, deadline=None, derandomize=True)
def test_matrix_matches_kron_oracle(label):
    assert np.allclose(PauliString(label).matrix(), oc.pauli_matrix(label))


@given(labels, st.data())
@settings(max_examples=60, deadline=None, derandomize=True)
def test_commutes_with_matches_matrices(label, data):
    other = data.draw(st.text(alphabet="IXYZ", min_size=len(label),
                              max_size=len(label)))
    a, b = PauliString(label), PauliString(other)
    am, bm = oc.pauli_matrix(label), oc.pauli_matrix(other)
    commute = np.allclose(am @ bm, bm @ am)
    assert a.commutes_with(b) == commute


def test_masks_action_identity():
    # P|k> = i^nY (-1)^popcount(k & yzmask) |k ^ xmask|
    ps = PauliString("YXZ")
    xm, yzm, ny = ps.masks()
    mat = oc.pauli_matrix("YXZ")
    for k in range(8):
        col = mat[:, k]
        j = int(np.argmax(np.abs(col)))
        assert j == k ^ xm
        phase = (1j ** (ny % 4)) * (-1.0) ** bin(k & yzm).count("1")
        assert np.isclose(col[j], phase)


def test_sum_requires_real_coefficients():
    with pytest.raises(ValueError):
        PauliSum([(1.0 + 0.5j, "Z")])
    PauliSum([(1.0 + 0j, "Z")])  # real-valued complex is fine
    with pytest.raises(ValueError):
        PauliSum([])
    with pytest.raises(ValueError):
        PauliSum([(1.0, "ZZ"), (1.0, "Z")])


def test_sum_arithmetic_dense():
    a = PauliSum([(0.5, "ZZ"), (1.5, "XI")])
    b = PauliSum([(-0.25, "YY")])
    assert np.allclose((a + b).matrix(), a.matrix() + b.matrix())
    assert np.allclose((a - b).matrix(), a.matrix() - b.matrix())
    assert np.allclose((2.0 * a).matrix(), 2.0 * a.matrix())
    assert np.allclose((-a).matrix(), -a.matrix())


def test_simplify_merges_and_drops():
    s = PauliSum([(1.0, "ZZ"), (0.5, "XX"), (2.0, "ZZ"), (-0.5, "XX")])
    out = s.simplify()
    assert [(c, ps.label) for c, ps in out] == [(3.0, "ZZ")]
    zero = PauliSum([(1.0, "Z"), (-1.0, "Z")]).simplify()
    assert [(c, ps.label) for c, ps in zero] == [(0.0, "I")]


def test_text_round_trip_exact():
    s = PauliSum([(1 / 3, "XYZ"), (-2.5e-17, "IIZ"), (7.0, "III")])
    again = PauliSum.from_text(s.to_text())
    assert [(c, ps.label) for c, ps in again] == [(c, ps.label) for c, ps in s]
    assert identity_sum(3, 2.0).to_text() == "2.0 III\n"


def test_diagonalizing_basis_conjugation():
    # applying the returned gates then measuring Z must equal measuring P
    for ch in "XYZ":
        ps = PauliString(ch)
        bases, diag = diagonalizing_basis(ps)
        u = np.eye(2, dtype=complex)
        for g in bases[0]:
            u = oc.FIXED_LOCAL[g] @ u
        assert np.allclose(u.conj().T @ oc.PAULI["Z"] @ u, oc.PAULI[ch])
        assert diag.label == "Z"
    bases, diag = diagonalizing_basis(PauliString("XIY"))
    assert diag.label == "ZIZ"
    assert bases[0] == ("SDG", "H") and bases[1] == () and bases[2] == ("H",)


@given(st.integers(1, 5).flatmap(
    lambda n: st.tuples(st.text(alphabet="IZ", min_size=n, max_size=n),
                        st.integers(0, 2 ** n - 1))))
@settings(max_examples=60, deadline=None, derandomize=True)
def test_diagonal_eigenvalue_matches_matrix(case):
    label, k = case
    ps = PauliString(label)
    assert diagonal_eigenvalue(ps, k) == int(round(oc.pauli_matrix(label)[k, k].real))


def test_diagonal_eigenvalue_rejects_offdiagonal():
    with pytest.raises(ValueError):
        diagonal_eigenvalue(PauliString("XZ"), 0)


def test_graph_cut_and_brute_force():
    g = Graph(3, [(1, 2, 1.0), (2, 3, 2.0), (1, 3, -0.5)])
    # bitstring 0b001 puts node 1 alone: edges (1,2) and (1,3) cross
    assert g.cut_value(0b001) == pytest.approx(0.5)
    best, argbest = g.max_cut_brute_force()
    # independent enumeration
    vals = [g.cut_value(k) for k in range(8)]
    assert best == pytest.approx(max(vals))
    assert argbest == [k for k in range(8) if abs(vals[k] - max(vals)) <= 1e-12]
    again = Graph.from_text(g.to_text())
    assert again.n_nodes == 3 and again.edges == g.edges
    with pytest.raises(ValueError):
        Graph(2, [(1, 1, 1.0)])


def test_topologies():
    assert topology_edges(4, "line") == [(1, 2), (2, 3), (3, 4)]
    assert topology_edges(4, "ring") == [(1, 2), (2, 3), (3, 4), (4, 1)]
    with pytest.raises(ValueError):
        topology_edges(2, "ring")
    assert topology_edges(4, "custom", edges=[(1, 3)]) == [(1, 3)]


def test_build_model_tfim_dense():
    h = build_model("tfim", n=3, J=0.5, h=-1.0)
    want = (0.5 * (oc.pauli_matrix("IZZ") + oc.pauli_matrix("ZZI"))
            - (oc.pauli_matrix("IIX") + oc.pauli_matrix("IXI") + oc.pauli_matrix("XII")))
    assert np.allclose(h.matrix(), want)


def test_build_model_heisenberg_dense():
    h = build_model("heisenberg", n=3, topology="ring", J=0.25, h=-1.0)
    want = np.zeros((8, 8), dtype=complex)
    for i, j in [(1, 2), (2, 3), (3, 1)]:
        for ch in "XYZ":
            lab = ["I"] * 3
            lab[3 - i] = ch
            lab[3 - j] = ch
            want += 0.25 * oc.pauli_matrix("".join(lab))
    for q in range(1, 4):
        lab = ["I"] * 3
        lab[3 - q] = "Z"
        want -= oc.pauli_matrix("".join(lab))
    assert np.allclose(h.matrix(), want)


def test_build_model_tilted_defaults():
    h = build_model("tilted_ising", n=3)
    # line topology silently upgrades to the ring this model is defined on
    zz = [ps.label for c, ps in h if ps.weight == 2]
    assert len(zz) == 3
    coeffs = {ps.label: c for c, ps in h}
    assert coeffs["IIZ"] == pytest.approx((np.sqrt(5.0) + 1.0) / 4.0)
    assert coeffs["IIX"] == pytest.approx((np.sqrt(5.0) + 5.0) / 8.0)


def test_build_model_maxcut_halved_weights():
    g = Graph(2, [(1, 2, 3.0)])
    h = build_model("maxcut", graph=g)
    assert [(c, ps.label) for c, ps in h] == [(1.5, "ZZ")]
    # diagonal equals constant minus cut: H_kk = sum(w)/2 - cut(k)
    hm = h.matrix()
    for k in range(4):
        assert hm[k, k].real == pytest.approx(1.5 - g.cut_value(k))


def test_split_diagonal():
    h = build_model("tfim", n=3, J=1.0, h=0.7)
    diag, rest = split_diagonal(h)
    assert all(ps.is_diagonal() for _, ps in diag)
    assert not any(ps.is_diagonal() for _, ps in rest)
    assert np.allclose(diag.matrix() + rest.matrix(), h.matrix())
    assert all_commuting(diag) and all_commuting(rest)
    with pytest.raises(ValueError):
        split_diagonal(PauliSum([(1.0, "ZZ")]))


def test_all_commuting():
    assert all_commuting(PauliSum([(1.0, "ZZ"), (1.0, "ZI")]))
    assert not all_commuting(PauliSum([(1.0, "ZI"), (1.0, "XI")]))
