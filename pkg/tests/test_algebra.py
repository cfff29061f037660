import math

import numpy as np
import pytest

from mjcm.algebra import (
    compare_coefficients,
    conserved_functionals,
    derive_structure_constants,
    exact_structure_constants,
    printed_coefficients,
    solve_structure_constants,
)
from mjcm.model import build_field_ops, build_hierarchy_set, hamiltonian_parts, product_state
from mjcm.operators import QuantumState

from conftest import make_params


def lstsq(p, variant="set1", depth=None, n_safe=None):
    n_safe = p.n_max - p.m if n_safe is None else n_safe
    depth = n_safe if depth is None else depth
    return solve_structure_constants(hamiltonian_parts(p), build_hierarchy_set(p, variant, depth), n_safe)


def test_set1_m1_closes():
    sc = lstsq(make_params(m=1, n_max=12), n_safe=10, depth=10)
    assert sc.max_residual() < 1e-10
    assert sc.n_safe == 10


@pytest.mark.parametrize("m", [1, 2])
def test_detuning_coefficient(m):
    p = make_params(m=m, n_max=8)
    sc = lstsq(p)
    i, f = sc.index("I[0]"), sc.index("F[0]")
    # d<I>/dt = (E2 - E1 - m omega) <F> sits in the static part
    assert sc.g0[f, i] == pytest.approx(-(p.e2 - p.e1 - m * p.omega), abs=1e-10)
    assert sc.g1[f, i] == pytest.approx(0, abs=1e-10)


def test_g_real_and_rows():
    p = make_params(m=2, n_max=10)
    sc = lstsq(p)
    A0, A1 = sc.rates(0.0), sc.rates(1.0) - sc.rates(0.0)
    assert sc.max_imag < 1e-10
    depth = p.n_max - p.m
    for n in range(depth + 1):
        r = sc.index(f"N21[{n}]")
        assert np.max(np.abs(sc.rates(1.3)[r])) < 1e-10
    # sum rule: rows N1[n] + N2[n] - Delta[n-1] vanish
    for n in range(1, depth + 1):
        row = sum(sgn * (A0 + A1)[sc.index(lab)] for sgn, lab in ((1, f"N1[{n}]"), (1, f"N2[{n}]"), (-1, f"Delta[{n - 1}]")))
        assert np.max(np.abs(row)) < 1e-10


def test_exact_matches_lstsq():
    p = make_params(m=2, n_max=9)
    a, b = lstsq(p), exact_structure_constants(p, "set1", 7, 7)
    assert a.labels == b.labels
    assert np.max(np.abs(a.g0 - b.g0)) < 1e-10 and np.max(np.abs(a.g1 - b.g1)) < 1e-10
    assert b.max_residual() == 0


def test_exact_full_space_closure():
    p = make_params(m=3, n_max=6)
    for variant in ("set1", "set2", "set3"):
        sc = exact_structure_constants(p, variant, 6)
        assert sc.max_residual() == 0
    # depth below n_max does not close in the truncated space
    assert exact_structure_constants(p, "set1", 4).max_residual() > 0


def test_gamma_phase_invariance():
    a = exact_structure_constants(make_params(m=2, n_max=6, gamma=0.5), "set1", 6)
    b = exact_structure_constants(make_params(m=2, n_max=6, gamma=0.5j), "set1", 6)
    pc = make_params(m=2, n_max=6, gamma=-0.3 + 0.4j)
    c = solve_structure_constants(hamiltonian_parts(pc), build_hierarchy_set(pc, "set1", 6))
    assert np.array_equal(a.g1, b.g1)
    assert np.max(np.abs(a.g1 - c.g1)) < 1e-8 * max(1, np.abs(a.g1).max())


def test_corrupted_member_fails():
    p = make_params(m=1, n_max=8)
    S = build_hierarchy_set(p, "set1", 7)
    a, ad = build_field_ops(p.dims)
    bad = S.replace("N1[0]", S["N1[0]"] + a + ad)
    sc = solve_structure_constants(hamiltonian_parts(p), bad, 7)
    assert sc.max_residual() > 1e-3


def test_dependency_reported():
    p = make_params(m=1, n_max=6)
    S = build_hierarchy_set(p, "set1", 5)
    dup = S.replace("N1[1]", S["N1[0]"])
    sc = solve_structure_constants(hamiltonian_parts(p), dup, 5)
    assert any(set(d) >= {"N1[0]", "N1[1]"} for d in sc.dependencies)


def test_printed_examples():
    p = make_params(m=1, n_max=6)
    pc = printed_coefficients(p, 4)
    A1 = -pc.g1.T
    assert A1[pc.index("N1[2]"), pc.index("F[1]")] == 2
    assert A1[pc.index("N1[0]"), pc.index("F[0]")] == 1
    assert A1[pc.index("N2[0]"), pc.index("F[0]")] == -1
    assert np.count_nonzero(A1[pc.index("N1[0]")]) == 1
    p2 = make_params(m=2, n_max=8)
    A1 = -printed_coefficients(p2, 4).g1.T
    assert A1[pc.index("N1[2]"), pc.index("F[1]")] == 4
    assert A1[pc.index("N1[2]"), pc.index("F[0]")] == 2
    # cross-check the tail against the solved constants
    d = lstsq(p2)
    Ad = -d.g1.T
    assert Ad[d.index("N1[2]"), d.index("F[1]")] == pytest.approx(4)
    assert Ad[d.index("N1[2]"), d.index("F[0]")] == pytest.approx(2)


def test_compare_m1_empty_and_self():
    p = make_params(m=1, n_max=6)
    d = lstsq(p)
    assert compare_coefficients(d, printed_coefficients(p, 5), max_row_depth=4).is_empty
    assert compare_coefficients(d, d).is_empty


def test_compare_m2_only_detuning():
    p = make_params(m=2, n_max=8)
    rep = compare_coefficients(lstsq(p), printed_coefficients(p, 6), max_row_depth=4)
    keys = {(e["row_label"], e["col_label"], e["part"]) for e in rep.entries}
    expect = {(f"I[{n}]", f"F[{n}]", "static") for n in range(5)} | {(f"F[{n}]", f"I[{n}]", "static") for n in range(5)}
    assert keys == expect
    for e in rep.entries:
        sign = 1 if e["row_label"].startswith("I") else -1
        assert e["derived"] == pytest.approx(sign * (p.e2 - p.e1 - 2 * p.omega))
        assert e["printed"] == pytest.approx(sign * (p.e2 - p.e1 - p.omega))
    lit = compare_coefficients(lstsq(p), printed_coefficients(p, 6, literal_tail=True), max_row_depth=4)
    assert len(lit) > len(rep)
    assert '"row_label"' in rep.to_json()


def test_compare_label_mismatch():
    p = make_params(m=1, n_max=6)
    with pytest.raises(ValueError):
        compare_coefficients(lstsq(p), printed_coefficients(p, 3))


def test_conserved_examples():
    p = make_params(m=1, n_max=5)
    S = build_hierarchy_set(p, "set1", 3)
    assert conserved_functionals(S, product_state(p.dims, 2, 0)).values[0] == pytest.approx(0)
    cf = conserved_functionals(S, product_state(p.dims, 1, 2))
    assert cf.values[0] == pytest.approx(0)
    assert cf.double_occ == [0, 0, 0, 0]
    # double occupation is visible on the doubly occupied sector
    v = np.zeros(p.dims.total_dim)
    v[3 * p.dims.field_dim + 2] = 1
    cf = conserved_functionals(S, QuantumState.pure(v, p.dims))
    assert cf.double_occ[:3] == pytest.approx([1, 2, 2])
    with pytest.raises(ValueError):
        conserved_functionals(build_hierarchy_set(p, "set2", 3), product_state(p.dims, 1, 2))


def test_derive_dispatch():
    p = make_params(m=1, n_max=5)
    with pytest.raises(ValueError):
        derive_structure_constants(p, method="svd")
    assert derive_structure_constants(p, "set1", 4, 4, "lstsq").method == "lstsq"
