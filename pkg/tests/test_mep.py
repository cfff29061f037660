import math

import numpy as np
import pytest

from mjcm.errors import ConvergenceError
from mjcm.mep import (
    MepState,
    build_rho,
    duality_gradient_check,
    entropy,
    fit_lambdas,
    kubo_mori_covariance,
    log_partition,
)
from mjcm.model import OperatorSet, build_fundamental_set, build_hierarchy_set, product_state
from mjcm.operators import HilbertDims, QuantumState

from conftest import make_params


def test_zero_multipliers_maximally_mixed():
    p = make_params(m=1, n_max=2)
    S = build_fundamental_set(p)
    ms = MepState.from_lambdas(S, {})
    assert ms.lambda0 == pytest.approx(math.log(12))
    assert np.allclose(build_rho(ms).data, np.eye(12) / 12)
    assert entropy(ms.rho()) == pytest.approx(math.log(12))


def test_two_level_gibbs_factor():
    p = make_params(m=1, n_max=1)
    S = build_fundamental_set(p)
    lam = 0.7
    ms = MepState.from_lambdas(S, {"N2[0]": lam})
    rho = build_rho(ms).data
    d = p.dims.field_dim
    # within the mode-1-empty sector, level 2 occupation follows the Gibbs factor
    p_occ = rho[1 * d, 1 * d].real
    p_emp = rho[0, 0].real
    assert p_occ / (p_occ + p_emp) == pytest.approx(math.exp(-lam) / (1 + math.exp(-lam)))
    assert ms.means["N2[0]"] == pytest.approx(math.exp(-lam) / (1 + math.exp(-lam)))


def test_truncated_planck_mean():
    p = make_params(m=1, n_max=6)
    bw = 0.8
    ms = MepState.from_lambdas(build_fundamental_set(p), {"Delta[0]": bw})
    n = np.arange(7)
    w = np.exp(-bw * n)
    assert ms.means["Delta[0]"] == pytest.approx((n * w).sum() / w.sum(), abs=1e-13)


def test_overflow_guard():
    p = make_params(m=1, n_max=4)
    with pytest.raises(OverflowError, match="scale"):
        MepState.from_lambdas(build_fundamental_set(p), {"Delta[0]": 400.0})


def test_entropy_examples():
    dims = HilbertDims(2)
    assert entropy(product_state(dims, 1, 0)) == 0
    assert entropy(QuantumState.density(np.eye(12) / 12, dims)) == pytest.approx(math.log(12))
    rho = np.zeros((12, 12))
    rho[0, 0] = rho[5, 5] = 0.5
    assert entropy(QuantumState.density(rho, dims)) == pytest.approx(math.log(2))


def test_fit_maximally_mixed_targets():
    p = make_params(m=1, n_max=3)
    S = build_fundamental_set(p)
    mixed = MepState.from_lambdas(S, {}).means
    f = fit_lambdas(S, mixed)
    assert max(abs(v) for v in f.lambdas.values()) < 1e-9


def test_fit_round_trip(rng):
    p = make_params(m=2, n_max=4)
    S = build_fundamental_set(p)
    lam = dict(zip(S.labels, 0.4 * rng.normal(size=6)))
    ms = MepState.from_lambdas(S, lam)
    f = fit_lambdas(S, ms.means)
    assert f.info["gauge"] == []
    assert max(abs(f.lambdas[k] - lam[k]) for k in lam) < 1e-7
    assert max(abs(f.means[k] - ms.means[k]) for k in lam) < 1e-10
    again = fit_lambdas(S, f.means)
    assert max(abs(again.lambdas[k] - f.lambdas[k]) for k in lam) < 1e-8


def test_fit_reports_gauge():
    p = make_params(m=1, n_max=2)
    base = build_fundamental_set(p)
    # N1 + N2 - N21 and N1, N2, N21 are dependent once a combination is appended
    ops = list(base.operators) + [base["N1[0]"] + base["N2[0]"]]
    labels = list(base.labels) + ["N1[1]"]
    S = OperatorSet("set1", 1, tuple(labels), tuple(ops), p.dims)
    ms = MepState.from_lambdas(S, {"N1[0]": 0.3, "N2[0]": 0.1, "N1[1]": 0.2})
    f = fit_lambdas(S, {k: ms.means[k] for k in ("N1[0]", "N2[0]", "N1[1]")})
    assert len(f.info["gauge"]) == 1
    assert set(f.info["gauge"][0]) == {"N1[0]", "N2[0]", "N1[1]"}
    assert np.allclose(build_rho(f).data, build_rho(ms).data, atol=1e-9)


def test_fit_boundary_and_infeasible():
    p = make_params(m=1, n_max=3)
    S = build_fundamental_set(p)
    with pytest.raises(ConvergenceError, match="upper"):
        fit_lambdas(S, {"N2[0]": 1.0})
    with pytest.raises(ConvergenceError, match="upper"):
        fit_lambdas(S, {"N1[0]": 1.2})
    with pytest.raises(KeyError):
        fit_lambdas(S, {"N3[0]": 0.2})
    with pytest.raises(ConvergenceError, match="iterations"):
        fit_lambdas(S, {"N1[0]": 0.2, "Delta[0]": 2.2}, max_iter=1)


def test_mixed_information_maximises_entropy():
    # two constraints out of three; the free multiplier stays zero and the
    # fitted state beats every grid state that matches the constraints
    p = make_params(m=1, n_max=1)
    S = build_fundamental_set(p).subset(["N1[0]", "N2[0]", "N21[0]"])
    targets = {"N1[0]": 0.35, "N2[0]": 0.6}
    f = fit_lambdas(S, targets)
    assert f.lambdas["N21[0]"] == 0
    s_fit = entropy(f.rho())
    # fermion occupations (n1, n2) with probabilities q00, q01, q10, q11; field
    # sector maximally mixed; N21 = q11 free
    best = -np.inf
    for q11 in np.linspace(0.0, 0.35, 3501):
        q10, q01 = 0.35 - q11, 0.6 - q11
        q00 = 1 - q10 - q01 - q11
        if min(q00, q10, q01) < 0:
            continue
        q = np.array([q00, q01, q10, q11])
        q = q[q > 0]
        best = max(best, -(q * np.log(q)).sum() + math.log(p.dims.field_dim))
    assert s_fit >= best - 1e-9
    assert s_fit - best < 1e-6
    assert f.means["N21[0]"] == pytest.approx(0.35 * 0.6, abs=1e-9)


def test_duality_checks():
    p = make_params(m=1, n_max=4)
    S = build_fundamental_set(p)
    assert duality_gradient_check(MepState.from_lambdas(S, {}), 1e-5) < 1e-8
    single = S.subset(["Delta[0]"])
    ms = MepState.from_lambdas(single, {"Delta[0]": 0.6})
    n = np.arange(5)
    analytic = -(n * np.exp(-0.6 * n)).sum() / np.exp(-0.6 * n).sum()
    lam0 = lambda x: math.log(4 * np.exp(-x * n).sum())
    assert (lam0(0.6 + 1e-6) - lam0(0.6 - 1e-6)) / 2e-6 == pytest.approx(analytic, abs=1e-8)
    assert duality_gradient_check(ms, 1e-5) < 1e-8
    assert log_partition(single, np.array([0.6])) == pytest.approx(lam0(0.6))


def test_duality_second_order():
    p = make_params(m=2, n_max=3)
    S = build_fundamental_set(p)
    ms = MepState.from_lambdas(S, {"N1[0]": 0.5, "Delta[0]": 0.9, "I[0]": 0.4})
    e1, e2 = duality_gradient_check(ms, 1e-2), duality_gradient_check(ms, 5e-3)
    assert 3.5 < e1 / e2 < 4.5


def test_kubo_mori_matches_finite_difference():
    p = make_params(m=1, n_max=2)
    S = build_fundamental_set(p)
    lam = np.array([0.2, -0.1, 0.4, 0.3, -0.2, 0.1])
    H = kubo_mori_covariance(S, lam)
    h = 1e-4
    for j in range(6):
        e = np.zeros(6)
        e[j] = h
        mp = MepState.from_lambdas(S, dict(zip(S.labels, lam + e))).means
        mm = MepState.from_lambdas(S, dict(zip(S.labels, lam - e))).means
        col = -np.array([(mp[k] - mm[k]) / (2 * h) for k in S.labels])
        assert np.allclose(H[:, j], col, atol=1e-7)


def test_mep_json():
    p = make_params(m=1, n_max=2)
    ms = MepState.from_lambdas(build_hierarchy_set(p, "set2", 1), {"N2[1]": 0.2})
    d = ms.to_dict()
    assert d["set_variant"] == "set2" and d["depth"] == 1
    assert set(d) == {"set_variant", "depth", "lambdas", "lambda0", "means"}
