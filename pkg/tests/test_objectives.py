import numpy as np
import pytest

from switchopt.graph import build_laplacian
from switchopt.objectives import (QuadraticObjective, SwitchedObjectiveFamily,
                                  kkt_residuals, kkt_solve, lyapunov,
                                  sample_family)


def obj(curv, lin):
    return QuadraticObjective(curvature=np.asarray(curv, float),
                              linear=np.asarray(lin, float))


def test_gradient_identity_curvature():
    np.testing.assert_array_equal(obj([1, 1], [0, 0]).gradient([1.0, 2.0]), [1.0, 2.0])


def test_gradient_at_origin_is_linear_term():
    np.testing.assert_array_equal(obj([10, 20], [-10, 10]).gradient([0.0, 0.0]), [-10.0, 10.0])


def test_gradient_direct_evaluation():
    np.testing.assert_array_equal(obj([1, 2], [1, -1]).gradient([2.0, 3.0]), [3.0, 5.0])


def test_gradient_dimension_mismatch():
    with pytest.raises(ValueError):
        obj([1, 2], [0, 0]).gradient([1.0, 2.0, 3.0])


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    o = obj(rng.uniform(10, 20, 6), rng.uniform(-10, 10, 6))
    q = rng.standard_normal(6) * 5
    h = 1e-6
    fd = np.empty(6)
    for i in range(6):
        e = np.zeros(6)
        e[i] = h
        fd[i] = (o.value(q + e) - o.value(q - e)) / (2 * h)
    g = o.gradient(q)
    np.testing.assert_allclose(fd, g, rtol=1e-6, atol=1e-6)


def test_positivity_enforced():
    with pytest.raises(ValueError):
        obj([1.0, 0.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        obj([1.0, -2.0], [0.0, 0.0])


def test_kkt_symmetric_split():
    sol = kkt_solve(obj([1, 1], [0, 0]), 100.0)
    np.testing.assert_allclose(sol.q_star, [50.0, 50.0])
    assert sol.mu_star == pytest.approx(-50.0)


def test_kkt_small_system():
    # oracle: solve the full 3x3 KKT linear system [[P, 1], [1^T, 0]]
    P = np.diag([1.0, 2.0])
    A = np.block([[P, np.ones((2, 1))], [np.ones((1, 2)), np.zeros((1, 1))]])
    rhs = np.array([0.0, 0.0, 3.0])
    expected = np.linalg.solve(A, rhs)
    np.testing.assert_allclose(expected[:2], [2.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(expected[2], -2.0, atol=1e-12)

    sol = kkt_solve(obj([1, 2], [0, 0]), 3.0)
    np.testing.assert_allclose(sol.q_star, expected[:2], atol=1e-12)
    assert sol.mu_star == pytest.approx(expected[2], abs=1e-12)


def test_kkt_residuals_and_laplacian_stationarity():
    rng = np.random.default_rng(7)
    lap = build_laplacian("path", 20)
    for _ in range(30):
        o = obj(rng.uniform(10, 20, 20), rng.uniform(-10, 10, 20))
        d = float(rng.uniform(10, 200))
        sol = kkt_solve(o, d)
        stat, feas = kkt_residuals(o, d, sol)
        assert stat <= 1e-9
        assert feas <= 1e-9
        assert np.linalg.norm(lap.L @ o.gradient(sol.q_star)) <= 1e-8


def test_kkt_minimizer_is_unique_minimum():
    rng = np.random.default_rng(11)
    o = obj(rng.uniform(10, 20, 5), rng.uniform(-10, 10, 5))
    d = 40.0
    sol = kkt_solve(o, d)
    best = o.value(sol.q_star)
    for _ in range(50):
        dq = rng.standard_normal(5)
        dq -= dq.mean()
        if np.linalg.norm(dq) < 1e-8:
            continue
        assert o.value(sol.q_star + dq) > best


def test_lyapunov_zero_at_optimum():
    lap = build_laplacian("path", 2)
    o = obj([1, 1], [0, 0])
    sol = kkt_solve(o, 100.0)
    phi_star = float(o.value(sol.q_star))
    assert lyapunov(sol.q_star, np.zeros(2), o, lap, phi_star) == pytest.approx(0.0, abs=1e-12)


def test_lyapunov_ignores_consensus_momentum():
    lap = build_laplacian("path", 4)
    o = obj([1, 2, 3, 4], [1, -1, 0, 2])
    sol = kkt_solve(o, 10.0)
    phi_star = float(o.value(sol.q_star))
    q = sol.q_star + np.array([1.0, -1.0, 0.5, -0.5])
    base = lyapunov(q, np.zeros(4), o, lap, phi_star)
    for c in (0.5, -3.0, 10.0):
        v = lyapunov(q, c * np.ones(4), o, lap, phi_star)
        assert v == pytest.approx(base, abs=1e-9)


def test_lyapunov_worked_example():
    # oracle: phi(q) - phi* = 0.5*(3600+1600) - 2500 = 100 and
    # p^T pinv(L) p = 1.0 with p=(1,-1), via numpy.linalg.pinv
    lap = build_laplacian("path", 2)
    o = obj([1, 1], [0, 0])
    p = np.array([1.0, -1.0])
    momentum_term = p @ np.linalg.pinv(np.array([[1.0, -1.0], [-1.0, 1.0]])) @ p
    assert momentum_term == pytest.approx(1.0, abs=1e-12)
    v = lyapunov([60.0, 40.0], p, o, lap, phi_star=2500.0)
    assert v == pytest.approx(100.0 + 0.5, abs=1e-9)


def test_lyapunov_positive_away_from_rest():
    lap = build_laplacian("path", 3)
    rng = np.random.default_rng(5)
    o = obj(rng.uniform(10, 20, 3), rng.uniform(-10, 10, 3))
    d = 12.0
    sol = kkt_solve(o, d)
    phi_star = float(o.value(sol.q_star))
    for scale in (1e-3, 1.0, 10.0):
        for _ in range(20):
            dq = rng.standard_normal(3)
            dq -= dq.mean()
            p = rng.standard_normal(3)
            p -= p.mean()
            if np.linalg.norm(dq) + np.linalg.norm(p) < 1e-9:
                continue
            v = lyapunov(sol.q_star + scale * dq, scale * p, o, lap, phi_star)
            assert v > 0


def test_lyapunov_definite_on_feasible_grid():
    # 2-D feasible slice around (q*, 0) for n=3: zero only at the center
    lap = build_laplacian("path", 3)
    o = obj([12.0, 15.0, 18.0], [3.0, -2.0, 5.0])
    sol = kkt_solve(o, 9.0)
    phi_star = float(o.value(sol.q_star))
    eq = np.array([1.0, -1.0, 0.0]) / np.sqrt(2)
    ep = np.array([1.0, 1.0, -2.0]) / np.sqrt(6)
    for a in np.linspace(-2.0, 2.0, 9):
        for b in np.linspace(-2.0, 2.0, 9):
            v = lyapunov(sol.q_star + a * eq, b * ep, o, lap, phi_star)
            if a == 0.0 and b == 0.0:
                assert v == pytest.approx(0.0, abs=1e-10)
            else:
                assert v > 0


def test_sample_family_deterministic():
    a = sample_family(42, 20, 2, 100.0)
    b = sample_family(42, 20, 2, 100.0)
    for ma, mb in zip(a.modes, b.modes):
        np.testing.assert_array_equal(ma.curvature, mb.curvature)
        np.testing.assert_array_equal(ma.linear, mb.linear)
    c = sample_family(43, 20, 2, 100.0)
    assert not np.array_equal(a.modes[0].curvature, c.modes[0].curvature)


def test_sample_family_ranges():
    fam = sample_family(0, 50, 3, 100.0)
    for m in fam.modes:
        assert np.all(m.curvature >= 10.0) and np.all(m.curvature <= 20.0)
        assert np.all(m.linear >= -10.0) and np.all(m.linear <= 10.0)


def test_sample_family_kkt_solvable():
    fam = sample_family(123, 20, 2, 100.0)
    for s in (1, 2):
        sol = fam.kkt(s)
        stat, feas = kkt_residuals(fam.mode(s), fam.d, sol)
        assert stat <= 1e-9 and feas <= 1e-9


def test_sample_family_bad_ranges():
    with pytest.raises(ValueError):
        sample_family(0, 4, 2, 10.0, curvature_range=(0.0, 1.0))
    with pytest.raises(ValueError):
        sample_family(0, 4, 2, 10.0, curvature_range=(-1.0, 1.0))
    with pytest.raises(ValueError):
        sample_family(0, 4, 2, 10.0, linear_range=(2.0, 1.0))


def test_family_mode_index_bounds():
    fam = sample_family(0, 4, 2, 10.0)
    with pytest.raises(ValueError):
        fam.mode(0)
    with pytest.raises(ValueError):
        fam.mode(3)


def test_family_kkt_cache_returns_same_object():
    fam = sample_family(0, 4, 2, 10.0)
    assert fam.kkt(1) is fam.kkt(1)
