import math

import numpy as np
import pytest

from fastcubic.errors import SolverBudgetExceeded
from fastcubic.linear_solver import (ShiftedOperator, agd_iteration_bound, solve, solve_agd,
                                     solve_svrg, svrg_epoch_budget)
from fastcubic.oracles import HessianOperator, make_rng
from fastcubic.problems import make_sigmoid_sum

from conftest import random_symmetric


def _shifted_instance(rng, d=20):
    H = random_symmetric(rng, d)
    lam_min = np.linalg.eigvalsh(H)[0]
    shift = -lam_min + rng.uniform(0.05, 1.0)
    op = ShiftedOperator.build(HessianOperator.from_matrix(H), shift, 1.0, lam_min + shift)
    return op, H + shift * np.eye(d)


def test_diagonal_example():
    op = ShiftedOperator.build(HessianOperator.from_matrix(np.diag([1.0, 2.0])), 1.0, 2.0, 2.0)
    x, rep = solve_agd(op, np.ones(2), 1e-8)
    assert np.linalg.norm(x - [0.5, 1 / 3]) <= 1e-8 * math.sqrt(2)
    assert rep.hv_calls >= rep.iterations


def test_zero_rhs():
    op = ShiftedOperator.build(HessianOperator.from_matrix(np.eye(3)), 1.0, 1.0, 1.0)
    x, rep = solve_agd(op, np.zeros(3), 1e-6)
    assert not x.any() and rep.iterations == 0
    x, rep = solve_svrg(op, np.zeros(3), 1e-6, make_rng(0))
    assert not x.any() and rep.iterations == 0


def test_agd_random_instances():
    rng = make_rng(0)
    for _ in range(20):
        op, M = _shifted_instance(rng)
        b = rng.standard_normal(op.dim)
        eps = 10.0 ** rng.uniform(-10, -2)
        x, _ = solve_agd(op, b, eps)
        assert np.linalg.norm(x - np.linalg.solve(M, b)) <= eps * np.linalg.norm(b)


def test_operator_bounds_certified():
    rng = make_rng(1)
    for _ in range(10):
        op, M = _shifted_instance(rng, 8)
        ev = np.linalg.eigvalsh(M)
        assert op.mu_lower <= ev[0] + 1e-12 and ev[-1] <= op.L_upper + 1e-12


def test_shifted_operator_validation():
    base = HessianOperator.from_matrix(np.eye(2))
    with pytest.raises(ValueError):
        ShiftedOperator(base, 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        ShiftedOperator(base, 0.0, 2.0, 1.0)


def test_agd_budget_exceeded_when_mu_is_wrong():
    # claimed mu far above the truth; the early-exit test can then never fire in time
    H = np.diag(np.geomspace(1e-4, 1.0, 10))
    op = ShiftedOperator(HessianOperator.from_matrix(H), 0.0, 0.5, 1.0)
    with pytest.raises(SolverBudgetExceeded):
        solve_agd(op, np.ones(10), 1e-10, max_iter=3)


def test_agd_rejects_bad_eps():
    op = ShiftedOperator.build(HessianOperator.from_matrix(np.eye(2)), 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        solve_agd(op, np.ones(2), 1.5)


def test_agd_iteration_slope():
    """Iterations vs kappa_op on diagonal operators: log-log slope in [0.4, 0.6]."""
    kappas = [10.0, 1e2, 1e3, 1e4]
    iters = []
    d = 50
    b = np.ones(d) / math.sqrt(d)
    for k in kappas:
        H = np.diag(np.geomspace(1.0, k, d))
        op = ShiftedOperator(HessianOperator.from_matrix(H), 0.0, 1.0, k)
        _, rep = solve_agd(op, b, 1e-8)
        iters.append(rep.iterations)
    slope = np.polyfit(np.log(kappas), np.log(iters), 1)[0]
    assert 0.4 <= slope <= 0.6, (iters, slope)


def test_iteration_bound_monotone():
    assert agd_iteration_bound(1.0, 1e-3, 1.0) == 1
    assert agd_iteration_bound(100, 1e-6, 0.1) > agd_iteration_bound(10, 1e-6, 0.1)
    assert agd_iteration_bound(100, 1e-9, 0.1) > agd_iteration_bound(100, 1e-3, 0.1)
    assert svrg_epoch_budget(1e3, 10, 1e-6, 1e-2) > svrg_epoch_budget(1e3, 1000, 1e-6, 1e-2)


def test_svrg_single_component_matches_agd():
    rng = make_rng(2)
    op, M = _shifted_instance(rng, 6)
    b = rng.standard_normal(6)
    eps = 1e-8
    xa, _ = solve_agd(op, b, eps)
    xs, rep = solve_svrg(op, b, eps, make_rng(3))
    assert np.linalg.norm(xa - xs) <= 2 * eps * np.linalg.norm(b)
    assert rep.strategy == "svrg"


def test_svrg_sigmoid_sum():
    rng = make_rng(4)
    spec = make_sigmoid_sum(rng, 10, 50)
    x = rng.standard_normal(10)
    hop = HessianOperator.from_oracle(spec.oracle, x)
    L2 = spec.params.L2
    op = ShiftedOperator.build(hop, L2, L2, L2 * 0.01)
    b = rng.standard_normal(10)
    M = spec.oracle.hessian_matrix(x) + L2 * np.eye(10)
    for eps in (1e-4, 1e-8):
        xs, rep = solve(op, b, eps, "svrg", make_rng(5))
        assert np.linalg.norm(xs - np.linalg.solve(M, b)) <= eps * np.linalg.norm(b)
        assert rep.component_calls > 0
        assert hop.counts["solver:component"] > 0


def test_svrg_component_path_without_factors():
    # generic per-component loop (no rank-one fast path)
    rng = make_rng(6)
    mats = [random_symmetric(rng, 4, 0.0, 1.0) for _ in range(5)]
    hop = HessianOperator.from_components(mats)
    op = ShiftedOperator.build(hop, 0.5, 1.0, 0.5)
    b = rng.standard_normal(4)
    xs, _ = solve_svrg(op, b, 1e-7, make_rng(1))
    M = sum(mats) / 5 + 0.5 * np.eye(4)
    assert np.linalg.norm(xs - np.linalg.solve(M, b)) <= 1e-7 * np.linalg.norm(b)


def test_svrg_deterministic():
    rng = make_rng(7)
    spec = make_sigmoid_sum(rng, 5, 20)
    hop = HessianOperator.from_oracle(spec.oracle, np.zeros(5))
    op = ShiftedOperator.build(hop, 0.5, spec.params.L2, 0.4)
    b = np.arange(5.0)
    a, _ = solve_svrg(op, b, 1e-6, make_rng(9))
    c, _ = solve_svrg(op, b, 1e-6, make_rng(9))
    assert np.array_equal(a, c)


def test_svrg_budget_exceeded():
    rng = make_rng(8)
    spec = make_sigmoid_sum(rng, 5, 20)
    hop = HessianOperator.from_oracle(spec.oracle, np.zeros(5))
    op = ShiftedOperator.build(hop, 0.5, spec.params.L2, 0.4)
    with pytest.raises(SolverBudgetExceeded):
        solve_svrg(op, np.ones(5), 1e-10, make_rng(0), max_epochs=1)


def test_solve_dispatch_falls_back_to_agd():
    op = ShiftedOperator.build(HessianOperator.from_matrix(np.eye(2)), 1.0, 1.0, 1.0)
    _, rep = solve(op, np.ones(2), 1e-6, "svrg", make_rng(0))
    assert rep.strategy == "agd"
    with pytest.raises(ValueError):
        solve(op, np.ones(2), 1e-6, "cg")
