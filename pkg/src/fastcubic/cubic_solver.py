"""Approximate cubic-model minimization from Hessian-vector products only.

The solver walks a decreasing schedule of regularization values ``lam``,
starting from ``2B``. At each value it solves ``(H + lam I) v = -g``
inexactly and compares ``L ||v||`` with ``2 lam``:

* inside the band ``2 lam +- L eps``: done (``Case1Direct``);
* above it: ``lam*`` is bracketed by the previous and current values, so
  bisect (``Case1Binary``);
* below it: estimate ``lam + lambda_min(H)`` through the leading eigenvector
  of ``(H + lam I)^{-1}`` and either shrink ``lam`` or stop with an
  approximate bottom eigenvector (``Case2Eig``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .cubic_model import CubicSubproblem, crude_lambda_bound, eval_m
from .eigen import approx_min_eigvec, inverse_power_leading
from .errors import AlgorithmInvariantViolated, ConfigError
from .linear_solver import ShiftedOperator, solve

CASE1_DIRECT = "Case1Direct"
CASE1_BINARY = "Case1Binary"
CASE2_EIG = "Case2Eig"

EPS_FLOOR = 1e-13
EPS_CAP = 1e-6


def raw_eps_tilde(L: float, gnorm: float, kappa: float, B: float) -> float:
    """``1 / (10000 max{L, ||g||, 3 kappa/10, B, 1}^20)``; often underflows to 0."""
    top = max(L, gnorm, 0.3 * kappa, B, 1.0)
    with np.errstate(over="ignore", under="ignore"):
        return float(1.0 / (1e4 * np.float64(top) ** 20))


@dataclass
class SolverConfig:
    kappa: float
    eps_tilde: float
    eps_hat: float
    B: float
    eps_tilde_raw: float
    max_outer_lambda_steps: int
    strategy: str = "agd"
    power_const: Optional[float] = None

    def __post_init__(self):
        if not self.kappa > 0:
            raise ConfigError("kappa must be positive")
        if not self.eps_tilde > 0:
            raise ConfigError("eps_tilde must be positive")
        if self.strategy not in ("agd", "svrg"):
            raise ConfigError(f"unknown solver strategy {self.strategy!r}")

    @classmethod
    def build(cls, p: CubicSubproblem, kappa: float, strategy: str = "agd",
              eps_floor: float = EPS_FLOOR, eps_cap: float = EPS_CAP,
              power_const: Optional[float] = None) -> "SolverConfig":
        if not kappa > 0:
            raise ConfigError("kappa must be positive")
        if not 0 < eps_floor <= eps_cap:
            raise ConfigError("need 0 < eps_floor <= eps_cap")
        B = crude_lambda_bound(p, kappa)
        gnorm = float(np.linalg.norm(p.g))
        raw = raw_eps_tilde(p.L, gnorm, kappa, B)
        eps = min(max(raw, eps_floor), eps_cap)
        steps = int(math.ceil(math.log(10.0 * B * kappa) / math.log(4.0 / 3.0))) + 2
        return cls(float(kappa), eps, 1.0 / (60.0 * B), B, raw, max(steps, 2), strategy, power_const)


@dataclass
class TraceRecord:
    i: int
    lam: float
    v_norm: float
    delta: Optional[float]
    decision: str


@dataclass
class CubicSolution:
    lam: float
    v: np.ndarray
    v_min: Optional[np.ndarray]
    branch: str
    trace: List[TraceRecord] = field(default_factory=list)
    hv_calls: int = 0
    eps_tilde: float = 0.0
    eps_tilde_raw: float = 0.0
    bs_iterations: int = 0
    bs_bound: int = 0


def _solver_calls(p: CubicSubproblem) -> int:
    return sum(v for k, v in p.h_op.counts.items() if k.startswith("solver"))


def _shifted(p: CubicSubproblem, lam: float, kappa: float) -> ShiftedOperator:
    # lam + lambda_min(H) >= 3/(10 kappa) along the whole schedule
    return ShiftedOperator.build(p.h_op, lam, p.L2, 0.3 / kappa)


def _neg_inverse_g(p: CubicSubproblem, lam: float, acc: float, cfg: SolverConfig, rng):
    """``v`` with ``||v + (H + lam I)^{-1} g|| <= acc``."""
    gnorm = float(np.linalg.norm(p.g))
    if gnorm == 0.0:
        return np.zeros(p.dim)
    eps_rel = min(acc / gnorm, 0.5)
    x, _ = solve(_shifted(p, lam, cfg.kappa), p.g, eps_rel, cfg.strategy, rng)
    return -x


def binary_search_bound(lam_hi: float, lam_lo: float, B: float, L: float, eps_tilde: float,
                        kappa: float) -> int:
    """``ceil(log2((lam_hi - lam_lo) 40 B / (c1 L eps)))`` with ``c1 = 3/(10 kappa)``."""
    c1 = 0.3 / kappa
    width = max(lam_hi - lam_lo, 0.0)
    if width == 0.0:
        return 1
    ratio = width * 40.0 * B / (c1 * L * eps_tilde)
    return max(1, int(math.ceil(math.log2(max(ratio, 2.0))))) + 1


def binary_search(p: CubicSubproblem, lambda_hi: float, lambda_lo: float, eps_tilde: float,
                  cfg: SolverConfig, rng, slack: int = 5) -> CubicSolution:
    """Bisect ``[lambda_lo, lambda_hi]`` until ``L||v||`` lands in the band ``2 lam +- L eps``.

    Requires ``L||(H+hi I)^{-1} g|| <= 2 hi`` and ``L||(H+lo I)^{-1} g|| >= 2 lo``.

    Close to the hard case the band can be narrower than one ulp of ``lam``.
    Once probes have landed on both sides of the band and no double lies
    strictly inside the bracket, the probe closest to the band is returned
    (trace decision ``bs:resolved``).
    """
    if lambda_hi < lambda_lo:
        raise ValueError("lambda_hi must be >= lambda_lo")
    L = p.L
    bound = binary_search_bound(lambda_hi, lambda_lo, cfg.B, L, eps_tilde, cfg.kappa)
    cap = bound + slack
    before = _solver_calls(p)
    l1, l2 = float(lambda_hi), float(lambda_lo)
    trace = []
    best = None
    sides = set()
    for t in range(1, cap + 1):
        mid = 0.5 * (l1 + l2)
        if len(sides) == 2 and not l2 < mid < l1:
            miss, lam, v = best
            trace.append(TraceRecord(t, lam, float(np.linalg.norm(v)), None, "bs:resolved"))
            return CubicSolution(lam, v, None, CASE1_BINARY, trace, _solver_calls(p) - before,
                                 eps_tilde, cfg.eps_tilde_raw, t - 1, bound)
        v = _neg_inverse_g(p, mid, 0.5 * eps_tilde, cfg, rng)
        lv = L * float(np.linalg.norm(v))
        if 2.0 * mid - L * eps_tilde <= lv <= 2.0 * mid + L * eps_tilde:
            trace.append(TraceRecord(t, mid, lv / L, None, "bs:return"))
            return CubicSolution(mid, v, None, CASE1_BINARY, trace, _solver_calls(p) - before,
                                 eps_tilde, cfg.eps_tilde_raw, t, bound)
        miss = abs(lv - 2.0 * mid)
        if best is None or miss < best[0]:
            best = (miss, mid, v)
        if lv + L * eps_tilde <= 2.0 * mid:
            l1 = mid
            sides.add("hi")
            trace.append(TraceRecord(t, mid, lv / L, None, "bs:lower"))
        else:
            l2 = mid
            sides.add("lo")
            trace.append(TraceRecord(t, mid, lv / L, None, "bs:raise"))
    raise AlgorithmInvariantViolated(
        f"binary search exceeded {cap} iterations on [{lambda_lo:.17g}, {lambda_hi:.17g}]")


def fast_cubic_min(p: CubicSubproblem, cfg: SolverConfig, rng) -> CubicSolution:
    """Approximate minimizer data ``(lam, v, v_min)`` for the cubic model ``p``."""
    L = p.L
    eps = cfg.eps_tilde
    before = _solver_calls(p)
    lam = 2.0 * cfg.B
    prev = None
    trace: List[TraceRecord] = []

    def done(sol: CubicSolution) -> CubicSolution:
        sol.trace = trace + sol.trace
        sol.hv_calls = _solver_calls(p) - before
        sol.eps_tilde = eps
        sol.eps_tilde_raw = cfg.eps_tilde_raw
        return sol

    for i in range(cfg.max_outer_lambda_steps):
        v = _neg_inverse_g(p, lam, eps, cfg, rng)
        vn = float(np.linalg.norm(v))
        lv = L * vn
        if 2.0 * lam - L * eps <= lv <= 2.0 * lam + L * eps:
            trace.append(TraceRecord(i, lam, vn, None, "return"))
            return done(CubicSolution(lam, v, None, CASE1_DIRECT))
        if lv > 2.0 * lam + L * eps:
            if prev is None:
                raise AlgorithmInvariantViolated("bracket requested at the first lambda")
            trace.append(TraceRecord(i, lam, vn, None, "binary"))
            return done(binary_search(p, prev, lam, eps, cfg, rng))
        op = _shifted(p, lam, cfg.kappa)
        inner = 0.01 / (lam + p.L2)
        w = inverse_power_leading(op, rng, inner, cfg.strategy, cfg.power_const).vector
        w_t, _ = solve(op, w, min(cfg.eps_hat, 0.5), cfg.strategy, rng)
        delta = 0.5 / (float(w_t @ w) - cfg.eps_hat)
        if delta > 0.5 / cfg.kappa:
            trace.append(TraceRecord(i, lam, vn, delta, "shrink"))
            prev = lam
            lam = max(0.0, lam - 0.5 * delta)
            continue
        trace.append(TraceRecord(i, lam, vn, delta, "eig"))
        eig = approx_min_eigvec(p.h_op, p.L2, cfg.kappa, rng, g=p.g, strategy=cfg.strategy,
                                power_const=cfg.power_const)
        return done(CubicSolution(lam, v, eig.vector, CASE2_EIG))
    raise AlgorithmInvariantViolated(
        f"lambda schedule exceeded {cfg.max_outer_lambda_steps} steps")


def choose_step(p: CubicSubproblem, sol: CubicSolution):
    """``argmin`` of the model over ``v`` and ``lam v_min / (2L)``; returns ``(h, m(h))``."""
    best = sol.v
    best_m = eval_m(p, sol.v)
    if sol.v_min is not None:
        cand = sol.lam * sol.v_min / (2.0 * p.L)
        mc = eval_m(p, cand)
        if mc < best_m:
            best, best_m = cand, mc
    return best, best_m


def validate_solution(p: CubicSubproblem, sol: CubicSolution) -> float:
    """``||v + (H + lam I)^{-1} g||`` by a dense solve (verification only).

    A plain float64 solve is off by about ``cond * eps_machine * ||x||``, which
    exceeds the smallest ``eps_tilde`` values, so the reference is polished by
    iterative refinement with residuals in extended precision.
    """
    H = p.h_op.to_dense(tag="verify")
    M = H + sol.lam * np.eye(p.dim)
    exact = np.linalg.solve(M, p.g)
    Mx = M.astype(np.longdouble)
    gx = p.g.astype(np.longdouble)
    for _ in range(3):
        r = (gx - Mx @ exact.astype(np.longdouble)).astype(np.float64)
        exact = exact + np.linalg.solve(M, r)
    return float(np.linalg.norm(sol.v + exact))
