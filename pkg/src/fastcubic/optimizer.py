"""Outer loops: FastCubic, plus gradient descent and exact cubic-Newton baselines."""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .cubic_model import Certificate, CubicSubproblem, check_certificate, exact_solve
from .cubic_solver import EPS_CAP, EPS_FLOOR, SolverConfig, choose_step, fast_cubic_min
from .errors import AlgorithmInvariantViolated, ConfigError
from .oracles import DENSE_LIMIT, HessianOperator, OracleSet, as_vector, make_rng

log = logging.getLogger(__name__)

CONVERGED = "Converged"
MAX_OUTER = "MaxOuterReached"
LEFT_BALL = "LeftCertifiedBall"
ERROR = "Error"

THEORY_C = 2.4e6
PRACTICAL_C = 100.0
# relative slack on the monotone-descent check
DESCENT_TOL = 1e-10


@dataclass
class FastCubicConfig:
    eps: float
    c_const: float = THEORY_C
    max_outer: int = 500
    strategy: str = "agd"
    seed: int = 0
    practical: bool = False
    eps_floor: float = EPS_FLOOR
    eps_cap: float = EPS_CAP
    power_const: Optional[float] = None

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigError("eps must be positive")
        if self.practical:
            self.c_const = PRACTICAL_C
        elif self.c_const < 800:
            raise ConfigError("c_const must be >= 800 (use practical mode for smaller values)")
        if self.max_outer < 1:
            raise ConfigError("max_outer must be >= 1")
        if self.strategy not in ("agd", "svrg"):
            raise ConfigError(f"unknown solver strategy {self.strategy!r}")

    def kappa(self, L: float) -> float:
        return math.sqrt(900.0 / (self.eps * L))

    def stop_threshold(self, L: float) -> float:
        return -self.eps ** 1.5 / (self.c_const * math.sqrt(L))


@dataclass
class IterRecord:
    iter: int
    f: float
    grad_norm: float
    m_step: Optional[float] = None
    branch: Optional[str] = None
    lam: Optional[float] = None
    inner_hv: int = 0
    cum_hv: int = 0
    cum_grad: int = 0


@dataclass
class RunReport:
    method: str
    eps: float
    iterations: List[IterRecord] = field(default_factory=list)
    status: str = MAX_OUTER
    certificate: Optional[Certificate] = None
    wall_ms: float = 0.0
    outer_iters: int = 0
    hv_calls: int = 0
    grad_calls: int = 0
    f_initial: float = float("nan")
    f_final: float = float("nan")
    grad_norm_final: float = float("nan")
    left_ball: bool = False
    message: str = ""

    @property
    def observed_decrease(self) -> float:
        """``f(x0) - f_final``, standing in for the unknown ``f(x0) - f*``."""
        return self.f_initial - self.f_final

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["observed_decrease"] = self.observed_decrease
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, default=float)


def _hv_equivalent(op: HessianOperator) -> int:
    """Solver-tagged full products plus component products in units of one full product."""
    full = op.counts["solver"]
    comp = op.counts["solver:component"]
    n = max(op.n_components, 1)
    return int(full + math.ceil(comp / n))


def _certify(report: RunReport, oracle: OracleSet, x, eps: float):
    if oracle.dim <= DENSE_LIMIT:
        report.certificate = check_certificate(oracle, x, eps)


def _cubic_loop(method: str, oracle: OracleSet, x0, cfg: FastCubicConfig, step_fn,
                radius: float) -> tuple:
    t0 = time.perf_counter()
    L = oracle.params.L
    thresh = cfg.stop_threshold(L)
    x = as_vector(x0, oracle.dim)
    f = oracle.value(x)
    rep = RunReport(method, cfg.eps, f_initial=f)
    hv = 0
    grads = 0
    for t in range(cfg.max_outer):
        g = oracle.gradient(x)
        grads += 1
        gn = float(np.linalg.norm(g))
        hop = HessianOperator.from_oracle(oracle, x)
        p = CubicSubproblem(g, hop, L, oracle.params.L2, oracle, x)
        h, m, branch, lam = step_fn(p)
        inner = _hv_equivalent(hop)
        hv += inner
        x_new = x + h
        f_new = oracle.value(x_new)
        rep.iterations.append(IterRecord(t, f, gn, m, branch, lam, inner, hv, grads))
        in_ball = float(np.linalg.norm(x_new)) <= radius and float(np.linalg.norm(x)) <= radius
        if not in_ball and not rep.left_ball:
            rep.left_ball = True
            log.warning("%s: iterate left the certified ball ||x|| <= %g at iteration %d",
                        method, radius, t)
        if m > thresh:
            x = x_new
            f = f_new
            rep.status = CONVERGED
            break
        if in_ball and f_new > f + DESCENT_TOL * max(1.0, abs(f)):
            raise AlgorithmInvariantViolated(
                f"objective increased from {f!r} to {f_new!r} at iteration {t}")
        x = x_new
        f = f_new
    rep.outer_iters = len(rep.iterations)
    rep.hv_calls = hv
    rep.grad_calls = grads
    rep.f_final = f
    rep.grad_norm_final = float(np.linalg.norm(oracle.gradient(x)))
    if rep.left_ball:
        rep.status = LEFT_BALL
    _certify(rep, oracle, x, cfg.eps)
    rep.wall_ms = (time.perf_counter() - t0) * 1e3
    return x, rep


def fast_cubic(oracle: OracleSet, x0, cfg: FastCubicConfig, radius: float = math.inf):
    """Cubic-regularized Newton steps with the Hv-only subproblem solver.

    Returns ``x_{t+1}`` of the terminating iteration, i.e. the step whose model
    decrease fell short of the threshold is still taken.
    """
    rng = make_rng(cfg.seed)
    kappa = cfg.kappa(oracle.params.L)

    def step(p: CubicSubproblem):
        scfg = SolverConfig.build(p, kappa, cfg.strategy, cfg.eps_floor, cfg.eps_cap, cfg.power_const)
        sol = fast_cubic_min(p, scfg, rng)
        h, m = choose_step(p, sol)
        return h, m, sol.branch, sol.lam

    return _cubic_loop("fastcubic", oracle, x0, cfg, step, radius)


def exact_np_cubic(oracle: OracleSet, x0, eps: float, max_iter: int = 500,
                   c_const: float = THEORY_C, practical: bool = False, radius: float = math.inf):
    """Same loop with every subproblem solved exactly (dense; ``dim <= 200``)."""
    if oracle.dim > DENSE_LIMIT:
        raise ValueError(f"exact baseline needs dim <= {DENSE_LIMIT}")
    cfg = FastCubicConfig(eps, c_const=c_const, max_outer=max_iter, practical=practical)

    def step(p: CubicSubproblem):
        sol = exact_solve(p, tag="solver")
        return sol.h_star, sol.m_star, "Exact", sol.lambda_star

    return _cubic_loop("exact_np", oracle, x0, cfg, step, radius)


def gradient_descent(oracle: OracleSet, x0, eps: float, max_iter: int = 100000,
                     radius: float = math.inf):
    """Fixed step ``1/L2`` until ``||grad f|| <= eps``.

    Per-iteration records are kept at powers of two and at the last iteration.
    """
    if not eps > 0:
        raise ConfigError("eps must be positive")
    t0 = time.perf_counter()
    x = as_vector(x0, oracle.dim)
    step = 1.0 / oracle.params.L2
    f = oracle.value(x)
    rep = RunReport("gd", eps, f_initial=f)
    grads = 0
    it = 0
    while True:
        g = oracle.gradient(x)
        grads += 1
        gn = float(np.linalg.norm(g))
        done = gn <= eps
        if done or it >= max_iter or (it & (it - 1)) == 0:
            rep.iterations.append(IterRecord(it, oracle.value(x), gn, cum_grad=grads))
        if done:
            rep.status = CONVERGED
            break
        if it >= max_iter:
            rep.status = MAX_OUTER
            break
        x = x - step * g
        if not rep.left_ball and float(np.linalg.norm(x)) > radius:
            rep.left_ball = True
        it += 1
    rep.outer_iters = it
    rep.grad_calls = grads
    rep.f_final = oracle.value(x)
    rep.grad_norm_final = gn
    if rep.left_ball:
        rep.status = LEFT_BALL
    _certify(rep, oracle, x, eps)
    rep.wall_ms = (time.perf_counter() - t0) * 1e3
    return x, rep
