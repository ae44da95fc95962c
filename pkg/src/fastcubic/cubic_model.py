"""Cubic model ``m(h) = g'h + h'Hh/2 + (L/6)||h||^3`` and its dense reference solver."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InconsistentInstance
from .oracles import HessianOperator, OracleSet, as_vector


@dataclass
class CubicSubproblem:
    """Model data frozen at a point.

    ``oracle`` and ``x`` are optional back-references to the objective, needed
    only to measure the true function at ``x + h`` (see check_step_bounds).
    """

    g: np.ndarray
    h_op: HessianOperator
    L: float
    L2: float
    oracle: Optional[OracleSet] = None
    x: Optional[np.ndarray] = None

    def __post_init__(self):
        self.g = as_vector(self.g)
        if self.h_op.dim != self.g.size:
            raise ValueError("g and H dimensions differ")
        if not (self.L > 0 and self.L2 > 0):
            raise ValueError("L and L2 must be positive")

    @property
    def dim(self) -> int:
        return self.g.size

    @classmethod
    def from_dense(cls, g, H, L: float, L2: Optional[float] = None) -> "CubicSubproblem":
        op = HessianOperator.from_matrix(H)
        if L2 is None:
            L2 = max(float(np.max(np.abs(np.linalg.eigvalsh(op.matrix)))), 1e-12)
        return cls(np.asarray(g, dtype=np.float64), op, float(L), float(L2))

    def to_json(self) -> str:
        H = self.h_op.to_dense(tag="verify")
        return json.dumps({"g": self.g.tolist(), "H": H.tolist(), "L": self.L, "L2": self.L2})

    @classmethod
    def from_json(cls, text: str) -> "CubicSubproblem":
        doc = json.loads(text)
        unknown = set(doc) - {"g", "H", "L", "L2"}
        if unknown:
            raise ValueError(f"unknown keys in subproblem document: {sorted(unknown)}")
        if "H" not in doc:
            raise ValueError("subproblem document needs a dense H")
        return cls.from_dense(doc["g"], doc["H"], doc["L"], doc.get("L2"))


@dataclass
class ExactSolution:
    lambda_star: float
    h_star: np.ndarray
    m_star: float
    hard_case: bool
    lambda_min: float = float("nan")


@dataclass
class Certificate:
    grad_norm: float
    lambda_min_hessian: float
    eps: float
    L: float
    passed: bool


def eval_m(p: CubicSubproblem, h, tag: str = "solver") -> float:
    h = np.asarray(h, dtype=np.float64)
    if h.shape != p.g.shape:
        raise ValueError("dimension mismatch")
    Hh = p.h_op.apply(h, tag)
    nh = float(np.linalg.norm(h))
    return float(p.g @ h + 0.5 * (h @ Hh) + p.L / 6.0 * nh ** 3)


def grad_m(p: CubicSubproblem, h, tag: str = "solver") -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    if h.shape != p.g.shape:
        raise ValueError("dimension mismatch")
    return p.g + p.h_op.apply(h, tag) + 0.5 * p.L * float(np.linalg.norm(h)) * h


def crude_lambda_bound(p: CubicSubproblem, kappa: float) -> float:
    """``B = L2 + sqrt(L ||g||) + 1/kappa``; the schedule starts at ``2B``."""
    return p.L2 + math.sqrt(p.L * float(np.linalg.norm(p.g))) + 1.0 / kappa


def prop_lambda_bound(L2: float, L: float, gnorm: float) -> float:
    """``max(2 L2 + sqrt(L ||g||), 1)``, an alternative upper bound on lambda*."""
    return max(2.0 * L2 + math.sqrt(L * gnorm), 1.0)


def exact_solve(p: CubicSubproblem, tol: float = 1e-12, tag: str = "verify") -> ExactSolution:
    """Global minimizer of the cubic model by dense eigendecomposition.

    Solves the secular equation ``||(H + lam I)^{-1} g|| = 2 lam / L`` by
    bisection on ``(max(0, -lambda_min), inf)``; falls into the hard case when
    g has (numerically) no mass on the bottom eigenspace and the secular
    function is already non-negative at the left end.
    """
    if p.dim > 200:
        raise ValueError("exact_solve is a dense oracle; dim must be <= 200")
    if tol <= 0:
        raise ValueError("tol must be positive")
    H = p.h_op.to_dense(tag=tag)
    evals, Q = np.linalg.eigh(H)
    lam_min = float(evals[0])
    gt = Q.T @ p.g
    gnorm = float(np.linalg.norm(p.g))
    L = p.L
    scale = max(1.0, float(np.max(np.abs(evals))))
    bottom = np.abs(evals - lam_min) <= 1e-10 * scale

    def step_norm(lam, mask=None):
        denom = evals + lam
        if mask is None:
            return float(np.linalg.norm(gt / denom))
        return float(np.linalg.norm(gt[~mask] / denom[~mask]))

    def secular(lam):
        return 2.0 * lam / L - step_norm(lam)

    left = max(0.0, -lam_min)
    if gnorm == 0.0:
        if lam_min >= 0.0:
            return ExactSolution(0.0, np.zeros(p.dim), 0.0, False, lam_min)
        lo_probe = None
    else:
        # tol can drop below one ulp of left
        lo_probe = max(left + tol, float(np.nextafter(left, math.inf)))
    bottom_mass = float(np.linalg.norm(gt[bottom]))
    hard = False
    if lam_min < 0.0 and bottom_mass <= tol * max(gnorm, 1e-300):
        if lo_probe is None or secular(lo_probe) >= 0.0:
            hard = True
    elif (lam_min < 0.0 and lo_probe is not None
          and secular(float(np.nextafter(left, math.inf))) >= 0.0):
        # with bottom mass the secular function tends to -inf at the left end;
        # only a root inside (left, left + tol] is legitimate
        raise InconsistentInstance(
            f"secular function non-negative at the left end but bottom-eigenspace mass "
            f"{bottom_mass:.3e} exceeds tol*||g||")

    if hard:
        lam = -lam_min
        denom = evals + lam
        coef = np.zeros_like(gt)
        coef[~bottom] = -gt[~bottom] / denom[~bottom]
        base = Q @ coef
        r2 = (2.0 * lam / L) ** 2 - float(base @ base)
        gamma = math.sqrt(max(r2, 0.0))
        vmin = Q[:, 0]
        if float(p.g @ vmin) > 0.0:
            vmin = -vmin
        h = base + gamma * vmin
    else:
        lo = left
        hi = max(prop_lambda_bound(scale, L, gnorm), 2.0 * left + 1.0)
        while secular(hi) < 0.0:
            hi *= 2.0
        for _ in range(400):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if secular(mid) < 0.0:
                lo = mid
            else:
                hi = mid
            if hi - lo <= tol * max(1.0, lo):
                break
        lam = hi if lo == left and left > 0.0 else 0.5 * (lo + hi)
        h = -(Q @ (gt / (evals + lam)))
    hn = float(np.linalg.norm(h))
    m_star = float(p.g @ h + 0.5 * (h @ (H @ h)) + L / 6.0 * hn ** 3)
    return ExactSolution(float(lam), h, m_star, hard, lam_min)


def check_certificate(oracle: OracleSet, x, eps: float) -> Certificate:
    """Dense check of ``||grad f|| <= eps`` and ``lambda_min >= -sqrt(L eps)``."""
    if oracle.dim > 200:
        raise ValueError("certificates need a dense Hessian; dim must be <= 200")
    x = np.asarray(x, dtype=np.float64)
    gn = float(np.linalg.norm(oracle.gradient(x)))
    lam = float(np.linalg.eigvalsh(oracle.hessian_matrix(x))[0])
    L = oracle.params.L
    passed = gn <= eps and lam >= -math.sqrt(L * eps)
    return Certificate(gn, lam, eps, L, passed)


def step_bound_slacks(p: CubicSubproblem, h_prime, exact: ExactSolution):
    """Slacks (>= 0 means satisfied) of the two universal bounds at ``x + h'``:

    ``||grad f(x+h')|| <= L||h'||^2 + ||grad m(h')||`` and
    ``lambda_min(hess f(x+h')) >= -(1.5 L^2 max(0, -m*))^{1/3} - L||h'||``.
    """
    if p.oracle is None or p.x is None:
        raise ValueError("subproblem carries no objective to measure")
    h = np.asarray(h_prime, dtype=np.float64)
    y = p.x + h
    hn = float(np.linalg.norm(h))
    L = p.L
    gm = float(np.linalg.norm(grad_m(p, h, tag="verify")))
    grad_slack = L * hn ** 2 + gm - float(np.linalg.norm(p.oracle.gradient(y)))
    lam = float(np.linalg.eigvalsh(p.oracle.hessian_matrix(y))[0])
    eig_floor = -(1.5 * L ** 2 * max(0.0, -exact.m_star)) ** (1.0 / 3.0) - L * hn
    return grad_slack, lam - eig_floor


def check_step_bounds(p: CubicSubproblem, h_prime, exact: ExactSolution, eps: float = 0.0,
                      slack: float = 1e-8) -> bool:
    """True iff both step bounds hold up to ``-slack`` (relative to scale)."""
    gs, es = step_bound_slacks(p, h_prime, exact)
    return gs >= -slack * max(1.0, abs(gs)) and es >= -slack * max(1.0, abs(es))
