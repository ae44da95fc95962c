"""Inexact solves of ``(H + shift I) x = b`` using only Hessian-vector products.

Two strategies: constant-momentum accelerated gradient descent on the
quadratic, and plain SVRG for finite sums. Both start from zero and stop on a
residual test that is sufficient for the accuracy contract

    ||x - (H + shift I)^{-1} b|| <= eps_rel * ||b||

provided ``mu_lower`` really lower-bounds ``lambda_min(H) + shift``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .errors import NumericalBreakdown, SolverBudgetExceeded
from .oracles import HessianOperator


# multiple of machine epsilon below which a computed residual is noise
ROUNDING_FLOOR = 16 * float(np.finfo(np.float64).eps)


@dataclass
class ShiftedOperator:
    """``v -> H v + shift v`` with certified spectral bounds.

    ``mu_lower <= lambda_min(H) + shift`` and ``L_upper >= lambda_max(H) + shift``.
    """

    base: HessianOperator
    shift: float
    mu_lower: float
    L_upper: float

    def __post_init__(self):
        if not self.mu_lower > 0:
            raise ValueError(f"mu_lower must be positive, got {self.mu_lower}")
        if self.L_upper < self.mu_lower:
            raise ValueError("L_upper must be >= mu_lower")

    @classmethod
    def build(cls, base: HessianOperator, shift: float, L2: float, mu_lower: float):
        # lambda_min(H) >= -L2 gives a second lower bound for free
        mu = max(mu_lower, shift - L2)
        return cls(base, float(shift), float(mu), float(shift + L2))

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def kappa(self) -> float:
        return self.L_upper / self.mu_lower

    def apply(self, v, tag: str = "solver") -> np.ndarray:
        return self.base.apply(v, tag) + self.shift * v


@dataclass
class SolveReport:
    iterations: int
    hv_calls: int
    residual_bound: float
    strategy: str
    component_calls: int = 0
    early_exit: bool = False


def agd_iteration_bound(kappa: float, eps_rel: float, mu: float) -> int:
    """Iterations after which Nesterov's estimate guarantees the contract.

    From ``||x_k - x*||^2 <= 2 (1 - 1/sqrt(kappa))^k ||b||^2 / mu^2`` with a
    zero start; the implementation constant is therefore 1 in front of
    ``sqrt(kappa) * log(2 / (eps mu)^2)``.
    """
    if kappa <= 1.0 + 1e-12:
        return 1
    rate = -math.log1p(-1.0 / math.sqrt(kappa))
    target = math.log(2.0) - 2.0 * math.log(eps_rel * mu)
    return max(1, int(math.ceil(max(target, 0.0) / rate)))


def agd_setup(op: ShiftedOperator, eps_rel: float):
    """``(bound, step, beta, tol_scale)``; the residual tolerance is ``tol_scale * ||b||``."""
    kappa = op.kappa
    sk = math.sqrt(kappa)
    return (agd_iteration_bound(kappa, eps_rel, op.mu_lower), 1.0 / op.L_upper,
            (sk - 1.0) / (sk + 1.0), eps_rel * op.mu_lower)


def _agd_python(op: ShiftedOperator, b, step, beta, max_iter, tol):
    d = b.shape[0]
    x = np.zeros(d)
    xp = np.zeros(d)
    for k in range(max_iter):
        y = x + beta * (x - xp)
        g = op.apply(y) - b
        rn = float(np.sqrt(g @ g))
        if not math.isfinite(rn):
            return x, k + 1, -1
        if rn <= tol:
            return y, k + 1, 1
        xp = x
        x = y - step * g
    return x, max_iter, 0


def solve_agd(op: ShiftedOperator, b, eps_rel: float, max_iter: Optional[int] = None):
    """Accelerated gradient descent on ``0.5 x'(H+shift I)x - b'x``.

    Step ``1/L_upper``, momentum ``(sqrt(k)-1)/(sqrt(k)+1)`` with
    ``k = L_upper/mu_lower``. Exits early once
    ``||(H+shift I)y - b|| <= eps_rel * mu_lower * ||b||``.

    Raises SolverBudgetExceeded when ``max_iter`` is smaller than the a-priori
    bound and was used up without the residual test passing.
    """
    b = np.asarray(b, dtype=np.float64)
    if not 0.0 < eps_rel < 1.0:
        raise ValueError("eps_rel must lie in (0, 1)")
    bn = float(np.linalg.norm(b))
    if bn == 0.0:
        return np.zeros_like(b), SolveReport(0, 0, eps_rel, "agd", early_exit=True)
    bound, step, beta, tol_scale = agd_setup(op, eps_rel)
    budget = bound if max_iter is None else min(int(max_iter), bound)
    tol = tol_scale * bn
    if op.base.matrix is not None:
        x, iters, status = _kernels.agd_dense(op.base.matrix, op.shift, b, step, beta, budget, tol)
        op.base.charge(iters)
    else:
        x, iters, status = _agd_python(op, b, step, beta, budget, tol)
    if status < 0 or not np.all(np.isfinite(x)):
        raise NumericalBreakdown(f"AGD produced a non-finite iterate after {iters} iterations")
    if status == 0 and budget < bound:
        raise SolverBudgetExceeded(
            f"AGD used max_iter={max_iter} before the a-priori bound {bound} (kappa={op.kappa:.3g})")
    return x, SolveReport(iters, iters, eps_rel, "agd", early_exit=status == 1)


def svrg_epoch_budget(kappa: float, n: int, eps_rel: float, mu: float) -> int:
    """Generous epoch cap: ``4 (1 + 3 kappa / (2n)) ln(2/(eps mu)^2) + 50``.

    An epoch of ``2n`` steps of size ``1/(3 L)`` shrinks the error by roughly
    ``exp(-2n/(3 kappa))`` when that is small, so this is about four times the
    expected count.
    """
    target = max(math.log(2.0) - 2.0 * math.log(eps_rel * mu), 1.0)
    return int(math.ceil(4.0 * (1.0 + 1.5 * kappa / max(n, 1)) * target)) + 50


def solve_svrg(op: ShiftedOperator, b, eps_rel: float, rng: np.random.Generator,
               max_epochs: Optional[int] = None):
    """Plain SVRG over the finite-sum components of ``op.base``.

    Epoch length ``2n``, step ``1/(3 L_upper)``, last iterate becomes the next
    snapshot. The full gradient at each snapshot doubles as the stopping test,
    so the accuracy contract is certified, not just expected. ``max_epochs``
    defaults to :func:`svrg_epoch_budget`.

    A residual below ``ROUNDING_FLOOR * (L_upper ||x|| + ||b||)`` cannot be
    resolved in float64, so the test accepts that level when the requested
    tolerance is smaller.
    """
    b = np.asarray(b, dtype=np.float64)
    if not 0.0 < eps_rel < 1.0:
        raise ValueError("eps_rel must lie in (0, 1)")
    base = op.base
    n = base.n_components if base.is_finite_sum else 1
    bn = float(np.linalg.norm(b))
    if bn == 0.0:
        return np.zeros_like(b), SolveReport(0, 0, eps_rel, "svrg", early_exit=True)
    m = 2 * n
    if max_epochs is None:
        max_epochs = svrg_epoch_budget(op.kappa, n, eps_rel, op.mu_lower)
    step = 1.0 / (3.0 * op.L_upper)
    tol = eps_rel * op.mu_lower * bn
    lam = op.shift
    x = np.zeros_like(b)
    full_calls = 0
    comp_calls = 0
    factors = base.factors if base.is_finite_sum else None
    for epoch in range(1, max_epochs + 1):
        full_grad = base.apply(x) + lam * x - b
        full_calls += 1
        rn = float(np.linalg.norm(full_grad))
        if not math.isfinite(rn):
            raise NumericalBreakdown(f"SVRG diverged in epoch {epoch}")
        floor = ROUNDING_FLOOR * (op.L_upper * float(np.linalg.norm(x)) + bn)
        if rn <= max(tol, floor):
            return x, SolveReport(epoch, full_calls, eps_rel, "svrg", comp_calls, True)
        idx = rng.integers(0, n, size=m)
        if factors is not None:
            A, c, ridge = factors
            x = _kernels.svrg_rank1_epoch(A, c, lam + ridge, x, full_grad, idx.astype(np.int64), step)
            base.charge(m, "solver:component")
        elif n == 1:
            snap = x
            for _ in range(m):
                diff = x - snap
                x = x - step * (base.apply(diff) + lam * diff + full_grad)
            full_calls += m
        else:
            snap = x
            for i in idx:
                diff = x - snap
                x = x - step * (base.component_apply(int(i), diff) + lam * diff + full_grad)
        comp_calls += m
    raise SolverBudgetExceeded(f"SVRG did not reach eps_rel={eps_rel:g} in {max_epochs} epochs")


def solve(op: ShiftedOperator, b, eps_rel: float, strategy: str = "agd",
          rng: Optional[np.random.Generator] = None):
    """Dispatch on strategy; svrg silently falls back to agd without components."""
    if strategy == "svrg" and op.base.is_finite_sum:
        if rng is None:
            raise ValueError("svrg needs a generator")
        return solve_svrg(op, b, eps_rel, rng)
    if strategy not in ("agd", "svrg"):
        raise ValueError(f"unknown strategy {strategy!r}")
    return solve_agd(op, b, eps_rel)
