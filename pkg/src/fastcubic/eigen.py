"""Power-method eigenvector routines built on the inexact linear solvers."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .errors import EigBudgetExceeded, NumericalBreakdown
from .linear_solver import ShiftedOperator, agd_setup, solve
from .oracles import HessianOperator, gaussian_unit_vector

FAILURE_PROB = 1e-6
# multiplicative accuracy the power method is trusted to reach
POWER_FRACTION = 0.9


@dataclass
class EigResult:
    vector: np.ndarray
    rayleigh: float
    hv_calls: int
    certified: bool
    iterations: int = 0


def power_iterations(dim: int, const: Optional[float] = None) -> int:
    """Power steps for a ``POWER_FRACTION`` Rayleigh quotient w.p. ``1 - p``.

    Default: with ``delta = 1 - POWER_FRACTION``, a Gaussian start has
    ``|<x, v1>|^2 >= p^2/d`` w.p. ``1 - p``, and ``(1 - delta)^{2K} <= delta p^2/d``
    then suffices, so ``K = ln(d / (delta p^2)) / (2 delta)``.
    With ``const`` given: ``K = ceil(const * ln(d / p))``.
    """
    if const is not None:
        return max(1, int(math.ceil(const * math.log(dim / FAILURE_PROB))))
    delta = 1.0 - POWER_FRACTION
    k = math.log(dim / (delta * FAILURE_PROB ** 2)) / (2.0 * delta)
    return max(1, int(math.ceil(k)))


def _spent(op: HessianOperator, before) -> int:
    return sum(v for k, v in op.counts.items() if k.startswith("solver")) - before


def _solver_calls(op: HessianOperator) -> int:
    return sum(v for k, v in op.counts.items() if k.startswith("solver"))


def inverse_power_leading(op: ShiftedOperator, rng: np.random.Generator, inner_eps: float,
                          strategy: str = "agd", power_const: Optional[float] = None,
                          start: Optional[np.ndarray] = None) -> EigResult:
    """Leading eigenvector of ``(H + shift I)^{-1}`` by inexact power iteration.

    Each apply is a linear solve with relative accuracy ``inner_eps``. The
    reported Rayleigh quotient ``w'z - inner_eps`` never exceeds the true
    ``w'(H+shift I)^{-1}w``.

    A warm ``start`` must itself be the output of power iterations on an
    operator with the same eigenvectors and eigenvalue order (any shift of the
    same H); the random-start guarantee then still applies.
    """
    before = _solver_calls(op.base)
    K = power_iterations(op.dim, power_const)
    w = gaussian_unit_vector(rng, op.dim) if start is None else np.array(start, dtype=np.float64)
    w /= np.linalg.norm(w)
    use_svrg = strategy == "svrg" and op.base.is_finite_sum
    if op.base.matrix is not None and not use_svrg:
        # whole loop in one kernel call; identical to K + 1 calls of solve_agd
        bound, step, beta, tol = agd_setup(op, inner_eps)
        w, z, iters, status = _kernels.power_dense(op.base.matrix, op.shift, w, K, step, beta,
                                                   bound, tol)
        op.base.charge(iters)
        if status < 0 or not np.all(np.isfinite(z)):
            raise NumericalBreakdown("non-finite iterate in inverse power iteration")
        rayleigh = float(w @ z) - inner_eps
        return EigResult(w, rayleigh, _spent(op.base, before), False, K + 1)
    for _ in range(K):
        z, _rep = solve(op, w, inner_eps, strategy, rng)
        zn = np.linalg.norm(z)
        if zn == 0.0:
            break
        w = z / zn
    z, _rep = solve(op, w, inner_eps, strategy, rng)
    rayleigh = float(w @ z) - inner_eps
    return EigResult(w, rayleigh, _spent(op.base, before), False, K + 1)


def approx_min_eigvec(hop: HessianOperator, L2: float, kappa: float, rng: np.random.Generator,
                      g=None, strategy: str = "agd", power_const: Optional[float] = None,
                      max_shifts: int = 80) -> EigResult:
    """Unit ``v`` with ``v'Hv <= lambda_min(H) + 1/(10 kappa)``.

    Shift-and-invert on ``M = I - (H + L2 I)/(2 L2)``: inverting ``sI - M`` is
    a solve with ``H + sigma I``, ``sigma = L2 (2s - 1)``, so the shift is kept
    directly on H. Starting from ``sigma = L2 + 1/kappa`` the gap
    ``sigma + lambda_min`` is halved each round using the lower estimate from
    the power method, until

        v'Hv - (POWER_FRACTION / rho_hi - sigma) <= 1/(10 kappa)

    where the bracketed term lower-bounds ``lambda_min`` whenever the power
    method met its probabilistic guarantee.
    """
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    before = _solver_calls(hop)
    target = 1.0 / (10.0 * kappa)
    sigma = L2 + 1.0 / kappa
    mu = 1.0 / kappa
    w = None
    for rounds in range(1, max_shifts + 1):
        op = ShiftedOperator(hop, sigma, mu, sigma + L2)
        inner = 0.01 / (sigma + L2)
        res = inverse_power_leading(op, rng, inner, strategy, power_const, start=w)
        w = res.vector
        rho_hi = res.rayleigh + 2.0 * inner
        gap_lo = POWER_FRACTION / rho_hi
        q = float(w @ hop.apply(w))
        if q - (gap_lo - sigma) <= target:
            if g is not None and float(np.dot(g, w)) > 0.0:
                w = -w
            return EigResult(w, q, _spent(hop, before), True, rounds)
        sigma -= 0.5 * gap_lo
        mu = 0.5 * gap_lo
    raise EigBudgetExceeded(f"no certificate after {max_shifts} shift rounds (kappa={kappa:.3g})")
