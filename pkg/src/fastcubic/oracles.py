"""Numeric plumbing shared by every other module.

Vectors are plain 1-D float64 numpy arrays. Problems expose their derivatives
through an :class:`OracleSet`; solvers never see a Hessian matrix, only a
:class:`HessianOperator` that counts how often it is applied.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels

# dense materialization of the Hessian is used for d up to this size
DENSE_LIMIT = 200


def as_vector(x, dim: Optional[int] = None) -> np.ndarray:
    v = np.array(x, dtype=np.float64).reshape(-1)
    if v.size < 1:
        raise ValueError("vectors must have dim >= 1")
    if dim is not None and v.size != dim:
        raise ValueError(f"expected dim {dim}, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


def dot(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    return float(u @ v)


def norm(v) -> float:
    return float(np.linalg.norm(np.asarray(v, dtype=np.float64)))


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic generator; the same seed gives the same stream."""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def split_rng(rng: np.random.Generator, n: int) -> list:
    """Independent child generators for concurrent use."""
    return list(rng.spawn(n))


def gaussian_unit_vector(rng: np.random.Generator, dim: int) -> np.ndarray:
    if dim < 1:
        raise ValueError("dim must be >= 1")
    while True:
        v = rng.standard_normal(dim)
        n = np.linalg.norm(v)
        if n > 0.0:
            return v / n


@dataclass(frozen=True)
class SmoothnessParams:
    """Hessian Lipschitz constant ``L`` and Hessian spectral bound ``L2``."""

    L: float
    L2: float

    def __post_init__(self):
        if not (self.L > 0 and self.L2 > 0):
            raise ValueError(f"need L > 0 and L2 > 0, got L={self.L}, L2={self.L2}")


@dataclass
class OracleSet:
    """Bundle of derivative evaluators for one objective.

    ``component_hess_vec(i, x, v)`` is present only for finite sums
    ``f = (1/n) sum_i f_i``. ``component_factors(x)`` is an optional fast path
    for sums whose component Hessians are ``c_i a_i a_i^T + r I``; it returns
    ``(A, c, r)`` with the ``a_i`` as rows of ``A``.
    """

    dim: int
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hess_vec: Callable[[np.ndarray, np.ndarray], np.ndarray]
    params: SmoothnessParams
    n_components: int = 1
    component_hess_vec: Optional[Callable[[int, np.ndarray, np.ndarray], np.ndarray]] = None
    component_factors: Optional[Callable[[np.ndarray], tuple]] = None
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @property
    def is_finite_sum(self) -> bool:
        return self.component_hess_vec is not None and self.n_components > 1

    def hessian_matrix(self, x) -> np.ndarray:
        """Dense Hessian by ``dim`` Hessian-vector products (verification only)."""
        x = np.asarray(x, dtype=np.float64)
        if self.hessian is not None:
            H = np.array(self.hessian(x), dtype=np.float64)
        else:
            H = np.empty((self.dim, self.dim))
            e = np.zeros(self.dim)
            for j in range(self.dim):
                e[j] = 1.0
                H[:, j] = self.hess_vec(x, e)
                e[j] = 0.0
        return 0.5 * (H + H.T)


class HessianOperator:
    """Symmetric linear operator ``v -> H v`` with call accounting.

    Every application is tagged; ``counts["solver"]`` is what the fast path
    spends and ``counts["verify"]`` what checking code spends. Benchmarks
    report only the former.

    When ``matrix`` is set, products are computed with it (this is how the
    compiled kernels get at the operator) but are still counted as one logical
    Hessian-vector product each.
    """

    def __init__(self, dim: int, apply_fn: Optional[Callable] = None,
                 matrix: Optional[np.ndarray] = None, n_components: int = 1,
                 component_fn: Optional[Callable] = None, factors: Optional[tuple] = None):
        if apply_fn is None and matrix is None:
            raise ValueError("need apply_fn or matrix")
        self.dim = int(dim)
        self._apply_fn = apply_fn
        self.matrix = None if matrix is None else np.ascontiguousarray(matrix, dtype=np.float64)
        self.n_components = int(n_components)
        self._component_fn = component_fn
        self.factors = factors
        self.counts: Counter = Counter()

    @classmethod
    def from_matrix(cls, H) -> "HessianOperator":
        H = np.array(H, dtype=np.float64)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValueError("H must be square")
        if not np.allclose(H, H.T, rtol=1e-12, atol=1e-12):
            raise ValueError("H must be symmetric")
        H = 0.5 * (H + H.T)
        return cls(H.shape[0], matrix=H)

    @classmethod
    def from_components(cls, mats) -> "HessianOperator":
        """Finite-sum operator ``(1/n) sum_i M_i`` from dense component matrices."""
        mats = [np.array(M, dtype=np.float64) for M in mats]
        full = sum(mats) / len(mats)
        return cls(full.shape[0], matrix=full, n_components=len(mats),
                   component_fn=lambda i, v: mats[i] @ v)

    @classmethod
    def from_oracle(cls, oracle: OracleSet, x, materialize: Optional[bool] = None) -> "HessianOperator":
        """Hessian of ``oracle`` frozen at ``x``.

        With ``materialize`` (default: ``dim <= DENSE_LIMIT``) the matrix is
        assembled once from ``dim`` products, tagged ``"materialize"``.
        """
        x = np.array(x, dtype=np.float64)
        if materialize is None:
            materialize = oracle.dim <= DENSE_LIMIT
        comp = None
        if oracle.component_hess_vec is not None and oracle.n_components > 1:
            chv = oracle.component_hess_vec
            comp = lambda i, v: chv(i, x, v)
        factors = oracle.component_factors(x) if oracle.component_factors is not None else None
        op = cls(oracle.dim, apply_fn=lambda v: oracle.hess_vec(x, v),
                 n_components=oracle.n_components, component_fn=comp, factors=factors)
        if materialize:
            op.matrix = np.ascontiguousarray(op.to_dense(tag="materialize"))
        return op

    @property
    def is_finite_sum(self) -> bool:
        return self._component_fn is not None and self.n_components > 1

    def _raw(self, v):
        if self.matrix is not None:
            return self.matrix @ v
        return np.asarray(self._apply_fn(v), dtype=np.float64)

    def apply(self, v, tag: str = "solver") -> np.ndarray:
        self.counts[tag] += 1
        return self._raw(np.asarray(v, dtype=np.float64))

    def component_apply(self, i: int, v, tag: str = "solver") -> np.ndarray:
        if self._component_fn is None:
            raise ValueError("operator has no finite-sum components")
        self.counts[tag + ":component"] += 1
        return np.asarray(self._component_fn(i, np.asarray(v, dtype=np.float64)), dtype=np.float64)

    def charge(self, n: int, tag: str = "solver"):
        """Record ``n`` products performed outside :meth:`apply` (compiled kernels)."""
        self.counts[tag] += int(n)

    def to_dense(self, tag: str = "verify") -> np.ndarray:
        if self.matrix is not None:
            self.counts[tag] += self.dim
            return self.matrix.copy()
        H = np.empty((self.dim, self.dim))
        e = np.zeros(self.dim)
        for j in range(self.dim):
            e[j] = 1.0
            H[:, j] = self.apply(e, tag=tag)
            e[j] = 0.0
        return 0.5 * (H + H.T)

    @property
    def hv_calls(self) -> int:
        return self.counts["solver"]


def finite_diff_hv_check(oracle: OracleSet, x, v, r: float = 1e-5) -> float:
    """Relative error of the analytic Hessian-vector product against a
    central difference of gradients."""
    if r <= 0:
        raise ValueError("r must be positive")
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    fd = (oracle.gradient(x + r * v) - oracle.gradient(x - r * v)) / (2.0 * r)
    hv = oracle.hess_vec(x, v)
    return float(np.linalg.norm(fd - hv) / max(1.0, np.linalg.norm(hv)))


def kernel_backend() -> str:
    return _kernels.BACKEND
