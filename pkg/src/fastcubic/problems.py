"""Test objectives with analytic gradients and Hessian-vector products.

Each maker returns a :class:`ProblemSpec`; ``spec.oracle`` is the
:class:`OracleSet` the optimizers consume. Smoothness constants are certified
on the ball ``||x|| <= R`` (``R = inf`` when they are global).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from .oracles import OracleSet, SmoothnessParams, make_rng

# sup |phi''| and sup |phi'''| for phi(z) = 1/(1+e^z). phi'' peaks at
# z = ln(2+sqrt 3) with value 1/(6 sqrt 3); phi''' peaks at z = 0 with 1/8.
# Both confirmed on a 4e5-point grid over [-20, 20] plus Brent refinement.
SIGMOID_D2_SUP = 0.09622504486493764
SIGMOID_D3_SUP = 0.125


@dataclass
class ProblemSpec:
    name: str
    dim: int
    n_components: int
    domain_radius: float
    oracle: OracleSet
    generator_params: Dict[str, float] = field(default_factory=dict)
    known_optimum: Optional[Tuple[np.ndarray, float]] = None
    known_saddle: Optional[Tuple[np.ndarray, float]] = None
    x0: Optional[np.ndarray] = None
    constants_estimated: bool = False

    @property
    def params(self) -> SmoothnessParams:
        return self.oracle.params

    def initial_point(self) -> np.ndarray:
        return np.zeros(self.dim) if self.x0 is None else self.x0.copy()


def _random_orthogonal(rng, d):
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    return Q * np.sign(np.diag(R))


def make_quartic_quadratic(rng, d: int, spectrum, rho: float, R: float, b=None) -> ProblemSpec:
    """``f = x'Ax/2 + b'x + (rho/4)||x||^4`` with ``A`` of the given spectrum.

    ``b`` defaults to a random unit vector; pass zeros for the homogeneous case.
    """
    spectrum = np.asarray(spectrum, dtype=np.float64).reshape(-1)
    if spectrum.size == 0:
        raise ValueError("spectrum must be non-empty")
    if spectrum.size != d:
        raise ValueError(f"spectrum has {spectrum.size} entries for d={d}")
    if rho < 0 or not R > 0:
        raise ValueError("need rho >= 0 and R > 0")
    Q = _random_orthogonal(rng, d)
    A = (Q * spectrum) @ Q.T
    A = 0.5 * (A + A.T)
    if b is None:
        b = rng.standard_normal(d)
        b /= np.linalg.norm(b)
    b = np.asarray(b, dtype=np.float64)

    def value(x):
        s = x @ x
        return float(0.5 * x @ (A @ x) + b @ x + 0.25 * rho * s * s)

    def gradient(x):
        return A @ x + b + rho * (x @ x) * x

    def hess_vec(x, v):
        return A @ v + rho * ((x @ x) * v + 2.0 * (x @ v) * x)

    def hessian(x):
        return A + rho * ((x @ x) * np.eye(d) + 2.0 * np.outer(x, x))

    top = float(np.max(np.abs(spectrum)))
    L2 = top + 3.0 * rho * R * R
    L = 6.0 * rho * R
    params = SmoothnessParams(max(L, 1e-12), max(L2, 1e-12))
    oracle = OracleSet(d, value, gradient, hess_vec, params, hessian=hessian)
    x0 = rng.standard_normal(d)
    x0 *= 0.5 * min(R, 1.0) / np.linalg.norm(x0)
    return ProblemSpec("quartic_quadratic", d, 1, float(R), oracle,
                       {"rho": rho, "R": R, "lambda_min": float(spectrum.min())}, x0=x0)


def make_saddle_escape(gamma: float, d: int, R: Optional[float] = None) -> ProblemSpec:
    """``f = (sum_{i<d} x_i^2 - gamma x_d^2)/2 + sum x_i^4 / 4``; strict saddle at 0."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if d < 2:
        raise ValueError("d must be >= 2")
    if R is None:
        R = 1.5 * math.sqrt(gamma) + 0.5
    D = np.ones(d)
    D[-1] = -gamma

    def value(x):
        return float(0.5 * (D @ (x * x)) + 0.25 * np.sum(x ** 4))

    def gradient(x):
        return D * x + x ** 3

    def hess_vec(x, v):
        return (D + 3.0 * x * x) * v

    def hessian(x):
        return np.diag(D + 3.0 * x * x)

    params = SmoothnessParams(6.0 * R, max(1.0, gamma) + 3.0 * R * R)
    oracle = OracleSet(d, value, gradient, hess_vec, params, hessian=hessian)
    xopt = np.zeros(d)
    xopt[-1] = math.sqrt(gamma)
    return ProblemSpec("saddle_escape", d, 1, float(R), oracle, {"gamma": gamma, "R": R},
                       known_optimum=(xopt, -0.25 * gamma * gamma),
                       known_saddle=(np.zeros(d), -float(gamma)), x0=np.zeros(d))


def _phi(z):
    # 1/(1+e^z) without overflow
    return np.where(z >= 0, np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))),
                    1.0 / (1.0 + np.exp(-np.abs(z))))


def make_sigmoid_sum(rng, d: int, n: int, data_scale: float = 1.0, A=None, y=None,
                     ridge: float = 0.0) -> ProblemSpec:
    """``f = (1/n) sum phi(y_i a_i'x)`` with the smooth 0-1 surrogate ``phi(z) = 1/(1+e^z)``.

    Without ``ridge`` the infimum usually sits at infinity; ``ridge`` adds
    ``(r/2)||x||^2`` to every component so a minimizer exists.
    """
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    if not data_scale > 0:
        raise ValueError("data_scale must be positive")
    if A is None:
        A = rng.standard_normal((n, d))
        A /= np.linalg.norm(A, axis=1, keepdims=True)
        A *= data_scale * rng.uniform(0.5, 1.0, size=(n, 1))
    A = np.ascontiguousarray(A, dtype=np.float64)
    if y is None:
        y = rng.choice([-1.0, 1.0], size=n)
    y = np.asarray(y, dtype=np.float64)
    if A.shape != (n, d) or y.shape != (n,):
        raise ValueError("data shapes do not match (n, d)")
    s = float(np.max(np.linalg.norm(A, axis=1)))

    def z_of(x):
        return y * (A @ x)

    def value(x):
        return float(np.mean(_phi(z_of(x))) + 0.5 * ridge * (x @ x))

    def gradient(x):
        p = _phi(z_of(x))
        d1 = -p * (1.0 - p)
        return A.T @ (d1 * y) / n + ridge * x

    def curv(x):
        p = _phi(z_of(x))
        return p * (1.0 - p) * (1.0 - 2.0 * p)

    def hess_vec(x, v):
        return A.T @ (curv(x) * (A @ v)) / n + ridge * v

    def component_hess_vec(i, x, v):
        a = A[i]
        p = float(_phi(y[i] * (a @ x)))
        return p * (1.0 - p) * (1.0 - 2.0 * p) * (a @ v) * a + ridge * v

    def factors(x):
        return A, np.ascontiguousarray(curv(x)), float(ridge)

    def hessian(x):
        return (A.T * curv(x)) @ A / n + ridge * np.eye(d)

    params = SmoothnessParams(max(SIGMOID_D3_SUP * s ** 3, 1e-12),
                              max(SIGMOID_D2_SUP * s * s + ridge, 1e-12))
    oracle = OracleSet(d, value, gradient, hess_vec, params, n_components=n,
                       component_hess_vec=component_hess_vec, component_factors=factors,
                       hessian=hessian)
    x0 = 0.1 * rng.standard_normal(d)
    return ProblemSpec("sigmoid_sum", d, n, math.inf, oracle,
                       {"data_scale": data_scale, "max_row_norm": s, "ridge": ridge}, x0=x0)


class _TanhMLP:
    """``y(s) = u' tanh(W s + b) + c`` with loss ``(y - t)^2 / 2`` per sample."""

    def __init__(self, S, T, d_hidden):
        self.S = S
        self.T = T
        self.h = d_hidden
        self.din = S.shape[1]

    @property
    def dim(self):
        return self.h * (self.din + 2) + 1

    def unpack(self, x):
        h, din = self.h, self.din
        W = x[: h * din].reshape(h, din)
        b = x[h * din: h * din + h]
        u = x[h * din + h: h * din + 2 * h]
        return W, b, u, x[-1]

    def pack(self, W, b, u, c):
        return np.concatenate([W.reshape(-1), b, u, [c]])

    def forward(self, x, S):
        W, b, u, c = self.unpack(x)
        z = np.tanh(S @ W.T + b)
        return z, z @ u + c

    def value(self, x, S, T):
        _, out = self.forward(x, S)
        return 0.5 * np.mean((out - T) ** 2)

    def gradient(self, x, S, T):
        W, b, u, c = self.unpack(x)
        z, out = self.forward(x, S)
        r = (out - T) / S.shape[0]
        delta = (r[:, None] * u) * (1.0 - z * z)
        return self.pack(delta.T @ S, delta.sum(0), z.T @ r, r.sum())

    def hess_vec(self, x, v, S, T):
        # forward-over-reverse (R-operator) pass
        W, b, u, c = self.unpack(x)
        dW, db, du, dc = self.unpack(v)
        n = S.shape[0]
        z, out = self.forward(x, S)
        sech2 = 1.0 - z * z
        Ra = S @ dW.T + db
        Rz = sech2 * Ra
        Rout = z @ du + Rz @ u + dc
        r = (out - T) / n
        Rr = Rout / n
        RGu = z.T @ Rr + Rz.T @ r
        RGc = Rr.sum()
        Rdelta = (Rr[:, None] * u + r[:, None] * du) * sech2 - 2.0 * (r[:, None] * u) * z * Rz
        return self.pack(Rdelta.T @ S, Rdelta.sum(0), RGu, RGc)


def _estimate_constants(oracle_hv, dim, rng, radius, samples=40):
    """Empirical ``(L, L2)`` from probes in the ball; no safety factor applied here."""
    L2 = 0.0
    L = 0.0
    for _ in range(samples):
        x = rng.standard_normal(dim)
        x *= radius * rng.uniform() ** (1.0 / dim) / np.linalg.norm(x)
        v = rng.standard_normal(dim)
        v /= np.linalg.norm(v)
        # a few power steps for ||H(x)||
        for _ in range(10):
            w = oracle_hv(x, v)
            nw = np.linalg.norm(w)
            if nw == 0.0:
                break
            v = w / nw
        L2 = max(L2, float(np.linalg.norm(oracle_hv(x, v))))
        for scale in (1e-3, 0.1, 1.0):
            dx = rng.standard_normal(dim)
            dx *= scale * radius / np.linalg.norm(dx)
            y = x + dx
            if np.linalg.norm(y) > radius:
                y *= radius / np.linalg.norm(y)
            step = np.linalg.norm(y - x)
            if step == 0.0:
                continue
            for _ in range(2):
                p = rng.standard_normal(dim)
                p /= np.linalg.norm(p)
                L = max(L, float(np.linalg.norm(oracle_hv(x, p) - oracle_hv(y, p)) / step))
    return L, L2


def make_mlp_regression(rng, d_in: int, d_hidden: int, n: int, radius: float = 2.0,
                        targets=None, safety: float = 2.0, noise: float = 0.0,
                        weight_decay: float = 0.0) -> ProblemSpec:
    """One-hidden-layer tanh network fit to a random teacher by squared loss.

    ``noise`` adds Gaussian label noise to the teacher targets; a noiseless
    teacher makes the zero-loss minimizers degenerate. ``weight_decay`` adds
    ``(wd/2)||x||^2`` to every sample loss.

    ``L`` and ``L2`` are sampled estimates on ``||x|| <= radius`` times ``safety``.
    """
    if min(d_in, d_hidden, n) < 1:
        raise ValueError("d_in, d_hidden and n must be >= 1")
    S = rng.standard_normal((n, d_in))
    if targets is None:
        teacher = rng.standard_normal(d_hidden)
        Wt = rng.standard_normal((d_hidden, d_in)) / math.sqrt(d_in)
        targets = np.tanh(S @ Wt.T) @ teacher / math.sqrt(d_hidden)
        targets = targets + noise * rng.standard_normal(n)
    T = np.asarray(targets, dtype=np.float64).reshape(n)
    net = _TanhMLP(S, T, d_hidden)
    d = net.dim

    wd = float(weight_decay)
    if wd < 0:
        raise ValueError("weight_decay must be >= 0")

    def value(x):
        return float(net.value(x, S, T) + 0.5 * wd * (x @ x))

    def gradient(x):
        return net.gradient(x, S, T) + wd * x

    def hess_vec(x, v):
        return net.hess_vec(x, v, S, T) + wd * v

    def component_hess_vec(i, x, v):
        return net.hess_vec(x, v, S[i:i + 1], T[i:i + 1]) + wd * v

    est_rng = make_rng(int(rng.integers(0, 2 ** 63)))
    L, L2 = _estimate_constants(hess_vec, d, est_rng, radius)
    params = SmoothnessParams(max(safety * L, 1e-12), max(safety * L2, 1e-12))
    oracle = OracleSet(d, value, gradient, hess_vec, params, n_components=n,
                       component_hess_vec=component_hess_vec)
    x0 = rng.standard_normal(d)
    x0 *= 0.5 * radius / np.linalg.norm(x0)
    return ProblemSpec("mlp_regression", d, n, float(radius), oracle,
                       {"d_in": d_in, "d_hidden": d_hidden, "n": n, "safety": safety, "noise": noise,
                        "weight_decay": wd},
                       x0=x0, constants_estimated=True)


def make_rosenbrock(d: int, R: Optional[float] = None) -> ProblemSpec:
    """``f = sum_{i<d} 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2``."""
    if d < 2:
        raise ValueError("d must be >= 2")
    if R is None:
        R = 1.5 * math.sqrt(d)

    def value(x):
        a, b = x[:-1], x[1:]
        return float(np.sum(100.0 * (b - a * a) ** 2 + (1.0 - a) ** 2))

    def gradient(x):
        a, b = x[:-1], x[1:]
        t = b - a * a
        g = np.zeros_like(x)
        g[:-1] = -400.0 * a * t - 2.0 * (1.0 - a)
        g[1:] += 200.0 * t
        return g

    def hess_vec(x, v):
        a, b = x[:-1], x[1:]
        diag = np.zeros_like(x)
        diag[:-1] = 1200.0 * a * a - 400.0 * b + 2.0
        diag[1:] += 200.0
        off = -400.0 * a
        out = diag * v
        out[:-1] += off * v[1:]
        out[1:] += off * v[:-1]
        return out

    params = SmoothnessParams(2400.0 * R + 1200.0, 1200.0 * R * R + 1200.0 * R + 202.0)
    oracle = OracleSet(d, value, gradient, hess_vec, params)
    return ProblemSpec("rosenbrock", d, 1, float(R), oracle, {"R": R},
                       known_optimum=(np.ones(d), 0.0), x0=np.zeros(d))


def _quartic_default(rng, d=10, rho=0.1, R=None, lambda_min=-1.0, lambda_max=1.0):
    if R is None:
        R = 2.0 * (abs(min(lambda_min, 0.0)) / rho) ** 0.5 + 1.0 if rho > 0 else 5.0
    spectrum = np.linspace(lambda_max, lambda_min, int(d))
    return make_quartic_quadratic(rng, int(d), spectrum, rho, R)


REGISTRY: Dict[str, Callable[..., ProblemSpec]] = {
    "quartic_quadratic": lambda rng, **kw: _quartic_default(rng, **kw),
    "saddle_escape": lambda rng, gamma=1.0, d=2, R=None: make_saddle_escape(gamma, int(d), R),
    "sigmoid_sum": lambda rng, d=10, n=40, data_scale=1.0, ridge=0.01:
        make_sigmoid_sum(rng, int(d), int(n), data_scale, ridge=ridge),
    "mlp_regression": lambda rng, d_in=2, d_hidden=3, n=30, radius=3.0, noise=0.1, weight_decay=0.03:
        make_mlp_regression(rng, int(d_in), int(d_hidden), int(n), radius, noise=noise,
                            weight_decay=weight_decay),
    "rosenbrock": lambda rng, d=2, R=None: make_rosenbrock(int(d), R),
}


def build_problem(name: str, params: Optional[dict] = None, seed: int = 0) -> ProblemSpec:
    """Instantiate a registered problem; the instance is a pure function of ``(name, params, seed)``."""
    if name not in REGISTRY:
        raise KeyError(f"unknown problem {name!r}; known: {sorted(REGISTRY)}")
    return REGISTRY[name](make_rng(seed), **(params or {}))
