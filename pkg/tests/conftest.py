import math

import numpy as np
import pytest

from fastcubic.cubic_model import CubicSubproblem


def random_symmetric(rng, d, lo=-1.0, hi=1.0):
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    ev = rng.uniform(lo, hi, d)
    H = (Q * ev) @ Q.T
    return 0.5 * (H + H.T)


def random_instance(rng, d=None, L=None, hard=False, scale=None):
    """Random cubic subproblem; ``hard`` zeroes g on the bottom eigenvector."""
    d = int(rng.integers(2, 21)) if d is None else d
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    ev = rng.uniform(-1.0, 1.0, d)
    if hard:
        ev[0] = ev.min() - rng.uniform(0.1, 1.0)
    H = (Q * ev) @ Q.T
    H = 0.5 * (H + H.T)
    g = rng.standard_normal(d) * (rng.uniform(1e-3, 2.0) if scale is None else scale)
    if hard:
        v = Q[:, 0]
        g -= (g @ v) * v
    L = float(rng.uniform(0.2, 3.0)) if L is None else L
    L2 = float(np.max(np.abs(np.linalg.eigvalsh(H))))
    return CubicSubproblem.from_dense(g, H, L, max(L2, 1e-3))


def kappa_for(eps, L):
    return math.sqrt(900.0 / (eps * L))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


SCHEDULE_DECISIONS = ("return", "binary", "shrink", "eig")


def schedule_violations(p, sol, cfg, tol=1e-9):
    """Check the lambda-schedule invariants of one solver run against a dense eigensolve.

    Returns a list of human-readable violations (empty when all hold).
    """
    ev = np.linalg.eigvalsh(p.h_op.to_dense(tag="verify"))
    lmin, lmax = ev[0], ev[-1]
    B, kappa = cfg.B, cfg.kappa
    out = []
    sched = [t for t in sol.trace if t.decision in SCHEDULE_DECISIONS]
    for k, t in enumerate(sched):
        lam = t.lam
        gap = lam + lmin
        if not (-tol <= lam <= 2 * B + tol):
            out.append(f"step {k}: lambda {lam} outside [0, 2B={2 * B}]")
        if lam + lmax > 3 * B + tol:
            out.append(f"step {k}: lambda + lambda_max {lam + lmax} > 3B")
        if gap < 0.3 / kappa - tol:
            out.append(f"step {k}: lambda + lambda_min {gap} < 3/(10 kappa)")
        if t.decision == "eig" and gap > 1.0 / kappa + tol:
            out.append(f"step {k}: eigenvector exit with gap {gap} > 1/kappa")
        if t.delta is not None:
            lo, hi = 0.5 * gap, 0.625 * gap
            if not (lo - tol * max(1, lo) <= t.delta <= hi + tol * max(1, hi)):
                out.append(f"step {k}: delta {t.delta} outside [{lo}, {hi}]")
        if k + 1 < len(sched):
            nxt = sched[k + 1].lam
            if nxt != 0.0 and nxt + lmin > 0.75 * gap + tol:
                out.append(f"step {k}: no 3/4 contraction ({nxt + lmin} vs {gap})")
    return out


def mixed_instance(rng, k):
    """Easy, hard, near-hard and zero-gradient instances in rotation (d <= 20)."""
    kind = k % 4
    if kind == 0:
        return random_instance(rng)
    if kind == 1:
        return random_instance(rng, hard=True)
    if kind == 2:
        p = random_instance(rng, hard=True)
        ev, Q = np.linalg.eigh(p.h_op.matrix)
        g = p.g + 1e-6 * Q[:, 0]
        return CubicSubproblem.from_dense(g, p.h_op.matrix, p.L, p.L2)
    p = random_instance(rng)
    return CubicSubproblem.from_dense(np.zeros(p.dim), p.h_op.matrix, p.L, p.L2)


ACCEPTANCE_LINES = []


def acceptance(number, name, ok, detail=""):
    """Record and print one PASS/FAIL line for an acceptance criterion."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {number} ({name}) {detail}".rstrip()
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
