"""Compiled vs numpy kernels: wall time per call on random SPD systems.

    python benchmarks/bench_kernels.py [--dims 5 20 100] [--repeat 5]

Both backends must agree to rounding; the script asserts that before timing.
"""
import argparse
import math
import time

import numpy as np

from fastcubic._kernels import _fallback

try:
    from fastcubic._kernels import _core
except ImportError:
    _core = None


def _system(rng, d, cond=1e3):
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    ev = np.geomspace(1.0, cond, d)
    H = np.ascontiguousarray((Q * ev) @ Q.T)
    return 0.5 * (H + H.T), ev[0], ev[-1]


def _timed(fn, repeat):
    best = math.inf
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dims", type=int, nargs="+", default=[5, 20, 100])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _core is None:
        print("compiled extension not built; only the fallback is available")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':<12} {'d':>5} {'numpy_ms':>10} {'cython_ms':>10} {'speedup':>8}")
    for d in args.dims:
        H, mu, L = _system(rng, d)
        b = rng.standard_normal(d)
        sk = math.sqrt(L / mu)
        params = (0.0, b, 1.0 / L, (sk - 1) / (sk + 1), 5000, 1e-10 * mu)
        tp, (xp, ip, _) = _timed(lambda: _fallback.agd_dense(H, *params), args.repeat)
        tc, (xc, ic, _) = _timed(lambda: _core.agd_dense(H, *params), args.repeat)
        assert ip == ic and np.allclose(xp, xc, rtol=1e-9, atol=1e-12)
        print(f"{'agd_dense':<12} {d:>5} {tp * 1e3:>10.3f} {tc * 1e3:>10.3f} {tp / tc:>8.1f}")

        w0 = rng.standard_normal(d)
        pparams = (0.0, w0, 50, 1.0 / L, (sk - 1) / (sk + 1), 5000, 1e-4 * mu)
        tp, outp = _timed(lambda: _fallback.power_dense(H, *pparams), args.repeat)
        tc, outc = _timed(lambda: _core.power_dense(H, *pparams), args.repeat)
        assert outp[2] == outc[2] and np.allclose(outp[0], outc[0], rtol=1e-8, atol=1e-10)
        print(f"{'power_dense':<12} {d:>5} {tp * 1e3:>10.3f} {tc * 1e3:>10.3f} {tp / tc:>8.1f}")

        n = 4 * d
        A = np.ascontiguousarray(rng.standard_normal((n, d)))
        c = rng.uniform(-0.1, 0.25, n)
        snap = rng.standard_normal(d)
        fg = rng.standard_normal(d)
        idx = rng.integers(0, n, size=2 * n).astype(np.int64)
        sparams = (A, c, 1.0, snap, fg, idx, 1e-3)
        tp, xp = _timed(lambda: _fallback.svrg_rank1_epoch(*sparams), args.repeat)
        tc, xc = _timed(lambda: _core.svrg_rank1_epoch(*sparams), args.repeat)
        assert np.allclose(xp, xc, rtol=1e-10, atol=1e-12)
        print(f"{'svrg_epoch':<12} {d:>5} {tp * 1e3:>10.3f} {tc * 1e3:>10.3f} {tp / tc:>8.1f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
