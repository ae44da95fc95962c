"""Pure-numpy versions of the compiled kernels, same signatures and results."""
import numpy as np


def agd_dense(H, shift, b, step, beta, max_iter, tol):
    H = np.asarray(H)
    b = np.asarray(b)
    d = b.shape[0]
    x = np.zeros(d)
    xp = np.zeros(d)
    for k in range(int(max_iter)):
        y = x + beta * (x - xp)
        with np.errstate(over="ignore", invalid="ignore"):
            g = H @ y + shift * y - b
            rn = np.sqrt(g @ g)
        if not np.isfinite(rn):
            return x, k + 1, -1
        if rn <= tol:
            return y, k + 1, 1
        xp = x
        x = y - step * g
    return x, int(max_iter), 0


def power_dense(H, shift, w0, K, step, beta, max_iter, tol):
    w = np.array(w0, dtype=np.float64, copy=True)
    w /= np.linalg.norm(w)
    total = 0
    status = 1
    z = np.zeros_like(w)
    for r in range(int(K) + 1):
        z, it, st = agd_dense(H, shift, w, step, beta, max_iter, tol)
        total += it
        status = min(status, st)
        if st < 0 or r == K:
            break
        zn = np.linalg.norm(z)
        if zn == 0.0:
            break
        w = z / zn
    return w, z, total, status


def svrg_rank1_epoch(A, c, shift, snapshot, full_grad, idx, step):
    x = np.array(snapshot, dtype=np.float64, copy=True)
    for i in idx:
        diff = x - snapshot
        a = A[i]
        x -= step * (c[i] * (a @ diff) * a + shift * diff + full_grad)
    return x
