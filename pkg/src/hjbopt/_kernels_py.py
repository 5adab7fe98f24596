"""Pure-numpy implementations of the hot kernels.

Same functions and signatures as the compiled ``_kernels`` extension; used
when the extension is unavailable or when ``HJBOPT_BACKEND=python``.  The
loops run over candidate controls, each step vectorised over all nodes.
"""

import numpy as np

NAME = "python"


def _strides(nodes):
    d = len(nodes)
    stride = np.ones(d, dtype=np.int64)
    for k in range(d - 2, -1, -1):
        stride[k] = stride[k + 1] * nodes[k + 1]
    return stride


def interp_many(u, lo, h, nodes, X):
    """Interpolate the field ``u`` at the rows of ``X`` (points inside the box)."""
    X = np.asarray(X, dtype=float)
    nodes = np.asarray(nodes, dtype=np.int64)
    d = nodes.shape[0]
    stride = _strides(nodes)
    s = (X - lo) / h
    idx = np.clip(np.floor(s).astype(np.int64), 0, nodes - 2)
    w = np.clip(s - idx, 0.0, 1.0)
    out = np.zeros(X.shape[0])
    for c in range(1 << d):
        wt = np.ones(X.shape[0])
        off = np.zeros(X.shape[0], dtype=np.int64)
        for k in range(d):
            if (c >> k) & 1:
                wt = wt * w[:, k]
                off = off + (idx[:, k] + 1) * stride[k]
            else:
                wt = wt * (1.0 - w[:, k])
                off = off + idx[:, k] * stride[k]
        out += wt * u[off]
    return out


def gradient_many(u, lo, hi, h, nodes, X):
    """Central-difference gradient of the interpolant (one-sided near faces)."""
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    G = np.empty((n, d))
    for k in range(d):
        yp = X.copy()
        ym = X.copy()
        a = X[:, k] + h[k]
        b = X[:, k] - h[k]
        yp[:, k] = np.where(a <= hi[k], a, X[:, k])
        ym[:, k] = np.where(b >= lo[k], b, X[:, k])
        G[:, k] = (interp_many(u, lo, h, nodes, yp) - interp_many(u, lo, h, nodes, ym)) / (
            yp[:, k] - ym[:, k])
    return G


def sweep_1d(u, fx, lo, h, dtau, disc, ladder, M, nthreads=1):
    """One Jacobi sweep in 1-D (sampled ladder plus exact per-cell minimisers)."""
    u = np.asarray(u, dtype=float)
    n = u.shape[0]
    hi = lo + h * (n - 1)
    x = lo + h * np.arange(n)
    run = dtau * np.asarray(fx)
    best = np.full(n, np.inf)
    for a in ladder:
        y = np.clip(x + dtau * a, lo, hi)
        s = (y - lo) / h
        k = np.clip(np.floor(s).astype(np.int64), 0, n - 2)
        t = s - k
        val = run + 0.5 * dtau * a * a + disc * ((1.0 - t) * u[k] + t * u[k + 1])
        np.minimum(best, val, out=best)
    reach = int(dtau * M / h) + 2
    slopes = np.diff(u) / h
    i = np.arange(n)
    for off in range(-reach, reach + 1):
        j = i + off
        ok = (j >= 0) & (j <= n - 2)
        jj = np.clip(j, 0, n - 2)
        cell_lo = lo + h * jj
        amin = np.maximum((cell_lo - x) / dtau, -M)
        amax = np.minimum((cell_lo + h - x) / dtau, M)
        ok &= amin <= amax
        a = np.clip(-disc * slopes[jj], amin, amax)
        t = np.clip((x + dtau * a - cell_lo) / h, 0.0, 1.0)
        val = run + 0.5 * dtau * a * a + disc * ((1.0 - t) * u[jj] + t * u[jj + 1])
        val = np.where(ok, val, np.inf)
        np.minimum(best, val, out=best)
    return best, float(np.max(np.abs(best - u)))


def sweep_nd(u, fx, lo, hi, h, nodes, dtau, disc, controls, nthreads=1):
    """One Jacobi sweep in 1-3 dimensions over a fixed sampled control set."""
    u = np.asarray(u, dtype=float)
    nodes = np.asarray(nodes, dtype=np.int64)
    mesh = np.meshgrid(*[lo[k] + h[k] * np.arange(nodes[k]) for k in range(len(nodes))],
                       indexing="ij")
    X = np.stack([m.ravel() for m in mesh], axis=1)
    best = np.full(u.shape[0], np.inf)
    for a in np.asarray(controls):
        Y = np.clip(X + dtau * a, lo, hi)
        val = 0.5 * dtau * float(a @ a) + disc * interp_many(u, lo, h, nodes, Y)
        np.minimum(best, val, out=best)
    best = best + dtau * np.asarray(fx)
    return best, float(np.max(np.abs(best - u)))
