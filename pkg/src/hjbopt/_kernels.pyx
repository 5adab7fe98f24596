# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: multilinear interpolation, finite-difference
gradients and one Jacobi sweep of the semi-Lagrangian value iteration.

The pure-numpy module ``_kernels_py`` implements the same functions with the
same signatures; ``_backend`` picks one at import time.
"""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport floor, fabs, fmin, fmax, INFINITY

cnp.import_array()

NAME = "cython"


cdef inline double _interp(const double[::1] u, const double* lo, const double* h,
                           const long long* nodes, const long long* stride,
                           int d, const double* y) noexcept nogil:
    """Multilinear interpolation at y (assumed inside the box)."""
    cdef int k, c
    cdef long long idx[3]
    cdef double w[3]
    cdef double s, t, acc, wt
    cdef long long off, i
    for k in range(d):
        s = (y[k] - lo[k]) / h[k]
        i = <long long> floor(s)
        if i < 0:
            i = 0
        elif i > nodes[k] - 2:
            i = nodes[k] - 2
        t = s - i
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        idx[k] = i
        w[k] = t
    acc = 0.0
    for c in range(1 << d):
        wt = 1.0
        off = 0
        for k in range(d):
            if (c >> k) & 1:
                wt = wt * w[k]
                off = off + (idx[k] + 1) * stride[k]
            else:
                wt = wt * (1.0 - w[k])
                off = off + idx[k] * stride[k]
        if wt != 0.0:
            acc = acc + wt * u[off]
    return acc


cdef void _strides(const long long* nodes, int d, long long* stride) noexcept nogil:
    cdef int k
    stride[d - 1] = 1
    for k in range(d - 2, -1, -1):
        stride[k] = stride[k + 1] * nodes[k + 1]


def interp_many(const double[::1] u, const double[::1] lo, const double[::1] h,
                const long long[::1] nodes, const double[:, ::1] X):
    """Interpolate the field at the rows of X (points inside the box)."""
    cdef int d = nodes.shape[0]
    cdef Py_ssize_t n = X.shape[0], j
    cdef long long stride[3]
    out = np.empty(n)
    cdef double[::1] o = out
    _strides(&nodes[0], d, stride)
    with nogil:
        for j in range(n):
            o[j] = _interp(u, &lo[0], &h[0], &nodes[0], stride, d, &X[j, 0])
    return out


def gradient_many(const double[::1] u, const double[::1] lo, const double[::1] hi,
                  const double[::1] h, const long long[::1] nodes, const double[:, ::1] X):
    """Central-difference gradient of the interpolant (one-sided near faces)."""
    cdef int d = nodes.shape[0], k, m
    cdef Py_ssize_t n = X.shape[0], j
    cdef long long stride[3]
    cdef double yp[3]
    cdef double ym[3]
    cdef double a, b
    out = np.empty((n, d))
    cdef double[:, ::1] G = out
    _strides(&nodes[0], d, stride)
    with nogil:
        for j in range(n):
            for k in range(d):
                for m in range(d):
                    yp[m] = X[j, m]
                    ym[m] = X[j, m]
                a = X[j, k] + h[k]
                b = X[j, k] - h[k]
                if a <= hi[k]:
                    yp[k] = a
                if b >= lo[k]:
                    ym[k] = b
                G[j, k] = (_interp(u, &lo[0], &h[0], &nodes[0], stride, d, yp)
                           - _interp(u, &lo[0], &h[0], &nodes[0], stride, d, ym)) / (yp[k] - ym[k])
    return out


def sweep_1d(const double[::1] u, const double[::1] fx, double lo, double h,
             double dtau, double disc, const double[::1] ladder, double M, int nthreads=1):
    """One Jacobi sweep in 1-D.

    Candidates per node are the sampled controls in ``ladder`` (feet clamped
    to the box) plus, for every grid cell reachable with speed <= M, the exact
    minimiser of the running cost plus discounted linear interpolant on that
    cell.  Returns ``(u_new, sup_change)``.
    """
    cdef Py_ssize_t n = u.shape[0], i
    cdef Py_ssize_t nl = ladder.shape[0]
    cdef double hi = lo + h * (n - 1)
    cdef int reach = <int> (dtau * M / h) + 2
    unew = np.empty(n)
    cdef double[::1] un = unew
    cdef double best, xi, y, s, t, a, amin, amax, val, run, cell_lo, du, sup = 0.0
    cdef Py_ssize_t j, jl, jr, q, k
    cdef double[::1] changes = np.empty(n)
    for i in prange(n, nogil=True, num_threads=nthreads, schedule="static"):
        xi = lo + h * i
        run = dtau * fx[i]
        best = INFINITY
        for q in range(nl):
            a = ladder[q]
            y = xi + dtau * a
            if y < lo:
                y = lo
            elif y > hi:
                y = hi
            s = (y - lo) / h
            k = <Py_ssize_t> floor(s)
            if k < 0:
                k = 0
            elif k > n - 2:
                k = n - 2
            t = s - k
            val = run + 0.5 * dtau * a * a + disc * ((1.0 - t) * u[k] + t * u[k + 1])
            if val < best:
                best = val
        jl = i - reach
        if jl < 0:
            jl = 0
        jr = i + reach
        if jr > n - 2:
            jr = n - 2
        for j in range(jl, jr + 1):
            cell_lo = lo + h * j
            amin = (cell_lo - xi) / dtau
            amax = (cell_lo + h - xi) / dtau
            amin = fmax(amin, -M)
            amax = fmin(amax, M)
            if amin > amax:
                continue
            s = (u[j + 1] - u[j]) / h
            a = -disc * s
            if a < amin:
                a = amin
            elif a > amax:
                a = amax
            y = xi + dtau * a
            t = (y - cell_lo) / h
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
            val = run + 0.5 * dtau * a * a + disc * ((1.0 - t) * u[j] + t * u[j + 1])
            if val < best:
                best = val
        un[i] = best
        changes[i] = fabs(best - u[i])
    for i in range(n):
        if changes[i] > sup:
            sup = changes[i]
    return unew, sup




cdef double _node_best(const double[::1] u, long long i, int d, const double* lo,
                       const double* hi, const double* h, const long long* nodes,
                       const long long* stride, double dtau, Py_ssize_t nc,
                       const double* ctrl, const long long* off, const double* wts,
                       const double* cost, const long long* coff) noexcept nogil:
    """min over controls q of cost[q] + (interpolated u at the foot of q)."""
    cdef long long idx[3]
    cdef double x[3]
    cdef double y[3]
    cdef long long rem = i, j, base
    cdef int k, c, ncorner = 1 << d
    cdef Py_ssize_t q
    cdef bint inside
    cdef double best = INFINITY, val
    cdef const double* uu = &u[0]
    cdef long long s0 = stride[0]
    for k in range(d - 1, -1, -1):
        idx[k] = rem % nodes[k]
        rem = rem // nodes[k]
        x[k] = lo[k] + h[k] * idx[k]
    if d == 2:
        for q in range(nc):
            j = idx[0] + off[3 * q]
            base = idx[1] + off[3 * q + 1]
            if j >= 0 and j <= nodes[0] - 2 and base >= 0 and base <= nodes[1] - 2:
                base = base + j * s0
                val = (wts[8 * q] * uu[base] + wts[8 * q + 1] * uu[base + s0]
                       + wts[8 * q + 2] * uu[base + 1] + wts[8 * q + 3] * uu[base + s0 + 1])
            else:
                for k in range(2):
                    y[k] = fmin(fmax(x[k] + dtau * ctrl[2 * q + k], lo[k]), hi[k])
                val = _interp(u, lo, h, nodes, stride, d, y)
            val = val + cost[q]
            if val < best:
                best = val
        return best
    for q in range(nc):
        inside = True
        base = 0
        for k in range(d):
            j = idx[k] + off[3 * q + k]
            if j < 0 or j > nodes[k] - 2:
                inside = False
                break
            base = base + j * stride[k]
        if inside:
            val = 0.0
            for c in range(ncorner):
                val = val + wts[8 * q + c] * uu[base + coff[c]]
        else:
            for k in range(d):
                y[k] = fmin(fmax(x[k] + dtau * ctrl[d * q + k], lo[k]), hi[k])
            val = _interp(u, lo, h, nodes, stride, d, y)
        val = val + cost[q]
        if val < best:
            best = val
    return best


def sweep_nd(const double[::1] u, const double[::1] fx, const double[::1] lo,
             const double[::1] hi, const double[::1] h, const long long[::1] nodes,
             double dtau, double disc, const double[:, ::1] controls, int nthreads=1):
    """One Jacobi sweep in 1-3 dimensions over a fixed sampled control set.

    On a uniform grid the foot ``x_i + dtau * a`` of a control ``a`` lies at a
    node-independent cell offset with node-independent multilinear weights;
    these are precomputed per control.  Feet that would leave the box take a
    clamped general path.  Returns ``(u_new, sup_change)``.
    """
    cdef int d = nodes.shape[0], k, c
    cdef Py_ssize_t n = u.shape[0], i, q
    cdef Py_ssize_t nc = controls.shape[0]
    cdef long long stride[3]
    cdef int ncorner = 1 << d
    unew = np.empty(n)
    cdef double[::1] un = unew
    cdef double[::1] changes = np.empty(n)
    cdef double[::1] cost = np.empty(nc)
    cdef long long[::1] off = np.zeros(3 * nc, dtype=np.int64)
    cdef double[::1] wts = np.zeros(8 * nc)
    cdef long long[::1] coff = np.zeros(8, dtype=np.int64)
    cdef double[::1] ctrl = np.ascontiguousarray(controls).ravel()
    cdef double best, val, sup = 0.0, s, wt
    cdef double frac[3]
    _strides(&nodes[0], d, stride)
    for c in range(ncorner):
        for k in range(d):
            if (c >> k) & 1:
                coff[c] += stride[k]
    for q in range(nc):
        val = 0.0
        for k in range(d):
            val = val + controls[q, k] * controls[q, k]
            s = dtau * controls[q, k] / h[k]
            off[3 * q + k] = <long long> floor(s)
            frac[k] = s - off[3 * q + k]
        # running control cost, pre-divided by the discount factor
        cost[q] = 0.5 * dtau * val / disc
        for c in range(ncorner):
            wt = 1.0
            for k in range(d):
                if (c >> k) & 1:
                    wt = wt * frac[k]
                else:
                    wt = wt * (1.0 - frac[k])
            wts[8 * q + c] = wt
    for i in prange(n, nogil=True, num_threads=nthreads, schedule="static"):
        best = disc * _node_best(u, i, d, &lo[0], &hi[0], &h[0], &nodes[0], stride, dtau, nc,
                                 &ctrl[0], &off[0], &wts[0], &cost[0], &coff[0])
        best = best + dtau * fx[i]
        un[i] = best
        changes[i] = fabs(best - u[i])
    for i in range(n):
        if changes[i] > sup:
            sup = changes[i]
    return unew, sup
