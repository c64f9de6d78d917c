# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled bounded-variable primal simplex loop.

Mirrors ``_pykernels.run_simplex`` rule for rule; see that module for the
argument contract.
"""

from libc.math cimport fabs
import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef double BIG = 1e9
cdef double OPT_TOL = 1e-9
cdef double PIV_TOL = 1e-9
cdef double DEGEN_EPS = 1e-12
cdef double DROP_TOL = 1e-13
cdef double WEAK_PIVOT = 1e-7
cdef Py_ssize_t MAX_WEAK = 50

cdef enum:
    S_OPTIMAL = 0
    S_UNBOUNDED = 1
    S_ITERATION_LIMIT = 2
    S_NUMERICAL = 3

OPTIMAL = S_OPTIMAL
UNBOUNDED = S_UNBOUNDED
ITERATION_LIMIT = S_ITERATION_LIMIT
NUMERICAL = S_NUMERICAL


cdef void _pivot(double[:, ::1] T, double[::1] d, Py_ssize_t r, Py_ssize_t j,
                 Py_ssize_t[::1] cols) noexcept nogil:
    cdef Py_ssize_t m = T.shape[0], n = T.shape[1]
    cdef Py_ssize_t i, k, c, ncols = 0
    cdef double p = T[r, j]
    cdef double f, v
    for k in range(n):
        if T[r, k] != 0.0:
            T[r, k] = T[r, k] / p
            cols[ncols] = k
            ncols += 1
    for i in range(m):
        if i == r:
            continue
        f = T[i, j]
        if f == 0.0:
            continue
        for c in range(ncols):
            k = cols[c]
            v = T[i, k] - f * T[r, k]
            if fabs(v) < DROP_TOL:
                v = 0.0
            T[i, k] = v
        T[i, j] = 0.0
    f = d[j]
    if f != 0.0:
        for c in range(ncols):
            k = cols[c]
            d[k] -= f * T[r, k]
    d[j] = 0.0


def pivot(double[:, ::1] T, double[::1] d, Py_ssize_t r, Py_ssize_t j):
    cdef Py_ssize_t[::1] cols = np.empty(T.shape[1], dtype=np.intp)
    with nogil:
        _pivot(T, d, r, j, cols)


def run_simplex(double[:, ::1] T, double[::1] beta, double[::1] x,
                double[::1] lo, double[::1] hi, double[::1] d,
                Py_ssize_t[::1] basis, Py_ssize_t[::1] pos,
                unsigned char[::1] allowed, Py_ssize_t max_iter,
                Py_ssize_t bland_after):
    cdef Py_ssize_t m = T.shape[0], n = T.shape[1]
    cdef Py_ssize_t[::1] cols = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t it = 0, degenerate_run = 0, weak = 0
    cdef bint bland = False, found, up
    cdef Py_ssize_t i, k, j, r, leaving
    cdef double best, score, dk, direction, a, lim, t, tmin, span, bl, bh, besta
    cdef int status = S_ITERATION_LIMIT

    with nogil:
        while it < max_iter:
            # pricing
            j = -1
            best = -1.0
            up = False
            for k in range(n):
                if pos[k] >= 0 or allowed[k] == 0:
                    continue
                dk = d[k]
                if dk < -OPT_TOL and x[k] < hi[k]:
                    score = -dk
                    found = True
                    direction = 1.0
                elif dk > OPT_TOL and x[k] > lo[k]:
                    score = dk
                    found = True
                    direction = -1.0
                else:
                    continue
                if bland:
                    j = k
                    up = direction > 0
                    break
                if score > best:
                    best = score
                    j = k
                    up = direction > 0
            if j < 0:
                status = S_OPTIMAL
                break
            direction = 1.0 if up else -1.0

            # ratio test
            r = -1
            tmin = 1e300
            for i in range(m):
                a = direction * T[i, j]
                bl = lo[basis[i]]
                bh = hi[basis[i]]
                if a > PIV_TOL and bl > -BIG:
                    lim = (beta[i] - bl) / a
                elif a < -PIV_TOL and bh < BIG:
                    lim = (bh - beta[i]) / (-a)
                else:
                    continue
                if lim < 0.0:
                    lim = 0.0
                if lim < tmin:
                    tmin = lim
            if tmin < 1e300:
                besta = -1.0
                for i in range(m):
                    a = direction * T[i, j]
                    bl = lo[basis[i]]
                    bh = hi[basis[i]]
                    if a > PIV_TOL and bl > -BIG:
                        lim = (beta[i] - bl) / a
                    elif a < -PIV_TOL and bh < BIG:
                        lim = (bh - beta[i]) / (-a)
                    else:
                        continue
                    if lim < 0.0:
                        lim = 0.0
                    if lim <= tmin + DEGEN_EPS:
                        if bland:
                            if r < 0 or basis[i] < basis[r]:
                                r = i
                        elif fabs(a) > besta:
                            besta = fabs(a)
                            r = i
            t = 1e300
            if r >= 0:
                a = direction * T[r, j]
                if a > 0:
                    t = (beta[r] - lo[basis[r]]) / a
                else:
                    t = (hi[basis[r]] - beta[r]) / (-a)
                if t < 0.0:
                    t = 0.0
            if hi[j] < BIG and lo[j] > -BIG:
                span = hi[j] - lo[j]
            else:
                span = 1e300
            if span <= t:
                if span >= 1e300:
                    status = S_UNBOUNDED
                    break
                for i in range(m):
                    a = T[i, j]
                    if a != 0.0:
                        beta[i] -= span * direction * a
                x[j] = hi[j] if direction > 0 else lo[j]
                it += 1
                degenerate_run = 0
                bland = False
                continue
            if r < 0:
                status = S_UNBOUNDED
                break

            a = direction * T[r, j]
            if bland and fabs(a) < WEAK_PIVOT:
                weak += 1
                if weak >= MAX_WEAK:
                    status = S_NUMERICAL
                    break
            leaving = basis[r]
            if t > 0.0:
                for i in range(m):
                    if T[i, j] != 0.0:
                        beta[i] -= t * direction * T[i, j]
            x[leaving] = lo[leaving] if a > 0 else hi[leaving]
            x[j] = x[j] + direction * t
            beta[r] = x[j]
            _pivot(T, d, r, j, cols)
            basis[r] = j
            pos[j] = r
            pos[leaving] = -1
            it += 1
            if t <= DEGEN_EPS:
                degenerate_run += 1
                if degenerate_run >= bland_after:
                    bland = True
            else:
                degenerate_run = 0
                bland = False
    return status, it
