"""Numpy implementation of the bounded-variable primal simplex loop.

This is the fallback used when the compiled ``_ckernels`` module is not
available. Both modules expose ``run_simplex`` with the same signature and
the same pivoting rules; the arrays are modified in place.
"""

import numpy as np

OPTIMAL = 0
UNBOUNDED = 1
ITERATION_LIMIT = 2
NUMERICAL = 3

BIG = 1e9
OPT_TOL = 1e-9
PIV_TOL = 1e-9
DEGEN_EPS = 1e-12
DROP_TOL = 1e-13
WEAK_PIVOT = 1e-7
MAX_WEAK = 50


def pivot(T, d, r, j):
    """Gauss-Jordan pivot of tableau ``T`` and reduced costs ``d`` on (r, j)."""
    n = T.shape[1]
    col = T[:, j].copy()
    prow = T[r] / col[r]
    T[r] = prow
    rows = np.flatnonzero(col)
    rows = rows[rows != r]
    cols = np.flatnonzero(prow)
    if rows.size:
        if cols.size > 0.3 * n:
            block = T[rows] - np.outer(col[rows], prow)
            block[np.abs(block) < DROP_TOL] = 0.0
            T[rows] = block
        else:
            ix = np.ix_(rows, cols)
            block = T[ix] - np.outer(col[rows], prow[cols])
            block[np.abs(block) < DROP_TOL] = 0.0
            T[ix] = block
        T[rows, j] = 0.0
    dj = d[j]
    if dj != 0.0:
        d[cols] -= dj * prow[cols]
    d[j] = 0.0


def run_simplex(T, beta, x, lo, hi, d, basis, pos, allowed, max_iter, bland_after):
    """Iterate primal simplex pivots until optimality or failure.

    Parameters
    ----------
    T : (m, n) float array
        Current tableau ``B^-1 A``.
    beta : (m,) float array
        Values of the basic variables.
    x : (n,) float array
        Values of all variables; only nonbasic entries are read.
    lo, hi : (n,) float arrays
        Bounds; magnitudes >= 1e9 are treated as absent.
    d : (n,) float array
        Reduced costs.
    basis, pos : int arrays
        Basic variable per row, and row per variable (-1 when nonbasic).
    allowed : (n,) uint8 array
        Variables permitted to enter the basis.

    Returns
    -------
    (status, iterations)
    """
    m, n = T.shape
    degenerate_run = 0
    weak = 0
    bland = False
    it = 0
    while it < max_iter:
        # pricing
        nonbasic = (pos < 0) & (allowed != 0)
        can_up = nonbasic & (d < -OPT_TOL) & (x < hi)
        can_down = nonbasic & (d > OPT_TOL) & (x > lo)
        cand = can_up | can_down
        if not cand.any():
            return OPTIMAL, it
        if bland:
            j = int(np.argmax(cand))
        else:
            j = int(np.argmax(np.where(cand, np.abs(d), -1.0)))
        direction = 1.0 if can_up[j] else -1.0

        # ratio test
        alpha = direction * T[:, j]
        bl = lo[basis]
        bh = hi[basis]
        lim = np.full(m, np.inf)
        dec = (alpha > PIV_TOL) & (bl > -BIG)
        inc = (alpha < -PIV_TOL) & (bh < BIG)
        lim[dec] = (beta[dec] - bl[dec]) / alpha[dec]
        lim[inc] = (bh[inc] - beta[inc]) / (-alpha[inc])
        np.maximum(lim, 0.0, out=lim)
        r = -1
        t = np.inf
        if dec.any() or inc.any():
            tmin = lim.min()
            ties = np.flatnonzero(lim <= tmin + DEGEN_EPS)
            if bland:
                r = int(ties[np.argmin(basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(alpha[ties]))])
            t = float(lim[r])
        span = hi[j] - lo[j] if (hi[j] < BIG and lo[j] > -BIG) else np.inf
        if span <= t:
            # bound flip, no basis change
            if not np.isfinite(span):
                return UNBOUNDED, it
            beta -= span * alpha
            x[j] = hi[j] if direction > 0 else lo[j]
            it += 1
            degenerate_run = 0
            bland = False
            continue
        if r < 0:
            return UNBOUNDED, it

        if bland and abs(alpha[r]) < WEAK_PIVOT:
            weak += 1
            if weak >= MAX_WEAK:
                return NUMERICAL, it
        leaving = basis[r]
        if t > 0.0:
            beta -= t * alpha
        x[leaving] = bl[r] if alpha[r] > 0 else bh[r]
        x[j] = x[j] + direction * t
        beta[r] = x[j]
        pivot(T, d, r, j)
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
    return ITERATION_LIMIT, it
