"""Bounded-variable revised simplex kernel (minimization, equality form)."""

import numpy as np

from .._backend import kernel

OPTIMAL = 0
INFEASIBLE = 1
UNBOUNDED = 2
ITERATION_LIMIT = 3


@kernel
def simplex_core(AT, b, c, lb, ub, basis, at_upper, max_iter, bland_after, piv_tol, opt_tol, refactor_every):
    """Minimize ``c @ x`` s.t. ``AT.T @ x = b``, ``lb <= x <= ub``.

    ``AT`` is the transposed constraint matrix (columns as rows, C order).
    ``basis`` and ``at_upper`` describe a starting basis whose basic
    solution is feasible; both are updated in place. Entering variables
    follow Dantzig's rule until ``bland_after`` pivots, then Bland's rule.

    Returns ``(status, x, iterations)``.
    """
    N, m = AT.shape
    is_basic = np.zeros(N, dtype=np.bool_)
    for r in range(m):
        is_basic[basis[r]] = True
    fixed = (ub - lb) <= 0.0

    x = np.where(at_upper, ub, lb)
    for r in range(m):
        x[basis[r]] = 0.0
    Binv = np.ascontiguousarray(np.linalg.inv(np.ascontiguousarray(AT[basis].T)))
    xB = Binv @ (b - x @ AT)

    status = ITERATION_LIMIT
    it = 0
    since_refactor = 0
    while it < max_iter:
        if since_refactor >= refactor_every:
            Binv = np.ascontiguousarray(np.linalg.inv(np.ascontiguousarray(AT[basis].T)))
            xB = Binv @ (b - x @ AT)
            since_refactor = 0

        y = c[basis] @ Binv
        d = c - AT @ y
        free = (~is_basic) & (~fixed)
        elig = (free & (~at_upper) & (d < -opt_tol)) | (free & at_upper & (d > opt_tol))
        cand = np.nonzero(elig)[0]
        if cand.size == 0:
            status = OPTIMAL
            break
        if it >= bland_after:
            q = cand[0]
        else:
            q = cand[np.argmax(np.abs(d[cand]))]

        direction = -1.0 if at_upper[q] else 1.0
        w = Binv @ AT[q]
        alpha = direction * w
        lbB = lb[basis]
        ubB = ub[basis]
        dec = alpha > piv_tol
        inc = (alpha < -piv_tol) & (ubB < np.inf)
        lim = np.full(m, np.inf)
        lim = np.where(dec, (xB - lbB) / np.where(dec, alpha, 1.0), lim)
        lim = np.where(inc, (ubB - xB) / np.where(inc, -alpha, 1.0), lim)
        lim = np.maximum(lim, 0.0)
        tmin = np.inf
        if m > 0:
            tmin = lim.min()
        t_flip = ub[q] - lb[q]

        if t_flip <= tmin:
            if t_flip == np.inf:
                status = UNBOUNDED
                break
            xB = xB - t_flip * alpha
            at_upper[q] = direction > 0.0
            x[q] = ub[q] if direction > 0.0 else lb[q]
        else:
            ties = lim <= tmin + 1e-12
            if it >= bland_after:
                r = np.argmin(np.where(ties, basis, N + 1))
            else:
                r = np.argmax(np.where(ties, np.abs(alpha), -1.0))
            t = lim[r]
            xB = xB - t * alpha
            leaving = basis[r]
            if alpha[r] > 0.0:
                x[leaving] = lb[leaving]
                at_upper[leaving] = False
            else:
                x[leaving] = ub[leaving]
                at_upper[leaving] = True
            entering_value = x[q] + direction * t
            is_basic[leaving] = False
            is_basic[q] = True
            at_upper[q] = False
            x[q] = 0.0
            basis[r] = q
            xB[r] = entering_value

            row = Binv[r] / w[r]
            Binv = Binv - np.outer(w, row)
            Binv[r] = row
            since_refactor += 1
        it += 1

    Binv = np.ascontiguousarray(np.linalg.inv(np.ascontiguousarray(AT[basis].T)))
    for r in range(m):
        x[basis[r]] = 0.0
    xB = Binv @ (b - x @ AT)
    for r in range(m):
        x[basis[r]] = xB[r]
    return status, x, it
