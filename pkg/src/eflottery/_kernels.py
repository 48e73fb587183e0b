"""Brute-force searches over small lotteries.

``cross[o, i, j]`` is agent ``i``'s value for agent ``j``'s bundle in
outcome ``o``. A candidate lottery mixes up to three outcomes with
probabilities that are multiples of ``1 / denom``.
"""

import itertools

import numpy as np

from ._backend import USE_NUMBA, kernel


@kernel
def dominator_search_loop(cross, target, denom, ef, tol):
    """Best surplus ``sum_i u_i - target_i`` over lotteries with ``u >= target`` (and EF if ``ef``).

    Returns ``(surplus, outcomes[3], weights[3])``; surplus is ``-inf``
    when nothing qualifies.
    """
    O, n, _ = cross.shape
    best = -np.inf
    best_o = np.full(3, -1, dtype=np.int64)
    best_w = np.zeros(3, dtype=np.int64)
    u = np.empty((n, n))
    for a in range(O):
        for b in range(a, O):
            for c in range(b, O):
                for w1 in range(denom + 1):
                    for w2 in range(denom + 1 - w1):
                        w3 = denom - w1 - w2
                        ok = True
                        surplus = 0.0
                        for i in range(n):
                            for j in range(n):
                                u[i, j] = (w1 * cross[a, i, j] + w2 * cross[b, i, j] + w3 * cross[c, i, j]) / denom
                        for i in range(n):
                            if u[i, i] < target[i] - tol:
                                ok = False
                                break
                            if ef:
                                for j in range(n):
                                    if u[i, i] < u[i, j] - tol:
                                        ok = False
                                        break
                                if not ok:
                                    break
                            surplus += u[i, i] - target[i]
                        if ok and surplus > best:
                            best = surplus
                            best_o[0], best_o[1], best_o[2] = a, b, c
                            best_w[0], best_w[1], best_w[2] = w1, w2, w3
    return best, best_o, best_w


def _weight_grid(denom):
    w = [(w1, w2, denom - w1 - w2) for w1 in range(denom + 1) for w2 in range(denom + 1 - w1)]
    return np.array(w, dtype=np.int64)


def dominator_search_numpy(cross, target, denom, ef, tol, chunk=256):
    """Vectorized twin of :func:`dominator_search_loop`."""
    O, n, _ = cross.shape
    triples = np.array(list(itertools.combinations_with_replacement(range(O), 3)), dtype=np.int64)
    W = _weight_grid(denom)
    diag = np.arange(n)
    best = -np.inf
    best_o = np.full(3, -1, dtype=np.int64)
    best_w = np.zeros(3, dtype=np.int64)
    for start in range(0, len(triples), chunk):
        T = triples[start : start + chunk]
        # (T, P, n, n)
        U = np.einsum("pk,tkij->tpij", W, cross[T]) / denom
        own = U[:, :, diag, diag]
        ok = np.all(own >= target - tol, axis=-1)
        if ef:
            ok &= np.all(own[..., :, None] >= U - tol, axis=(-2, -1))
        surplus = np.where(ok, (own - target).sum(axis=-1), -np.inf)
        flat = int(np.argmax(surplus))
        t, p = np.unravel_index(flat, surplus.shape)
        if surplus[t, p] > best:
            best = float(surplus[t, p])
            best_o = T[t].copy()
            best_w = W[p].copy()
    return best, best_o, best_w


def dominator_search(cross, target, denom, ef, tol=1e-9):
    cross = np.ascontiguousarray(cross, dtype=np.float64)
    target = np.ascontiguousarray(target, dtype=np.float64)
    if USE_NUMBA:
        return dominator_search_loop(cross, target, int(denom), bool(ef), float(tol))
    return dominator_search_numpy(cross, target, int(denom), bool(ef), float(tol))
