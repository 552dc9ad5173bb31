"""Pure numpy primal-dual iteration; fallback for the compiled kernel."""

from __future__ import annotations

import numpy as np

from ._scalar import increasing_root

KIND_P, KIND_QP, KIND_1P = 0, 1, 2


def prox_phi(w, lam, kind, p, q, guess=None):
    w = np.asarray(w, dtype=np.float64)
    a = np.abs(w)
    if kind == KIND_1P:
        r = increasing_root(np.maximum(a - lam, 0.0), lam, p, x0=guess)
    elif kind == KIND_QP:
        r = increasing_root(a, lam, p, q, x0=guess)
    else:
        r = increasing_root(a, lam, p, x0=guess)
    out = np.sign(w) * r
    return float(out) if out.ndim == 0 else out


def pdhg_iterate(tail, head, nu, m, g, tau, kind, p, q, sigma, eta, u, ubar, Y, work, root, n_iter):
    """Run ``n_iter`` primal-dual steps in place on ``u``, ``ubar``, ``Y`` and ``root``."""
    n = u.shape[0]
    lam = tau / sigma
    inv = 1.0 / (1.0 + eta)
    for _ in range(n_iter):
        z = Y + sigma * (ubar[head] - ubar[tail])
        r = prox_phi(z / sigma, lam, kind, p, q, root)
        root[:] = np.abs(r)
        Y[:] = z - sigma * r
        flux = m * Y
        work[:] = np.bincount(tail, weights=flux, minlength=n) - np.bincount(head, weights=flux, minlength=n)
        un = (u + eta * (work / nu + g)) * inv
        ubar[:] = 2.0 * un - u
        u[:] = un
