"""Vectorised scalar root finders shared by the energies and the fallback kernel."""

from __future__ import annotations

import numpy as np

_MAX_NEWTON = 200


def _safeguarded_newton(
    f_df, lo: np.ndarray, hi: np.ndarray, x: np.ndarray, fscale: np.ndarray, rtol: float = 1e-15
) -> np.ndarray:
    """Root of an increasing function on the brackets ``[lo, hi]``.

    ``f_df(x)`` returns ``(f, f')``.  Newton steps that leave the current
    bracket are replaced by bisection.  A negligible step only counts as
    convergence once ``|f| <= 1e-12 * fscale``.
    """
    lo = lo.copy()
    hi = hi.copy()
    x = np.clip(x, lo, hi)
    active = hi > lo
    for _ in range(_MAX_NEWTON):
        if not active.any():
            break
        xa = x[active]
        f, df = f_df(xa, active)
        la, ha = lo[active], hi[active]
        la = np.where(f < 0, xa, la)
        ha = np.where(f > 0, xa, ha)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = f / df
        xn = xa - step
        bad = ~np.isfinite(xn) | (xn <= la) | (xn >= ha)
        xn = np.where(bad, 0.5 * (la + ha), xn)
        lo[active], hi[active] = la, ha
        small_step = np.abs(xn - xa) <= rtol * np.maximum(ha, 1e-300)
        done = (f == 0) | (small_step & (np.abs(f) <= 1e-12 * fscale[active])) | (ha - la <= rtol * ha)
        x[active] = np.where(f == 0, xa, xn)
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    return x


def increasing_root(w: np.ndarray, lam, p: float, q: float | None = None, x0=None) -> np.ndarray:
    """Solve ``r + lam * (r**(q-1) + r**(p-1)) = w`` for ``r >= 0`` given ``w >= 0``.

    The ``q`` term is dropped when ``q`` is None.  This is the radial part of
    the proximal map of ``lam * phi``.  ``x0`` is an optional starting guess,
    used where it lies strictly inside the bracket.
    """
    w = np.asarray(w, dtype=np.float64)
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), w.shape)
    out = np.zeros_like(w)
    pos = w > 0
    if not pos.any():
        return out
    wp, lp = w[pos], lam[pos]
    if p == 2.0 and q is None:
        out[pos] = wp / (1.0 + lp)
        return out

    def f_df(r, active):
        ww, ll = wp[active], lp[active]
        with np.errstate(divide="ignore"):
            f = r + ll * r ** (p - 1) - ww
            df = 1.0 + ll * (p - 1) * r ** (p - 2)
            if q is not None:
                f = f + ll * r ** (q - 1)
                df = df + ll * (q - 1) * r ** (q - 2)
        return f, df

    # the root is below both w and (w/lam)**(1/(p-1))
    hi = np.minimum(wp, (wp / lp) ** (1.0 / (p - 1)))
    lo = np.zeros_like(wp)
    start = 0.5 * hi
    if x0 is not None:
        g0 = np.broadcast_to(np.asarray(x0, dtype=np.float64), w.shape)[pos]
        start = np.where((g0 > 0) & (g0 < hi), g0, start)
    out[pos] = _safeguarded_newton(f_df, lo, hi, start, wp)
    return out


def gradient_inverse(a: np.ndarray, p: float, q: float) -> np.ndarray:
    """Solve ``s**(q-1) + s**(p-1) = a`` for ``s >= 0`` given ``a >= 0`` (``1 < q < p``)."""
    a = np.asarray(a, dtype=np.float64)
    out = np.zeros_like(a)
    pos = a > 0
    if not pos.any():
        return out
    ap = a[pos]

    def f_df(s, active):
        with np.errstate(divide="ignore"):
            f = s ** (q - 1) + s ** (p - 1) - ap[active]
            df = (q - 1) * s ** (q - 2) + (p - 1) * s ** (p - 2)
        return f, df

    hi = np.minimum(ap ** (1.0 / (p - 1)), ap ** (1.0 / (q - 1)))
    lo = np.zeros_like(ap)
    out[pos] = _safeguarded_newton(f_df, lo, hi, 0.5 * hi, ap)
    return out
