# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled primal-dual iteration for the resolvent problem.

Mirrors ``metricflow._pykernel.pdhg_iterate`` exactly; selected at import
by ``metricflow.kernel``.
"""

from libc.math cimport fabs, pow, fmin, isfinite

cdef int KIND_P = 0
cdef int KIND_QP = 1
cdef int KIND_1P = 2


cdef inline double _radial_root(double w, double lam, double p, double q, int use_q, double guess) noexcept nogil:
    """Solve r + lam*(r^(q-1) + r^(p-1)) = w on r >= 0 (q term only if use_q).

    Newton starts from ``guess`` when it lies inside the bracket.
    """
    cdef double lo = 0.0, hi, x, f, df, xn, t
    cdef int it
    if w <= 0.0:
        return 0.0
    if p == 2.0 and not use_q:
        return w / (1.0 + lam)
    hi = fmin(w, pow(w / lam, 1.0 / (p - 1.0)))
    x = guess if 0.0 < guess < hi else 0.5 * hi
    for it in range(200):
        t = pow(x, p - 2.0)
        f = x + lam * t * x - w
        df = 1.0 + lam * (p - 1.0) * t
        if use_q:
            t = pow(x, q - 2.0)
            f += lam * t * x
            df += lam * (q - 1.0) * t
        if f == 0.0:
            return x
        if f < 0.0:
            lo = x
        else:
            hi = x
        xn = x - f / df
        if not isfinite(xn) or xn <= lo or xn >= hi:
            xn = 0.5 * (lo + hi)
        # a tiny Newton step alone is not convergence: near 0 with p < 2 the slope blows up
        if hi - lo <= 1e-15 * hi or (fabs(xn - x) <= 1e-15 * hi and fabs(f) <= 1e-12 * w):
            return xn
        x = xn
    return x


cdef inline double _prox_phi(double w, double lam, int kind, double p, double q, double guess) noexcept nogil:
    cdef double a = fabs(w), r
    cdef double sgn = 1.0 if w > 0.0 else (-1.0 if w < 0.0 else 0.0)
    if kind == KIND_1P:
        a = a - lam
        if a <= 0.0:
            return 0.0
        r = _radial_root(a, lam, p, q, 0, guess)
    elif kind == KIND_QP:
        r = _radial_root(a, lam, p, q, 1, guess)
    else:
        r = _radial_root(a, lam, p, q, 0, guess)
    return sgn * r


def prox_phi(double w, double lam, int kind, double p, double q, double guess=0.0):
    """Scalar proximal map of ``lam * phi`` (exposed for tests)."""
    return _prox_phi(w, lam, kind, p, q, guess)


def pdhg_iterate(
    const Py_ssize_t[::1] tail,
    const Py_ssize_t[::1] head,
    const double[::1] nu,
    const double[::1] m,
    const double[::1] g,
    double tau,
    int kind,
    double p,
    double q,
    double sigma,
    double eta,
    double[::1] u,
    double[::1] ubar,
    double[::1] Y,
    double[::1] work,
    double[::1] root,
    Py_ssize_t n_iter,
):
    """Run ``n_iter`` primal-dual steps in place on ``u``, ``ubar``, ``Y`` and ``root``.

    ``root`` holds the last radial prox value per edge and warm-starts the next solve.
    """
    cdef Py_ssize_t n = u.shape[0], ne = Y.shape[0]
    cdef Py_ssize_t it, e, i
    cdef double z, r, lam = tau / sigma, un, inv = 1.0 / (1.0 + eta)
    with nogil:
        for it in range(n_iter):
            for i in range(n):
                work[i] = 0.0
            for e in range(ne):
                z = Y[e] + sigma * (ubar[head[e]] - ubar[tail[e]])
                r = _prox_phi(z / sigma, lam, kind, p, q, root[e])
                root[e] = fabs(r)
                Y[e] = z - sigma * r
                work[tail[e]] += m[e] * Y[e]
                work[head[e]] -= m[e] * Y[e]
            for i in range(n):
                un = (u[i] + eta * (work[i] / nu[i] + g[i])) * inv
                ubar[i] = 2.0 * un - u[i]
                u[i] = un
