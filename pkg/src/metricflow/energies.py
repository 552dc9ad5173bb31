"""Convex edge integrands, their conjugates, and subdifferential certificates.

Three families are supported, all even in ``s``:

* ``p``  : ``phi(s) = |s|^p / p``
* ``qp`` : ``phi(s) = |s|^q / q + |s|^p / p`` with ``1 < q < p``
* ``1p`` : ``phi(s) = |s| + |s|^p / p``

``E(v) = sum_e m(e) phi(v(e))`` on cotangent fields and ``F(u) = E(du)`` on
vertex functions.  A vector field ``X`` lies in ``dE(v)`` iff the per-edge
Fenchel-Young gap ``phi(v) + phi*(X) - v X`` vanishes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._scalar import gradient_inverse, increasing_root
from .space import Space, _as_edge_field, differential

KINDS = ("p", "qp", "1p")


class IntegrandError(ValueError):
    """Raised for invalid exponents or unparseable integrand specs."""


@dataclass(frozen=True)
class Integrand:
    """Pointwise energy density.  ``q`` is ignored for ``kind='p'``.

    ``Integrand('qp', p, q=1)`` is normalised to ``kind='1p'``.
    """

    kind: str
    p: float
    q: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise IntegrandError(f"unknown integrand kind {self.kind!r}; expected one of {KINDS}")
        p, q = float(self.p), float(self.q)
        if not (math.isfinite(p) and p > 1):
            raise IntegrandError(f"exponent p must satisfy p > 1, got p={p}")
        if self.kind == "qp":
            if not (math.isfinite(q) and 1 <= q < p):
                raise IntegrandError(f"exponents must satisfy 1 <= q < p, got q={q}, p={p}")
            if q == 1:
                object.__setattr__(self, "kind", "1p")
        if self.kind == "p":
            q = 0.0
        elif self.kind == "1p":
            q = 1.0
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @property
    def p_conj(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def q_conj(self) -> float:
        """Conjugate of the lower exponent (``inf`` for the ``1p`` family)."""
        if self.kind == "1p":
            return math.inf
        return self.q / (self.q - 1.0)

    @property
    def has_split(self) -> bool:
        return self.kind != "p"

    @property
    def code(self) -> int:
        return KINDS.index(self.kind)

    def spec(self) -> str:
        if self.kind == "p":
            return f"p:{self.p:g}"
        if self.kind == "qp":
            return f"qp:{self.q:g},{self.p:g}"
        return f"1p:{self.p:g}"

    def __str__(self) -> str:
        return self.spec()

    # pointwise maps -------------------------------------------------------

    def phi(self, s) -> np.ndarray:
        a = np.abs(np.asarray(s, dtype=np.float64))
        val = a**self.p / self.p
        if self.kind == "qp":
            val = val + a**self.q / self.q
        elif self.kind == "1p":
            val = val + a
        return val

    def gradient(self, s) -> np.ndarray:
        """Minimal-norm element of ``dphi(s)`` (0 at ``s = 0`` for every kind)."""
        s = np.asarray(s, dtype=np.float64)
        a = np.abs(s)
        g = a ** (self.p - 1)
        if self.kind == "qp":
            g = g + a ** (self.q - 1)
        elif self.kind == "1p":
            g = np.where(a > 0, g + 1.0, 0.0)
        return np.sign(s) * g

    def conjugate(self, t) -> np.ndarray:
        """Fenchel conjugate ``phi*(t) = sup_s (s t - phi(s))``; finite everywhere."""
        a = np.abs(np.asarray(t, dtype=np.float64))
        pc = self.p_conj
        if self.kind == "p":
            return a**pc / pc
        if self.kind == "1p":
            return np.maximum(a - 1.0, 0.0) ** pc / pc
        s = gradient_inverse(a, self.p, self.q)
        return np.maximum(s * a - self.phi(s), 0.0)

    def prox(self, w, lam) -> np.ndarray:
        """Proximal map ``argmin_s lam*phi(s) + (s - w)^2 / 2``."""
        w = np.asarray(w, dtype=np.float64)
        a = np.abs(w)
        if self.kind == "1p":
            a = np.maximum(a - lam, 0.0)
            r = increasing_root(a, lam, self.p)
        elif self.kind == "qp":
            r = increasing_root(a, lam, self.p, self.q)
        else:
            r = increasing_root(a, lam, self.p)
        return np.sign(w) * r

    def prox_conjugate(self, z, sigma) -> np.ndarray:
        """Proximal map of ``sigma * phi*`` via the Moreau identity."""
        z = np.asarray(z, dtype=np.float64)
        return z - sigma * self.prox(z / sigma, 1.0 / sigma)


def parse_integrand(spec: str) -> Integrand:
    """Parse ``"p:2"``, ``"qp:1.5,3"`` or ``"1p:2"``."""
    kind, sep, rest = str(spec).strip().partition(":")
    kind = kind.strip().lower()
    if not sep or kind not in KINDS:
        raise IntegrandError(f"cannot parse integrand spec {spec!r}; use p:P, qp:Q,P or 1p:P")
    try:
        nums = [float(x) for x in rest.split(",")]
    except ValueError:
        raise IntegrandError(f"non-numeric exponent in integrand spec {spec!r}") from None
    if kind == "qp":
        if len(nums) != 2:
            raise IntegrandError(f"qp spec needs two exponents q,p: {spec!r}")
        return Integrand("qp", p=nums[1], q=nums[0])
    if len(nums) != 1:
        raise IntegrandError(f"{kind} spec needs one exponent: {spec!r}")
    return Integrand(kind, p=nums[0])


# functionals ---------------------------------------------------------------


@dataclass(frozen=True)
class EnergyReport:
    value: float
    per_edge: np.ndarray


def energy(space: Space, integrand: Integrand, v) -> EnergyReport:
    """``E(v) = sum_e m(e) phi(v(e))`` with the per-edge contributions."""
    v = _as_edge_field(space, v)
    per_edge = space.m * integrand.phi(v)
    return EnergyReport(float(per_edge.sum()), per_edge)


def functional(space: Space, integrand: Integrand, u) -> EnergyReport:
    """``F(u) = E(du)``."""
    return energy(space, integrand, differential(space, u))


def conjugate_energy(space: Space, integrand: Integrand, X) -> float:
    """``E*(X) = sum_e m(e) phi*(X(e))``."""
    X = _as_edge_field(space, X)
    return float(np.dot(space.m, integrand.conjugate(X)))


def conjugate(integrand: Integrand, s_star) -> float | np.ndarray:
    out = integrand.conjugate(s_star)
    return float(out) if np.ndim(out) == 0 else out


def coercivity_check(space: Space, integrand: Integrand, v, C: float) -> bool:
    """Whether ``E(v) >= C * sum_e m |v|^p`` (up to a 1e-12 relative rounding margin)."""
    v = _as_edge_field(space, v)
    e = energy(space, integrand, v).value
    bound = C * float(np.dot(space.m, np.abs(v) ** integrand.p))
    return e >= bound - 1e-12 * max(abs(bound), abs(e))


def fenchel_gap(integrand: Integrand, v, X) -> np.ndarray:
    """Pointwise ``phi(v) + phi*(X) - v X``, clipped at zero."""
    v = np.asarray(v, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    return np.maximum(integrand.phi(v) + integrand.conjugate(X) - v * X, 0.0)


def subdifferential_residual(space: Space, integrand: Integrand, v, X) -> np.ndarray:
    """Per-edge Fenchel-Young gap; all zero iff ``X`` lies in ``dE(v)``."""
    return fenchel_gap(integrand, _as_edge_field(space, v), _as_edge_field(space, X))


def _triple_residual(v: np.ndarray, Y: np.ndarray, r: float) -> np.ndarray:
    """Residual of ``v Y = |Y|^{r'} = |v|^r``, i.e. ``Y`` in ``d(|.|^r / r)(v)``."""
    rc = r / (r - 1.0)
    target = np.abs(v) ** r
    return np.maximum(np.abs(v * Y - target), np.abs(np.abs(Y) ** rc - target))


@dataclass(frozen=True)
class SplitCertificate:
    """Decomposition ``X = X1 + X2`` with ``X1`` in the p-part and ``X2`` in the q-part.

    ``residual_p``/``residual_q`` are per-edge violations of the pointwise
    equalities; for the ``1p`` family ``residual_q`` also carries the excess
    ``|X2| - 1`` of the unit-ball constraint.
    """

    X1: np.ndarray
    X2: np.ndarray
    residual_p: np.ndarray
    residual_q: np.ndarray
    tol: float

    @property
    def max_residual(self) -> float:
        if self.residual_p.size == 0:
            return 0.0
        return float(max(self.residual_p.max(), self.residual_q.max()))

    @property
    def valid(self) -> bool:
        return self.max_residual <= self.tol

    def failing_edges(self) -> np.ndarray:
        return np.flatnonzero(np.maximum(self.residual_p, self.residual_q) > self.tol)


def split_certificate(space: Space, integrand: Integrand, v, X, tol: float = 1e-8) -> SplitCertificate:
    """Split a candidate ``X`` for ``dE(v)`` into its p- and q-parts and check both.

    ``X1 = |v|^{p-2} v`` is the unique element of the p-part; the remainder
    ``X2 = X - X1`` must satisfy ``v X2 = |X2|^{q'} = |v|^q`` or, for
    ``q = 1``, ``|X2| <= 1`` and ``v X2 = |v|``.  For the pure ``p`` family the
    whole of ``X`` is checked against the p-part and ``X2`` must vanish.
    A failed check is reported, not raised.
    """
    v = _as_edge_field(space, v)
    X = _as_edge_field(space, X)
    p = integrand.p
    X1 = np.sign(v) * np.abs(v) ** (p - 1)
    X2 = X - X1
    if integrand.kind == "p":
        res_p = _triple_residual(v, X, p)
        res_q = np.zeros_like(v)
        return SplitCertificate(X, np.zeros_like(X), res_p, res_q, tol)
    res_p = _triple_residual(v, X1, p)
    if integrand.kind == "qp":
        res_q = _triple_residual(v, X2, integrand.q)
    else:
        res_q = np.maximum(np.abs(v * X2 - np.abs(v)), np.maximum(np.abs(X2) - 1.0, 0.0))
    return SplitCertificate(X1, X2, res_p, res_q, tol)
