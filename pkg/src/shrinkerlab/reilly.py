"""Weighted Reilly-type identity on balls and shells, and the barrier inequality.

For ``Lbar f = Delta f - <X, grad f>/2 = g`` on a domain ``Omega`` in R^3
with boundary data ``u = f|dOmega`` the identity reads

    int g^2 rho = int |Hess f|^2 rho + 1/2 int |grad f|^2 rho
                  + 2 int_{dOmega} f_nu (L u) rho - int_{dOmega} h(grad u, grad u) rho
                  - int_{dOmega} f_nu^2 (<X, nu>/2 + H) rho,

where ``L`` is the drift Laplacian of the boundary and ``h(v, w) =
<D_v w, nu>`` for the outward normal ``nu`` (so a sphere of radius R seen
from inside has ``h = -|v|^2/R`` and ``H = -2/R``; the inner sphere of a
shell has the opposite signs).  All boundaries here are origin-centred
spheres, on which ``X`` is normal and ``L u`` reduces to the sphere
Laplacian.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .errors import ParameterError, PreconditionError

N_AMBIENT = 3
_EPS = np.finfo(float).eps


# -- fields ------------------------------------------------------------------


def _fd_step(X):
    # max-norm: the Euclidean norm overflows for huge coordinates
    return 1e-4 * (1.0 + np.abs(X).max(axis=-1))


@dataclass
class AmbientField:
    """Function on R^3 with gradient and Hessian.

    Evaluators take points of shape ``(N, 3)``.  Missing derivatives are
    taken by 4th-order central differences with step ``1e-4 (1 + max_i |x_i|)``.
    """

    f: object
    grad: object = None
    hess: object = None
    name: str = "field"

    def value(self, X):
        return np.asarray(self.f(np.atleast_2d(X)), float)

    def gradient(self, X):
        X = np.atleast_2d(np.asarray(X, float))
        if self.grad is not None:
            return np.asarray(self.grad(X), float)
        return fd_gradient(self.f, X)

    def hessian(self, X):
        X = np.atleast_2d(np.asarray(X, float))
        if self.hess is not None:
            return np.asarray(self.hess(X), float)
        return fd_hessian(self.f, X)

    def numerical(self):
        return AmbientField(self.f, None, None, self.name + "(fd)")


def _check_step(X, h):
    if not np.all(np.isfinite(X)):
        raise ParameterError("field evaluated at a non-finite point")
    if np.any((X + h[:, None]) - X == 0.0) or np.any(h <= 4 * _EPS * np.abs(X).max(axis=1)):
        raise ParameterError("finite-difference step underflows at this |X|")


def fd_gradient(f, X):
    h = _fd_step(X)
    _check_step(X, h)
    G = np.empty_like(X)
    for i in range(N_AMBIENT):
        e = np.zeros(N_AMBIENT)
        e[i] = 1.0
        d = h[:, None] * e
        G[:, i] = (-f(X + 2 * d) + 8 * f(X + d) - 8 * f(X - d) + f(X - 2 * d)) / (12 * h)
    return G


def fd_hessian(f, X):
    h = _fd_step(X)
    _check_step(X, h)
    Hs = np.empty((len(X), N_AMBIENT, N_AMBIENT))
    f0 = f(X)
    E = np.eye(N_AMBIENT)
    for i in range(N_AMBIENT):
        di = h[:, None] * E[i]
        Hs[:, i, i] = (-f(X + 2 * di) + 16 * f(X + di) - 30 * f0 + 16 * f(X - di) - f(X - 2 * di)) / (12 * h * h)
        for j in range(i + 1, N_AMBIENT):
            dj = h[:, None] * E[j]
            s = 0.0
            for a, ca in ((1, 8.0), (-1, -8.0), (2, -1.0), (-2, 1.0)):
                for b, cb in ((1, 8.0), (-1, -8.0), (2, -1.0), (-2, 1.0)):
                    s = s + ca * cb * f(X + a * di + b * dj)
            Hs[:, i, j] = Hs[:, j, i] = s / (144 * h * h)
    return Hs


MONOMIALS = [e for d in range(4) for e in sorted(
    (e for e in itertools.product(range(4), repeat=3) if sum(e) == d), reverse=True)]


def polynomial_field(coeffs, name=None) -> AmbientField:
    """Polynomial of degree <= 3 with exact derivatives.

    ``coeffs[k]`` multiplies ``x^a y^b z^c`` for ``(a, b, c) = MONOMIALS[k]``:
    the constant, then ``x, y, z``, then the six quadratics, then the ten
    cubics, each block in descending lexicographic order.  Missing trailing
    coefficients are zero.
    """
    c = np.zeros(len(MONOMIALS))
    coeffs = np.asarray(coeffs, float).ravel()
    if len(coeffs) > len(MONOMIALS):
        raise ParameterError(f"at most {len(MONOMIALS)} coefficients for a cubic in 3 variables")
    c[: len(coeffs)] = coeffs
    if not np.all(np.isfinite(c)):
        raise ParameterError("polynomial coefficients must be finite")
    E = np.array(MONOMIALS)
    nz = np.flatnonzero(c)
    E, c = E[nz], c[nz]

    def mono(X, exps, scale):
        out = np.zeros(len(X))
        for ek, sk in zip(exps, scale):
            if sk == 0 or np.any(ek < 0):
                continue
            out += sk * np.prod(X ** ek, axis=1)
        return out

    def f(X):
        return mono(np.atleast_2d(X), E, c)

    def grad(X):
        X = np.atleast_2d(X)
        G = np.empty((len(X), 3))
        for i in range(3):
            Ei = E.copy()
            Ei[:, i] -= 1
            G[:, i] = mono(X, Ei, c * E[:, i])
        return G

    def hess(X):
        X = np.atleast_2d(X)
        Hs = np.empty((len(X), 3, 3))
        for i in range(3):
            for j in range(i, 3):
                Eij = E.copy()
                Eij[:, i] -= 1
                Eij[:, j] -= 1
                s = c * E[:, i] * (E[:, j] - (1 if i == j else 0))
                Hs[:, i, j] = Hs[:, j, i] = mono(X, Eij, s)
        return Hs

    return AmbientField(f, grad, hess, name or "poly")


def _coef(**terms):
    c = np.zeros(len(MONOMIALS))
    for k, v in terms.items():
        c[MONOMIALS.index(tuple(int(ch) for ch in k[1:]))] = v
    return c


FIELD_MENU = {
    "const": _coef(e000=1.0),
    "x1": _coef(e100=1.0),
    "x2": _coef(e010=1.0),
    "x3": _coef(e001=1.0),
    "xixj": _coef(e110=1.0),
    "r2": _coef(e200=1.0, e020=1.0, e002=1.0),
}


def make_field(spec) -> AmbientField:
    """``x1 | x2 | x3 | xixj | r2 | const | poly:c0,c1,...``."""
    spec = str(spec).strip()
    if spec in FIELD_MENU:
        return polynomial_field(FIELD_MENU[spec], spec)
    if spec.startswith("poly:"):
        try:
            coeffs = [float(x) for x in spec[5:].replace(";", ",").split(",") if x.strip()]
        except ValueError as exc:
            raise ParameterError(f"bad polynomial coefficients in {spec!r}") from exc
        return polynomial_field(coeffs, spec)
    raise ParameterError(f"unknown field {spec!r}; expected one of {sorted(FIELD_MENU)} or poly:c0,c1,...")


def finite_difference_check(field: AmbientField, n_points=100, radius=2.0, seed=0x5EED):
    """Max relative gap between closed-form and finite-difference derivatives."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-radius, radius, size=(n_points, 3))
    g, gn = field.gradient(X), fd_gradient(field.f, X)
    H, Hn = field.hessian(X), fd_hessian(field.f, X)
    sg = max(np.abs(g).max(), 1.0)
    sh = max(np.abs(H).max(), 1.0)
    return {"gradient": float(np.abs(g - gn).max() / sg), "hessian": float(np.abs(H - Hn).max() / sh)}


def ambient_drift(field: AmbientField, X):
    """``Lbar f = tr Hess f - <X, grad f> / 2`` at points ``X``."""
    X = np.atleast_2d(np.asarray(X, float))
    return np.trace(field.hessian(X), axis1=1, axis2=2) - 0.5 * np.einsum("ij,ij->i", X, field.gradient(X))


# -- domains and quadrature --------------------------------------------------


@dataclass(frozen=True)
class Domain:
    """Origin-centred ball (``inner == 0``) or shell ``inner < |X| < outer``."""

    outer: float
    inner: float = 0.0

    @property
    def kind(self):
        return "ball" if self.inner == 0 else "shell"

    def spheres(self):
        """``(radius, orientation)``; orientation +1 when nu points away from the origin."""
        out = [(self.outer, 1.0)]
        if self.inner > 0:
            out.append((self.inner, -1.0))
        return out

    def to_dict(self):
        return {"kind": self.kind, "outer": self.outer, "inner": self.inner}


def parse_domain(spec) -> Domain:
    """``ball:R``, ``shell:R1:R2`` or ``sphere[:r]`` (the ball bounded by a catalog sphere)."""
    parts = str(spec).strip().split(":")
    try:
        vals = [float(p) for p in parts[1:]]
    except ValueError as exc:
        raise ParameterError(f"bad domain {spec!r}") from exc
    kind = parts[0]
    if kind == "ball" and len(vals) == 1:
        d = Domain(vals[0])
    elif kind == "shell" and len(vals) == 2:
        d = Domain(vals[1], vals[0])
    elif kind == "sphere" and len(vals) <= 1:
        d = Domain(vals[0] if vals else 2.0)
    else:
        raise ParameterError(f"bad domain {spec!r}; expected ball:R, shell:R1:R2 or sphere[:r]")
    if not (d.outer > d.inner >= 0 and math.isfinite(d.outer)):
        raise ParameterError(f"domain radii must satisfy 0 <= R1 < R2, got {spec!r}")
    return d


def angular_grid(level):
    """Gauss-Legendre in ``cos(theta)`` times a uniform ``phi`` grid on S^2.

    ``level`` points in ``cos(theta)`` and ``2 level`` in ``phi``: exact for
    spherical polynomials of degree ``< 2 level``.  Returns unit directions
    and weights summing to ``4 pi``.
    """
    mu, wmu = np.polynomial.legendre.leggauss(level)
    nphi = 2 * level
    phi = 2 * np.pi * (np.arange(nphi) + 0.5) / nphi
    s = np.sqrt(1 - mu**2)
    D = np.stack(
        [np.outer(s, np.cos(phi)).ravel(), np.outer(s, np.sin(phi)).ravel(), np.repeat(mu, nphi)], 1
    )
    W = np.repeat(wmu, nphi) * (2 * np.pi / nphi)
    return D, W


def radial_grid(a, b, n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def _rho(X):
    return np.exp(-np.einsum("ij,ij->i", X, X) / 4.0)


TERMS = ("lhs", "hessian", "gradient_half", "boundary_fnu_Lu", "boundary_h", "boundary_shrinker")


def reilly_terms(domain: Domain, field: AmbientField, level):
    """The six integrals at a single quadrature level."""
    level = int(level)
    if level < 1:
        raise ParameterError("quadrature level must be >= 1")
    D, W = angular_grid(level + 1)
    r, wr = radial_grid(domain.inner, domain.outer, level + 1)
    X = (r[:, None, None] * D[None]).reshape(-1, 3)
    w = (wr[:, None] * r[:, None] ** 2 * W[None]).ravel()
    rho = _rho(X)
    G = field.gradient(X)
    Hs = field.hessian(X)
    g = np.trace(Hs, axis1=1, axis2=2) - 0.5 * np.einsum("ij,ij->i", X, G)
    vals = {
        "lhs": np.sum(w * g * g * rho),
        "hessian": np.sum(w * np.einsum("ijk,ijk->i", Hs, Hs) * rho),
        "gradient_half": 0.5 * np.sum(w * np.einsum("ij,ij->i", G, G) * rho),
        "boundary_fnu_Lu": 0.0,
        "boundary_h": 0.0,
        "boundary_shrinker": 0.0,
    }
    for R, orient in domain.spheres():
        Y = R * D
        wb = W * R * R * _rho(Y)
        Gb = field.gradient(Y)
        Hb = field.hessian(Y)
        fr = np.einsum("ij,ij->i", Gb, D)  # radial derivative
        frr = np.einsum("ij,ijk,ik->i", D, Hb, D)
        lap = np.trace(Hb, axis1=1, axis2=2)
        Lu = lap - frr - (N_AMBIENT - 1) / R * fr  # sphere Laplacian; X is normal so no drift
        fnu = orient * fr
        tang = Gb - fr[:, None] * D
        kappa = -orient / R  # h(v, v) = kappa |v|^2
        Hm = (N_AMBIENT - 1) * kappa
        x_nu = orient * R
        vals["boundary_fnu_Lu"] += 2.0 * np.sum(wb * fnu * Lu)
        vals["boundary_h"] += np.sum(wb * kappa * np.einsum("ij,ij->i", tang, tang))
        vals["boundary_shrinker"] += np.sum(wb * fnu * fnu * (0.5 * x_nu + Hm))
    if not all(math.isfinite(v) for v in vals.values()):
        raise ParameterError(f"field {field.name} is not finite on the domain")
    return {k: float(v) for k, v in vals.items()}


def _residual(t):
    rhs = t["hessian"] + t["gradient_half"] + t["boundary_fnu_Lu"] - t["boundary_h"] - t["boundary_shrinker"]
    return t["lhs"] - rhs


@dataclass
class ReillyReport:
    lhs: float
    hessian: float
    gradient_half: float
    boundary_fnu_Lu: float
    boundary_h: float
    boundary_shrinker: float
    residual: float
    error_bar: float
    level: int
    domain: Domain
    field_name: str
    quadrature: dict = field(default_factory=dict)

    @property
    def ok(self):
        return abs(self.residual) <= 10 * self.error_bar

    def to_dict(self):
        d = {k: getattr(self, k) for k in TERMS}
        d.update(
            anchor="weighted Reilly identity for Lbar = Delta - <X, grad>/2",
            residual=self.residual,
            error_bar=self.error_bar,
            level=self.level,
            domain=self.domain.to_dict(),
            field=self.field_name,
            quadrature=self.quadrature,
        )
        return d


def reilly_residual(domain, field, level=6) -> ReillyReport:
    """Evaluate every term at ``level`` and ``level + 1``.

    ``error_bar = max(|res(level) - res(level + 1)|, 64 eps sum |terms|)``.
    """
    if isinstance(domain, str):
        domain = parse_domain(domain)
    if isinstance(field, str):
        field = make_field(field)
    t = reilly_terms(domain, field, level)
    t2 = reilly_terms(domain, field, level + 1)
    res, res2 = _residual(t), _residual(t2)
    floor = 64 * _EPS * sum(abs(v) for v in t.values())
    n_ang = (level + 1) * 2 * (level + 1)
    quad = {
        "radial_points": level + 1,
        "angular_points": n_ang,
        "volume_points": (level + 1) * n_ang,
        "rule": "Gauss-Legendre radial x Gauss-Legendre cos(theta) x uniform phi",
    }
    return ReillyReport(**t, residual=res, error_bar=max(abs(res - res2), floor), level=int(level),
                        domain=domain, field_name=field.name, quadrature=quad)


# -- barrier -----------------------------------------------------------------


@dataclass(frozen=True)
class BarrierSpec:
    """Barriers ``w(d) = +-3 u0 (1 - exp(-(d^2 - R^2)/2))``, ``d = |X - Y0|``.

    ``Y0 = 2 X0`` for a touching point ``X0`` with ``|X0| = R``, so the
    balls ``B_R(0)`` and ``B_R(Y0)`` meet only at ``X0``.
    """

    R: float
    u0: float = 1.0
    direction: tuple = (1.0, 0.0, 0.0)
    n: int = 2

    @property
    def touch_point(self):
        e = np.asarray(self.direction, float)
        return self.R * e / np.linalg.norm(e)

    @property
    def center(self):
        return 2.0 * self.touch_point

    def w_plus(self, X):
        d2 = np.sum((np.atleast_2d(X) - self.center) ** 2, axis=1)
        return 3 * self.u0 * (1 - np.exp(-(d2 - self.R**2) / 2))

    def drift_w_plus(self, X):
        """Closed form ``3 u0 exp(-(d^2-R^2)/2) (1 - d^2 + n - <X, Y>/2)``, ``Y = X - Y0``."""
        X = np.atleast_2d(np.asarray(X, float))
        Y = X - self.center
        d2 = np.einsum("ij,ij->i", Y, Y)
        return 3 * self.u0 * np.exp(-(d2 - self.R**2) / 2) * (1 - d2 + self.n - 0.5 * np.einsum("ij,ij->i", X, Y))

    def field(self):
        return AmbientField(lambda X: self.w_plus(X), name="w_plus")


def barrier_threshold(n=2, diameter=0.0):
    return math.sqrt(2 * (n + 1)) + diameter


def barrier_grid(spec: BarrierSpec, n_points=10_000, seed=0x5EED):
    """Scrambled-Sobol points of ``B_sqrt(R^2+1)(Y0) ∩ B_R(0)``, plus ``X0``."""
    R = spec.R
    outer = math.sqrt(R * R + 1)
    Y0 = spec.center
    # bounding box of the lens
    lo = np.maximum(Y0 - outer, -R)
    hi = np.minimum(Y0 + outer, R)
    sampler = qmc.Sobol(3, scramble=True, seed=seed)
    pts = [spec.touch_point[None]]
    got = 1
    while got < n_points:
        P = qmc.scale(sampler.random(4096), lo, hi)
        ok = (np.linalg.norm(P, axis=1) <= R) & (np.linalg.norm(P - Y0, axis=1) <= outer)
        pts.append(P[ok])
        got += int(ok.sum())
    return np.concatenate(pts)[:n_points]


def barrier_verify(spec: BarrierSpec, sample_grid=None, diameter=0.0, n_points=10_000, seed=0x5EED, fd_points=200):
    """Check ``Lbar w+ <= 0`` (equivalently ``-Lbar w- <= 0``) on a grid.

    Raises :class:`PreconditionError` when ``R < sqrt(2(n+1)) + diameter``.
    Values within ``16 eps * 3 u0`` of zero count as non-positive (at the
    touching point with ``R = sqrt(6)`` the exact value is 0).
    """
    thr = barrier_threshold(spec.n, diameter)
    if spec.R < thr:
        raise PreconditionError(f"R = {spec.R:.6g} is below the threshold sqrt(2(n+1)) + D = {thr:.6g}")
    X = barrier_grid(spec, n_points, seed) if sample_grid is None else np.atleast_2d(np.asarray(sample_grid, float))
    vals = spec.drift_w_plus(X)
    tol = 16 * _EPS * 3 * spec.u0
    k = int(np.argmax(vals))
    fd = ambient_drift(spec.field(), X[:fd_points])
    at_touch = float(spec.drift_w_plus(spec.touch_point)[0])
    dd = np.linspace(spec.R, math.sqrt(spec.R**2 + 1), 64)
    wd = 3 * spec.u0 * (1 - np.exp(-(dd**2 - spec.R**2) / 2))
    return {
        "anchor": "barrier w+ = 3 u0 (1 - exp(-(d^2 - R^2)/2)) satisfies Lbar w+ <= 0",
        "R": spec.R,
        "u0": spec.u0,
        "n": spec.n,
        "threshold": thr,
        "n_points": len(X),
        "max_value": float(vals[k]),
        "argmax": X[k],
        "margin": float(-vals[k]),
        "value_at_touch_point": at_touch,
        "w_plus_at_R": float(wd[0]),
        "w_plus_increasing": bool(np.all(np.diff(wd) > 0)),
        "fd_cross_check": float(np.abs(fd - vals[:fd_points]).max() / (3 * spec.u0)),
        "tol": tol,
        "bound_satisfied": bool(vals.max() <= tol),
    }
