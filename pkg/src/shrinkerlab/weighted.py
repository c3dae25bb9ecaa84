"""Gaussian-weighted surface integrals and the statements built on them.

Quadrature
----------
Integrals ``int g rho_t dA`` use the vertex-lumped rule (value at the
vertex times its mixed Voronoi share of the triangle).  A triangle whose
weight ``rho_t`` varies by more than ``adapt_tol`` across its corners is
integrated with the 3-point edge-midpoint rule instead.  Restriction to
``D_r = M ∩ B_r`` subdivides triangles that straddle the sphere ``|X| = r``
(1 -> 4 splits, depth <= 8) until their radial spread is below
``radial_tol``; leaves are kept or dropped by their centroid.

Per-triangle contributions are reduced with ``numpy.sum`` in face order
(pairwise summation), so results are bit-reproducible.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfc

from .errors import ParameterError
from .mesh import curvature_tensors, mean_curvature_vectors, validate
from .spectrum import assemble

N_DIM = 2
ANNULUS_EPS = 0.5


class ConditioningWarning(UserWarning):
    pass


class ResolutionWarning(UserWarning):
    pass


@dataclass
class WeightContext:
    """``rho_t = exp(-|X|^2 / 4t)`` at the vertices and ``(4 pi t)^{-n/2}``."""

    t: float
    rho: np.ndarray = field(repr=False)
    normalization: float

    @classmethod
    def from_mesh(cls, mesh, t=1.0):
        t = _check_t(t)
        X = mesh.vertices
        return cls(t, np.exp(-np.einsum("ij,ij->i", X, X) / (4.0 * t)), (4.0 * math.pi * t) ** (-N_DIM / 2))


def _check_t(t):
    t = float(t)
    if not (t > 0 and math.isfinite(t)):
        raise ParameterError(f"scale t must be positive and finite, got {t}")
    return t


def _weight(X, t):
    if t is None:
        return np.ones(X.shape[:-1])
    return np.exp(-np.einsum("...i,...i->...", X, X) / (4.0 * t))


def _eval(g, X):
    if g is None:
        return np.ones(X.shape[:-1])
    return np.asarray(g(X), float)


def _midpoint_rule(P, g, t):
    """3-point edge-midpoint rule on triangles ``P`` of shape (k, 3, 3)."""
    area = 0.5 * np.linalg.norm(np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]), axis=1)
    mids = 0.5 * (P + P[:, [1, 2, 0]])
    vals = _eval(g, mids) * _weight(mids, t)
    return area * vals.mean(axis=1)


def _clip_integrals(P, g, t, r, max_depth, radial_tol):
    """Integral over each triangle of ``P`` restricted to ``|X| <= r``."""
    out = np.zeros(len(P))
    owner = np.arange(len(P))
    for depth in range(max_depth + 1):
        if not len(P):
            break
        norms = np.linalg.norm(P, axis=2)
        c = P.mean(axis=1)
        cn = np.linalg.norm(c, axis=1)
        spread = np.linalg.norm(P - c[:, None], axis=2).max(axis=1)
        inside = norms.max(axis=1) <= r
        outside = cn - spread > r
        leaf = ~inside & ~outside & ((depth == max_depth) | (norms.max(axis=1) - norms.min(axis=1) < radial_tol))
        keep = inside | (leaf & (cn <= r))
        if keep.any():
            np.add.at(out, owner[keep], _midpoint_rule(P[keep], g, t))
        split = ~inside & ~outside & ~leaf
        P, owner = P[split], owner[split]
        if not len(P):
            break
        m01, m12, m20 = 0.5 * (P[:, 0] + P[:, 1]), 0.5 * (P[:, 1] + P[:, 2]), 0.5 * (P[:, 2] + P[:, 0])
        P = np.concatenate(
            [
                np.stack([P[:, 0], m01, m20], 1),
                np.stack([m01, P[:, 1], m12], 1),
                np.stack([m20, m12, P[:, 2]], 1),
                np.stack([m01, m12, m20], 1),
            ]
        )
        owner = np.tile(owner, 4)
    return out


def triangle_integrals(mesh, g=None, t=1.0, clip_radius=None, adapt_tol=0.01, max_depth=8, radial_tol=1e-3):
    """Per-triangle contributions to ``int g rho_t dA`` (``t=None``: no weight).

    ``g`` maps an array of points ``(..., 3)`` to values ``(...)``.
    """
    V, F = mesh.vertices, mesh.faces
    wv = _weight(V, t)[F]
    hv = _eval(g, V)[F] * wv
    out = np.einsum("ij,ij->i", mesh.corner_areas, hv)
    wmax = wv.max(axis=1)
    upgrade = (wmax - wv.min(axis=1)) > adapt_tol * wmax
    P = V[F]
    if clip_radius is not None:
        r = float(clip_radius)
        norms = np.linalg.norm(P, axis=2)
        c = P.mean(axis=1)
        spread = np.linalg.norm(P - c[:, None], axis=2).max(axis=1)
        inside = norms.max(axis=1) <= r
        outside = np.linalg.norm(c, axis=1) - spread > r
        straddle = ~inside & ~outside
        out[outside] = 0.0
        upgrade &= inside
        if straddle.any():
            out[straddle] = _clip_integrals(P[straddle], g, t, r, max_depth, radial_tol)
    if upgrade.any():
        out[upgrade] = _midpoint_rule(P[upgrade], g, t)
    return out


def weighted_integral(mesh, g=None, t=1.0, clip_radius=None, **kw):
    """``int_{D_r} g rho_t dA``; see :func:`triangle_integrals`."""
    return float(np.sum(triangle_integrals(mesh, g, t, clip_radius, **kw)))


def truncation_tail(mesh, t=1.0, g=None):
    """Estimated ``int g rho_t`` beyond the boundary of a truncated surface.

    Each boundary edge is continued straight along its outward conormal
    ``c`` to infinity, which is exact for cylindrical and planar ends:
    ``int_0^inf rho_t(X + s c) ds = exp(-(|X|^2 - p^2)/4t) sqrt(pi t) erfc(p / 2 sqrt t)``
    with ``p = <X, c>``.  With ``g`` given, ``g`` is frozen at the edge midpoint.
    """
    t = _check_t(t)
    be = mesh.boundary_edges
    if not len(be):
        return 0.0
    V, F = mesh.vertices, mesh.faces
    # face and opposite vertex of every boundary edge
    he = np.stack([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]], 1).reshape(-1, 2)
    opp = F[:, [2, 0, 1]].reshape(-1)
    key = {tuple(sorted(e)): k for k, e in enumerate(he.tolist())}
    idx = np.array([key[tuple(sorted(e))] for e in np.asarray(be).tolist()])
    a, b, o = V[he[idx, 0]], V[he[idx, 1]], V[opp[idx]]
    e = b - a
    ln = np.linalg.norm(e, axis=1)
    eh = e / ln[:, None]
    w = a - o
    c = w - np.einsum("ij,ij->i", w, eh)[:, None] * eh
    c /= np.linalg.norm(c, axis=1, keepdims=True)
    X = 0.5 * (a + b)
    p = np.einsum("ij,ij->i", X, c)
    perp2 = np.einsum("ij,ij->i", X, X) - p * p
    line = np.exp(-perp2 / (4 * t)) * math.sqrt(math.pi * t) * erfc(p / (2 * math.sqrt(t)))
    return float(np.sum(ln * line * _eval(g, X)))


F_ANCHOR = "F_t(M) = (4 pi t)^{-n/2} int_M exp(-|X|^2/4t)"


def f_functional(mesh, t=1.0, clip_radius=None, **kw):
    """``F_t(D_r) = (4 pi t)^{-1} int_{D_r} rho_t dA`` (raw, no tail correction)."""
    t = _check_t(t)
    if clip_radius is not None and not clip_radius > 0:
        raise ParameterError("clip_radius must be positive")
    return weighted_integral(mesh, None, t, clip_radius, **kw) / (4.0 * math.pi * t)


def f_functional_report(mesh, t=1.0, clip_radius=None):
    raw = f_functional(mesh, t, clip_radius)
    tail = 0.0 if clip_radius is not None else truncation_tail(mesh, t) / (4.0 * math.pi * t)
    return {"anchor": F_ANCHOR, "t": t, "clip_radius": clip_radius, "F_t_raw": raw, "tail": tail, "F_t": raw + tail}


def _dF_dt(mesh, t, r):
    # exact t-derivative of the discrete quadrature (the rule choice depends only on rho_t)
    def g(X):
        return -1.0 + np.einsum("...i,...i->...", X, X) / (4.0 * t)

    return weighted_integral(mesh, g, t, r) / (4.0 * math.pi * t * t)


MONOTONE_ANCHOR = "d/dt F_t(D_r) <= 0 for t >= 1, hence F_t(M) <= F_1(M)"


def ft_monotonicity_scan(mesh, r=None, t_grid=None, tol=1e-6):
    """Sample ``F_t(D_r)`` and ``dF_t/dt`` on a grid of scales.

    The derivative samples are the exact derivative of the discrete
    quadrature in ``t``; central differences of the sampled values are
    reported alongside as a cross-check.  A sample with ``t >= 1`` passes
    when it is at most ``tol * F_1``.
    """
    t_grid = np.asarray(t_grid if t_grid is not None else np.linspace(0.1, 5.0, 50), float)
    if t_grid.ndim != 1 or len(t_grid) < 2 or np.any(t_grid <= 0) or np.any(np.diff(t_grid) <= 0):
        raise ParameterError("t_grid must be strictly increasing and positive with at least 2 points")
    if r is not None and not r > 0:
        raise ParameterError("r must be positive")
    if np.min(np.diff(t_grid)) < 1e-6:
        warnings.warn("t-grid spacing below 1e-6; central differences are ill-conditioned", ConditioningWarning)
    F = np.array([f_functional(mesh, t, r) for t in t_grid])
    dF = np.array([_dF_dt(mesh, t, r) for t in t_grid])
    central = np.gradient(F, t_grid)
    F1 = f_functional(mesh, 1.0, r)
    late = t_grid >= 1.0
    deriv_ok = bool(np.all(dF[late] <= tol * F1))
    bound_ok = bool(np.all(F <= F1 * (1 + tol)))
    # argmax: root of the exact derivative if it changes sign on the grid
    k = int(np.argmax(F))
    t_star = float(t_grid[k])
    sign = np.sign(dF)
    for i in range(len(t_grid) - 1):
        if sign[i] > 0 and sign[i + 1] <= 0:
            t_star = brentq(lambda s: _dF_dt(mesh, s, r), t_grid[i], t_grid[i + 1], xtol=1e-12)
            break
    return {
        "anchor": MONOTONE_ANCHOR,
        "t": t_grid,
        "F_t": F,
        "dF_dt": dF,
        "dF_dt_central": central,
        "F_1": F1,
        "t_argmax": t_star,
        "F_max": f_functional(mesh, t_star, r),
        "max_dF_dt_t_ge_1": float(dF[late].max()) if late.any() else None,
        "derivative_ok": deriv_ok,
        "bounded_by_F1": bound_ok,
        "bound_satisfied": deriv_ok and bound_ok,
        "tol": tol,
    }


# -- pointwise identities ----------------------------------------------------


def _norms(values, inner, w):
    v = np.abs(values)
    sup = float(v[inner].max()) if inner.any() else 0.0
    l2 = float(np.sqrt(np.sum((v**2 * w)[inner])))
    return {"sup": sup, "l2": l2}


IDENTITY_ANCHORS = {
    "res_Lx": "L x_i = -x_i / 2",
    "res_LX2": "L |X|^2 = 2n - |X|^2",
    "res_DX2": "Delta |X|^2 = 2n - 4 |H|^2",
    "res_mean": "int |X|^2 rho = 2n int rho",
}


def identity_residuals(mesh, ops=None):
    """Residuals of the shrinker identities; boundary vertices are excluded."""
    ops = ops or assemble(mesh)
    X = mesh.vertices
    x2 = np.einsum("ij,ij->i", X, X)
    inner = ~np.asarray(mesh.boundary_vertices)
    w = ops.mass
    Lx = ops.apply_drift(X) + 0.5 * X
    lx = np.linalg.norm(Lx, axis=1)
    LX2 = ops.apply_drift(x2) - (2 * N_DIM - x2)
    H = mean_curvature_vectors(mesh)
    DX2 = -(mesh.laplacian_stiffness @ x2) / mesh.vertex_areas - (2 * N_DIM - 4 * np.einsum("ij,ij->i", H, H))
    i_rho = weighted_integral(mesh)
    i_x2 = weighted_integral(mesh, lambda P: np.einsum("...i,...i->...", P, P))
    tail_rho = truncation_tail(mesh)
    tail_x2 = truncation_tail(mesh, g=lambda P: np.einsum("...i,...i->...", P, P))
    ratio = i_x2 / i_rho
    ratio_c = (i_x2 + tail_x2) / (i_rho + tail_rho)
    return {
        "anchors": IDENTITY_ANCHORS,
        "res_Lx": _norms(lx, inner, w),
        "res_LX2": _norms(LX2, inner, w),
        "res_DX2": _norms(DX2, inner, w),
        "res_mean": abs(i_x2 - 2 * N_DIM * i_rho) / i_rho,
        "res_mean_relative": abs(ratio - 2 * N_DIM) / (2 * N_DIM),
        "res_mean_tail_corrected": abs(ratio_c - 2 * N_DIM),
        "ratio_X2_rho": ratio,
        "ratio_X2_rho_tail_corrected": ratio_c,
        "n_boundary_excluded": int((~inner).sum()),
    }


# -- volume growth -----------------------------------------------------------


@dataclass
class GrowthProfile:
    radii: np.ndarray
    areas: np.ndarray
    growth_constant: float
    n: int = N_DIM
    annulus_mass: float = float("nan")
    annulus: tuple = ()

    @property
    def bound(self):
        return self.growth_constant * self.radii**self.n

    def to_dict(self):
        return {
            "anchor": "Area(M ∩ B_r) <= C r^n",
            "r": self.radii,
            "area": self.areas,
            "growth_constant": self.growth_constant,
            "n": self.n,
            "annulus": list(self.annulus),
            "annulus_mass": self.annulus_mass,
            "monotone": bool(np.all(np.diff(self.areas) >= -1e-12 * max(self.areas.max(), 1.0))),
        }

    def csv_rows(self):
        return list(zip(self.radii.tolist(), self.areas.tolist(), self.bound.tolist()))


def growth_profile(mesh, radii, eps=ANNULUS_EPS) -> GrowthProfile:
    """Clipped areas ``f(r) = Area(D_r)`` and ``sup f(r) / r^n``.

    Also returns the weighted mass of ``M`` in the annulus
    ``sqrt(2n) - eps < |X| < sqrt(2n) + eps``.
    """
    radii = np.asarray(radii, float)
    if radii.ndim != 1 or not len(radii) or np.any(radii <= 0) or np.any(np.diff(radii) <= 0):
        raise ParameterError("radii must be positive and strictly increasing")
    h = float(np.mean(np.linalg.norm(mesh.vertices[mesh.edges[:, 0]] - mesh.vertices[mesh.edges[:, 1]], axis=1)))
    if radii[0] < h:
        warnings.warn(f"smallest radius {radii[0]:.3g} is below the mean edge length {h:.3g}", ResolutionWarning)
    areas = np.array([weighted_integral(mesh, None, None, r) for r in radii])
    C = float(np.max(areas / radii**N_DIM))
    r0 = math.sqrt(2 * N_DIM)
    lo, hi = r0 - eps, r0 + eps
    ann = weighted_integral(mesh, None, 1.0, hi) - weighted_integral(mesh, None, 1.0, lo)
    return GrowthProfile(radii, areas, C, N_DIM, ann, (lo, hi))


@dataclass
class GrowthLemmaCertificate:
    n: int
    C1: float
    C2: float
    C3: float
    radii: np.ndarray
    values: np.ndarray
    hypothesis_ok: bool
    conclusion_ok: bool
    failures: list = field(default_factory=list)

    def to_dict(self):
        return {
            "anchor": "f(r) <= C1 r^n f(r/2) for r >= C2 implies f(r) <= C3 exp(2n (log r)^2)",
            "n": self.n,
            "C1": self.C1,
            "C2": self.C2,
            "C3": self.C3,
            "hypothesis_ok": self.hypothesis_ok,
            "conclusion_ok": self.conclusion_ok,
            "failures": self.failures,
            "n_samples": len(self.radii),
        }


def growth_lemma_constant(n, C1, C2, f_at_C2):
    """``C3`` from iterating the doubling hypothesis down to ``[C2/2, C2)``.

    With ``l = log r``, ``c = log C2`` and ``a = max(log C1, 0)``, the
    iteration gives ``log f(r) <= log f(C2) + ((l - c)/log 2 + 1)(a + n l)``;
    subtracting ``2 n l^2`` leaves a concave quadratic in ``l`` whose
    maximum over ``l >= c`` is ``log C3 - log f(C2)``.
    """
    if f_at_C2 <= 0:
        return 1.0
    L2 = math.log(2.0)
    c = math.log(C2)
    a = max(math.log(C1), 0.0)
    alpha = (1.0 / L2 - 2.0) * n
    beta = a / L2 + n * (1.0 - c / L2)
    gamma = a * (1.0 - c / L2)
    ell = max(c, -beta / (2.0 * alpha))
    return math.exp(math.log(f_at_C2) + alpha * ell * ell + beta * ell + gamma)


def growth_lemma_check(radii, values, n=N_DIM, C1=1.0, C2=2.0, rtol=1e-12) -> GrowthLemmaCertificate:
    """Check the doubling hypothesis on the samples and, if it holds, the conclusion.

    For every sampled ``r >= C2`` the value at ``r/2`` is taken from the
    samples when present; otherwise monotonicity bounds it below by the
    largest sample at or under ``r/2`` (a conservative test).
    """
    r = np.asarray(radii, float)
    f = np.asarray(values, float)
    if r.shape != f.shape or r.ndim != 1:
        raise ParameterError("radii and values must be 1-D arrays of equal length")
    if not C2 > 1:
        raise ParameterError("C2 must exceed 1")
    if not C1 > 0:
        raise ParameterError("C1 must be positive")
    order = np.argsort(r)
    r, f = r[order], f[order]
    failures = []
    hyp = True
    if np.any(f < 0):
        hyp = False
        failures.append("negative sample")
    if np.any(np.diff(f) < 0):
        hyp = False
        failures.append("samples not monotone non-decreasing")
    for rk, fk in zip(r, f):
        if rk < C2:
            continue
        half = rk / 2.0
        j = np.flatnonzero(np.isclose(r, half, rtol=rtol, atol=0.0))
        if len(j):
            f_half = f[j[0]]
        else:
            below = np.flatnonzero(r <= half)
            f_half = f[below[-1]] if len(below) else 0.0
        if fk > C1 * rk**n * f_half * (1 + rtol):
            hyp = False
            failures.append(f"hypothesis fails at r={rk:.6g}: f(r)={fk:.6g} > C1 r^n f(r/2)={C1 * rk**n * f_half:.6g}")
    at = np.flatnonzero(r >= C2)
    f_C2 = float(f[at[0]]) if len(at) else 0.0
    C3 = growth_lemma_constant(n, C1, C2, f_C2)
    concl = True
    for rk, fk in zip(r[at], f[at]):
        b = C3 * math.exp(2 * n * math.log(rk) ** 2)
        if fk > b * (1 + rtol):
            concl = False
            failures.append(f"conclusion fails at r={rk:.6g}: f(r)={fk:.6g} > {b:.6g}")
    return GrowthLemmaCertificate(n, float(C1), float(C2), C3, r, f, hyp, concl, failures)


# -- inequalities and budgets ------------------------------------------------

LOG_SOBOLEV_ANCHOR = "int |X|^2 f^2 rho <= 16 int |grad f|^2 rho + 4n int f^2 rho"


def log_sobolev_check(mesh, functions, ops=None, rel_tol=0.05):
    """Slack ``16 f^T S f + 4n f^T M f - sum |X|^2 f^2 M`` per column.

    Passes when the slack is at least ``-rel_tol`` times the right side.
    """
    ops = ops or assemble(mesh)
    Fm = np.asarray(functions, float)
    if Fm.ndim == 1:
        Fm = Fm[:, None]
    x2 = np.einsum("ij,ij->i", mesh.vertices, mesh.vertices)
    grad = np.einsum("ij,ij->j", Fm, ops.stiffness @ Fm)
    l2 = np.einsum("ij,ij->j", Fm, ops.mass[:, None] * Fm)
    lhs = np.einsum("ij,ij->j", Fm, (ops.mass * x2)[:, None] * Fm)
    rhs = 16.0 * grad + 4 * N_DIM * l2
    slack = rhs - lhs
    ok = slack >= -rel_tol * rhs
    return {"anchor": LOG_SOBOLEV_ANCHOR, "slack": slack, "lhs": lhs, "rhs": rhs, "ok": ok, "violations": int((~ok).sum())}


def genus_budgets(mesh, radii=None, diagnostics=None):
    """Weighted-area, area-growth and total-curvature budgets of a closed surface."""
    if not mesh.is_closed:
        raise ParameterError("genus budgets need a closed mesh")
    diag = diagnostics or validate(mesh)
    g = diag.genus
    chi = diag.euler_characteristic
    D = diag.diameter
    curv = curvature_tensors(mesh)
    int_rho = weighted_integral(mesh)
    area = float(np.sum(mesh.face_areas))
    if radii is None:
        radii = np.linspace(1.0, D + math.sqrt(2 * N_DIM), 16)
    radii = np.asarray(radii, float)
    ar = np.array([weighted_integral(mesh, None, None, r) for r in radii])
    ar_bound = 32 * math.exp(0.25) * math.pi * (1 + g) * radii**2
    b2_bound = 32 * math.exp(0.25) * math.pi * (1 + g) * (D + math.sqrt(2 * N_DIM)) ** 2 + 8 * math.pi * (g - 1)
    identity_gap = abs(curv.integral_b2 - (curv.integral_h2 - 4 * math.pi * chi))
    return {
        "genus": g,
        "euler_characteristic": chi,
        "diameter": D,
        "weighted_area": {
            "anchor": "int rho < 32 pi (1 + g)",
            "value": int_rho,
            "bound": 32 * math.pi * (1 + g),
            "bound_satisfied": bool(int_rho < 32 * math.pi * (1 + g)),
        },
        "area_growth": {
            "anchor": "Area(M ∩ B_r) <= 32 e^{1/4} pi (1 + g) r^2",
            "r": radii,
            "value": ar,
            "bound": ar_bound,
            "bound_satisfied": bool(np.all(ar <= ar_bound)),
        },
        "total_curvature_identity": {
            "anchor": "int |B|^2 = int H^2 - 2 int K",
            "integral_B2": curv.integral_b2,
            "integral_H2_minus_4pi_chi": curv.integral_h2 - 4 * math.pi * chi,
            "gap": identity_gap,
            "gauss_bonnet_gap": abs(curv.integral_gauss - 2 * math.pi * chi),
            "area_minus_4pi_chi": area - 4 * math.pi * chi,
            "relative_gap_to_area_form": abs(curv.integral_b2 - (area - 4 * math.pi * chi)) / max(abs(area - 4 * math.pi * chi), 1e-300),
        },
        "total_curvature_bound": {
            "anchor": "int |B|^2 <= 32 e^{1/4} pi (1 + g)(D + sqrt(2n))^2 + 8 pi (g - 1)",
            "value": curv.integral_b2,
            "bound": b2_bound,
            "margin": b2_bound - curv.integral_b2,
            "bound_satisfied": bool(curv.integral_b2 <= b2_bound),
        },
        "bound_satisfied": bool(int_rho < 32 * math.pi * (1 + g) and np.all(ar <= ar_bound) and curv.integral_b2 <= b2_bound),
    }
