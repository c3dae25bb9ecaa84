"""Discrete self-shrinkers as minimizers of the weighted defect energy.

    E(X) = sum_i |H_i + X_i^N / 2|^2 rho_i A_i      (interior vertices)

Each iteration moves every vertex along its current unit normal,
``X_i + s_i N_i``, and takes a damped Gauss-Newton (Levenberg-Marquardt)
step in ``s``.  The Jacobian of the weighted residual vector comes from
central differences; vertices at graph distance >= 3 have disjoint
stencils, so they are perturbed together (distance-2 colouring).  A
backtracking line search keeps every accepted step strictly descending,
and a light tangential Laplacian smoothing keeps triangles well shaped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import meshes
from .errors import ConvergenceError, ParameterError
from .mesh import EmbeddedSurfaceMesh, discrete_shrinker_residual, mean_curvature_vectors


def _weighted_residual(mesh):
    """Stacked ``sqrt(rho_i A_i) (H_i + X_i^N/2)`` over interior vertices, or None if degenerate."""
    if np.any(mesh.face_areas < mesh.area_floor) or not np.all(np.isfinite(mesh.vertices)):
        return None
    X = mesh.vertices
    nu = mesh.vertex_normals
    r = mean_curvature_vectors(mesh) + 0.5 * np.einsum("ij,ij->i", X, nu)[:, None] * nu
    w = np.sqrt(np.exp(-np.einsum("ij,ij->i", X, X) / 4.0) * mesh.vertex_areas)
    r = r * w[:, None]
    r[np.asarray(mesh.boundary_vertices)] = 0.0
    return r.ravel()


def residual_energy(mesh):
    """Squared rho-weighted L2 norm of the discrete shrinker defect."""
    return discrete_shrinker_residual(mesh).l2 ** 2


def mean_edge_length(mesh):
    V, E = mesh.vertices, mesh.edges
    return float(np.mean(np.linalg.norm(V[E[:, 0]] - V[E[:, 1]], axis=1)))


def discretization_floor(mesh):
    """Energy of the exact radius-2 icosphere whose mean edge length is closest to ``mesh``'s."""
    h = mean_edge_length(mesh)
    best = None
    for level in range(0, 7):
        ref = meshes.icosphere(2.0, level)
        gap = abs(math.log(mean_edge_length(ref) / h))
        if best is None or gap < best[0]:
            best = (gap, ref)
    return residual_energy(best[1])


def distance2_coloring(mesh):
    """Greedy colouring where vertices within graph distance 2 differ."""
    A = (mesh.adjacency + sp.identity(mesh.n_vertices, format="csr")).tocsr()
    A2 = (A @ A).tocsr()
    color = np.full(mesh.n_vertices, -1)
    for v in range(mesh.n_vertices):
        nb = A2.indices[A2.indptr[v]:A2.indptr[v + 1]]
        used = set(color[nb][color[nb] >= 0].tolist())
        c = 0
        while c in used:
            c += 1
        color[v] = c
    return color


@dataclass
class RelaxOptions:
    max_iter: int = 500
    threshold: float | None = None  # default: 2x the discretization floor
    rel_decrease_tol: float = 1e-8
    step_cap: float = 0.25  # fraction of the mean edge length per iteration
    smoothing: float = 0.1
    damping: float = 1e-3
    fd_step: float = 1e-6  # fraction of the mean edge length
    max_backtracks: int = 30

    def __post_init__(self):
        if self.max_iter < 0:
            raise ParameterError("max_iter must be non-negative")
        for name in ("step_cap", "damping", "fd_step", "rel_decrease_tol"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        if self.smoothing < 0:
            raise ParameterError("smoothing must be non-negative")
        if self.threshold is not None and not self.threshold > 0:
            raise ParameterError("threshold must be positive")


@dataclass
class RelaxationTrace:
    energies: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    final_sup: float = float("nan")
    converged: bool = False
    iterations: int = 0
    threshold: float = float("nan")
    last_rel_decrease: float = float("nan")
    status: str = ""

    def to_dict(self):
        return {
            "anchor": "critical points of F are the shrinkers H = -X^N/2",
            "energy_initial": self.energies[0] if self.energies else None,
            "energy_final": self.energies[-1] if self.energies else None,
            "iterations": self.iterations,
            "converged": self.converged,
            "threshold": self.threshold,
            "final_sup": self.final_sup,
            "last_rel_decrease": self.last_rel_decrease,
            "monotone": bool(np.all(np.diff(self.energies) < 0)) if len(self.energies) > 1 else True,
            "status": self.status,
        }

    def csv_rows(self):
        return [(i, e, s) for i, (e, s) in enumerate(zip(self.energies, self.steps))]


def _jacobian(mesh, N, colors, delta):
    """Sparse d(weighted residual)/d(normal offsets) by coloured central differences."""
    V0 = mesh.vertices
    F = mesh.faces
    A = (mesh.adjacency + sp.identity(mesh.n_vertices, format="csr")).tocsr()
    rows, cols, vals = [], [], []
    for c in range(colors.max() + 1):
        sel = np.flatnonzero(colors == c)
        D = np.zeros_like(V0)
        D[sel] = delta * N[sel]
        rp = _weighted_residual(EmbeddedSurfaceMesh(V0 + D, F, area_floor=0.0))
        rm = _weighted_residual(EmbeddedSurfaceMesh(V0 - D, F, area_floor=0.0))
        diff = ((rp - rm) / (2 * delta)).reshape(-1, 3)
        for k in sel:
            nb = A.indices[A.indptr[k]:A.indptr[k + 1]]
            for j in nb:
                rows.extend((3 * j, 3 * j + 1, 3 * j + 2))
                cols.extend((k, k, k))
                vals.extend(diff[j])
    n = mesh.n_vertices
    return sp.csr_matrix((vals, (rows, cols)), shape=(3 * n, n))


def _tangential_smoothing(mesh, coeff):
    V = mesh.vertices
    A = mesh.adjacency
    deg = np.asarray(A.sum(axis=1)).ravel()
    lap = (A @ V) / deg[:, None] - V
    N = mesh.vertex_normals
    lap -= np.einsum("ij,ij->i", lap, N)[:, None] * N
    lap[np.asarray(mesh.boundary_vertices)] = 0.0
    return V + coeff * lap


def relax(mesh, options: RelaxOptions | None = None):
    """Minimize the defect energy; returns ``(relaxed_mesh, trace)``.

    Stops when the relative energy decrease of an iteration is at most
    ``rel_decrease_tol``, when no descending step exists, or after
    ``max_iter`` iterations.  ``converged`` additionally requires the energy
    to be at most the threshold.  A mesh already below the threshold is
    returned unchanged.  Boundary vertices of open meshes stay fixed.
    """
    opt = options or RelaxOptions()
    F = mesh.faces
    cur = EmbeddedSurfaceMesh(mesh.vertices, F, area_floor=mesh.area_floor)
    thr = opt.threshold if opt.threshold is not None else 2.0 * discretization_floor(cur)
    trace = RelaxationTrace(threshold=thr)
    r = _weighted_residual(cur)
    if r is None:
        raise ParameterError("initial mesh has a triangle below the area floor")
    E = float(r @ r)
    trace.energies.append(E)
    trace.steps.append(0.0)
    colors = distance2_coloring(cur)
    pinned = np.asarray(cur.boundary_vertices)  # open meshes keep their boundary in place
    mu = opt.damping
    rel = math.inf
    if E <= thr:
        trace.status = "initial energy below threshold"
        rel = 0.0
    for it in range(opt.max_iter if E > thr else 0):
        h = mean_edge_length(cur)
        N = np.asarray(cur.vertex_normals)
        J = _jacobian(cur, N, colors, opt.fd_step * h)
        JtJ = (J.T @ J).tocsc()
        g = J.T @ r
        diag = JtJ.diagonal()
        scale = max(float(diag.max()), 1e-300)
        accepted = False
        for _ in range(8):
            Amat = JtJ + sp.diags(mu * (diag + 1e-12 * scale))
            s = -spla.spsolve(Amat.tocsc(), g)
            s[pinned] = 0.0
            smax = float(np.abs(s).max())
            cap = opt.step_cap * h
            if smax > cap:
                s *= cap / smax
            alpha = 1.0
            for _ in range(opt.max_backtracks):
                trial = EmbeddedSurfaceMesh(cur.vertices + alpha * s[:, None] * N, F, area_floor=cur.area_floor)
                rt = _weighted_residual(trial)
                if rt is not None:
                    Et = float(rt @ rt)
                    if Et < E:
                        accepted = True
                        break
                alpha *= 0.5
            if accepted:
                mu = max(mu / 3.0, 1e-12) if alpha == 1.0 else mu
                break
            mu *= 10.0
        if not accepted:
            trace.status = "no descending step"
            rel = 0.0
            break
        step = float(np.abs(alpha * s).max())
        # tangential clean-up, kept only if it does not raise the energy
        if opt.smoothing > 0:
            c = opt.smoothing * min(1.0, step / h)
            sm = EmbeddedSurfaceMesh(_tangential_smoothing(trial, c), F, area_floor=cur.area_floor)
            rs = _weighted_residual(sm)
            if rs is not None and float(rs @ rs) <= Et:
                trial, rt, Et = sm, rs, float(rs @ rs)
        rel = (E - Et) / E
        cur, r, E = trial, rt, Et
        trace.energies.append(E)
        trace.steps.append(step)
        trace.iterations = it + 1
        if rel <= opt.rel_decrease_tol:
            trace.status = "relative decrease below tolerance"
            break
    else:
        if not trace.status:
            trace.status = "iteration budget exhausted"
    if trace.status == "no descending step" and trace.iterations == 0 and E > thr:
        raise ConvergenceError("no descending step from the initial mesh", trace.energies)
    trace.last_rel_decrease = float(rel)
    trace.final_sup = discrete_shrinker_residual(cur).sup
    trace.converged = bool(E <= thr and rel <= opt.rel_decrease_tol)
    return cur, trace
