"""Triangle meshes of embedded surfaces and discrete curvature operators.

Conventions
-----------
* ``vertex_areas`` are mixed Voronoi cells (Meyer et al.); barycentric
  thirds are kept as ``barycentric_areas``.
* ``stiffness`` is the positive semidefinite cotangent matrix, so the
  discrete Laplace-Beltrami operator is ``-A^{-1} L``.
* The mean curvature vector is ``H = Delta X``; on a round sphere of radius
  ``r`` it points inward with length ``2 / r``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import MeshValidationError

AREA_FLOOR = 1e-14


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class EmbeddedSurfaceMesh:
    """Oriented triangle mesh in R^3.

    Arrays are copied and frozen on construction; derived quantities are
    cached, so a mesh is safe to share between threads.
    """

    def __init__(self, vertices, faces, boundary=None, area_floor=AREA_FLOOR):
        V = np.asarray(vertices, dtype=float)
        F = np.asarray(faces, dtype=np.int64)
        if V.ndim != 2 or V.shape[1] != 3:
            raise ValueError(f"vertices must have shape (n, 3), got {V.shape}")
        if F.ndim != 2 or F.shape[1] != 3:
            raise ValueError(f"faces must have shape (m, 3), got {F.shape}")
        self.vertices = _frozen(V.copy())
        self.faces = _frozen(F.copy())
        self.area_floor = float(area_floor)
        self._boundary_marker = None
        if boundary is not None:
            b = np.asarray(boundary, dtype=bool)
            if b.shape != (len(V),):
                raise ValueError("boundary marker must have one entry per vertex")
            self._boundary_marker = _frozen(b.copy())

    def __repr__(self):
        return f"EmbeddedSurfaceMesh(n_vertices={self.n_vertices}, n_faces={self.n_faces})"

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def with_vertices(self, vertices):
        """Same connectivity, new positions."""
        return EmbeddedSurfaceMesh(vertices, self.faces, self._boundary_marker, self.area_floor)

    # -- connectivity -------------------------------------------------------

    @cached_property
    def _half_edges(self):
        F = self.faces
        return np.stack([F, np.roll(F, -1, axis=1)], axis=-1).reshape(-1, 2)

    @cached_property
    def _edge_table(self):
        he = self._half_edges
        lo = np.minimum(he[:, 0], he[:, 1])
        hi = np.maximum(he[:, 0], he[:, 1])
        keys = lo * self.n_vertices + hi
        uniq, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
        edges = np.stack([uniq // self.n_vertices, uniq % self.n_vertices], axis=1)
        return edges, inverse, counts

    @property
    def edges(self):
        return self._edge_table[0]

    @property
    def n_edges(self):
        return len(self.edges)

    @cached_property
    def boundary_edges(self):
        edges, _, counts = self._edge_table
        return _frozen(edges[counts == 1])

    @cached_property
    def boundary_vertices(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_edges.ravel()] = True
        if self._boundary_marker is not None:
            mask |= self._boundary_marker
        return _frozen(mask)

    @property
    def is_closed(self):
        return len(self.boundary_edges) == 0

    @cached_property
    def adjacency(self):
        """Symmetric vertex adjacency as a CSR matrix of ones."""
        e = self.edges
        n = self.n_vertices
        data = np.ones(2 * len(e))
        A = sp.coo_matrix((data, (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])), shape=(n, n))
        return A.tocsr()

    # -- geometry -----------------------------------------------------------

    @cached_property
    def _face_cross(self):
        V, F = self.vertices, self.faces
        return np.cross(V[F[:, 1]] - V[F[:, 0]], V[F[:, 2]] - V[F[:, 0]])

    @cached_property
    def face_areas(self):
        return _frozen(0.5 * np.linalg.norm(self._face_cross, axis=1))

    @cached_property
    def face_normals(self):
        c = self._face_cross
        return _frozen(c / np.linalg.norm(c, axis=1, keepdims=True))

    @cached_property
    def face_centroids(self):
        return _frozen(self.vertices[self.faces].mean(axis=1))

    @cached_property
    def barycentric_areas(self):
        A = np.zeros(self.n_vertices)
        np.add.at(A, self.faces.ravel(), np.repeat(self.face_areas / 3.0, 3))
        return _frozen(A)

    @cached_property
    def corner_areas(self):
        """Share of each triangle assigned to each of its corners, shape (m, 3).

        Non-obtuse triangles contribute their circumcentric Voronoi cells,
        obtuse ones split as 1/2 (obtuse corner) and 1/4 (others).  Rows sum
        to the triangle area.
        """
        V, F = self.vertices, self.faces
        cot, ang = self._corner_geometry
        At = self.face_areas
        obtuse = (ang > 0.5 * np.pi).any(axis=1)
        out = np.empty(F.shape)
        for k in range(3):
            i, j, l = F[:, k], F[:, (k + 1) % 3], F[:, (k + 2) % 3]
            eij = ((V[j] - V[i]) ** 2).sum(1)
            eil = ((V[l] - V[i]) ** 2).sum(1)
            vor = (eij * cot[:, (k + 2) % 3] + eil * cot[:, (k + 1) % 3]) / 8.0
            share = np.where(ang[:, k] > 0.5 * np.pi, 0.5 * At, 0.25 * At)
            out[:, k] = np.where(obtuse, share, vor)
        return _frozen(out)

    @cached_property
    def vertex_areas(self):
        """Mixed Voronoi areas; they partition the total area exactly."""
        return _frozen(np.bincount(self.faces.ravel(), self.corner_areas.ravel(), minlength=self.n_vertices))

    @cached_property
    def vertex_normals(self):
        # area-weighted: the un-normalised cross product carries 2 * area
        N = np.zeros((self.n_vertices, 3))
        c = self._face_cross
        for k in range(3):
            np.add.at(N, self.faces[:, k], c)
        return _frozen(N / np.linalg.norm(N, axis=1, keepdims=True))

    @cached_property
    def _corner_geometry(self):
        """Cotangent and angle at every corner, shape (m, 3) each."""
        V, F = self.vertices, self.faces
        cot = np.empty(F.shape)
        ang = np.empty(F.shape)
        for k in range(3):
            u = V[F[:, (k + 1) % 3]] - V[F[:, k]]
            w = V[F[:, (k + 2) % 3]] - V[F[:, k]]
            dot = np.einsum("ij,ij->i", u, w)
            cr = np.linalg.norm(np.cross(u, w), axis=1)
            cot[:, k] = dot / cr
            ang[:, k] = np.arctan2(cr, dot)
        return cot, ang

    @property
    def corner_cotangents(self):
        return self._corner_geometry[0]

    @property
    def corner_angles(self):
        return self._corner_geometry[1]

    def stiffness(self, face_weights=None):
        """Cotangent stiffness ``sum_T w_T K_T`` (PSD, rows sum to zero)."""
        F = self.faces
        cot = self.corner_cotangents
        w = 0.5 * cot if face_weights is None else 0.5 * cot * np.asarray(face_weights)[:, None]
        rows, cols, vals = [], [], []
        for k in range(3):
            i = F[:, (k + 1) % 3]
            j = F[:, (k + 2) % 3]
            wk = w[:, k]
            rows += [i, j, i, j]
            cols += [j, i, i, j]
            vals += [-wk, -wk, wk, wk]
        n = self.n_vertices
        L = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
        return L.tocsr()

    @cached_property
    def laplacian_stiffness(self):
        return self.stiffness()

    @cached_property
    def diameter(self):
        """Extrinsic diameter, exact, by chunked pairwise distances."""
        V = self.vertices
        best = 0.0
        step = max(1, 4_000_000 // max(len(V), 1))
        for s in range(0, len(V), step):
            block = V[s:s + step]
            d2 = (block * block).sum(1)[:, None] + (V * V).sum(1)[None, :] - 2.0 * block @ V.T
            best = max(best, float(d2.max()))
        return float(np.sqrt(max(best, 0.0)))

    @cached_property
    def components(self):
        n, labels = connected_components(self.adjacency, directed=False)
        return n, labels


# -- validation ------------------------------------------------------------


@dataclass
class MeshDiagnostics:
    euler_characteristic: int
    genus: int | None
    n_components: int
    n_vertices: int
    n_edges: int
    n_faces: int
    total_area: float
    diameter: float
    is_closed: bool
    is_orientable: bool
    mean_curvature: np.ndarray = field(repr=False)
    gauss_curvature: np.ndarray = field(repr=False)
    second_fundamental_norm2: np.ndarray = field(repr=False)
    boundary: np.ndarray = field(repr=False)
    angle_defect_total: float = 0.0
    embedded: str = "assumed (not verified)"

    def to_dict(self, per_vertex=False):
        d = {
            "euler_characteristic": self.euler_characteristic,
            "genus": self.genus,
            "n_components": self.n_components,
            "n_vertices": self.n_vertices,
            "n_edges": self.n_edges,
            "n_faces": self.n_faces,
            "total_area": self.total_area,
            "diameter": self.diameter,
            "is_closed": self.is_closed,
            "is_orientable": self.is_orientable,
            "angle_defect_total": self.angle_defect_total,
            "n_boundary_vertices": int(self.boundary.sum()),
            "embedded": self.embedded,
        }
        if per_vertex:
            d["mean_curvature"] = self.mean_curvature.tolist()
            d["gauss_curvature"] = self.gauss_curvature.tolist()
            d["second_fundamental_norm2"] = self.second_fundamental_norm2.tolist()
        return d


def _check_structure(mesh):
    V, F = mesh.vertices, mesh.faces
    if len(V) == 0 or len(F) == 0:
        raise MeshValidationError("empty", (), "mesh has no vertices or no triangles")
    if not np.all(np.isfinite(V)):
        bad = int(np.flatnonzero(~np.isfinite(V).all(1))[0])
        raise MeshValidationError("non_finite", (bad,), f"vertex {bad} has a non-finite coordinate")
    if F.min() < 0 or F.max() >= len(V):
        t = int(np.flatnonzero((F < 0).any(1) | (F >= len(V)).any(1))[0])
        raise MeshValidationError("index", F[t], f"triangle {t} references a missing vertex")
    rep = (F[:, 0] == F[:, 1]) | (F[:, 1] == F[:, 2]) | (F[:, 0] == F[:, 2])
    small = mesh.face_areas < mesh.area_floor
    bad = np.flatnonzero(rep | small)
    if len(bad):
        t = int(bad[0])
        raise MeshValidationError(
            "degenerate_triangle", F[t],
            f"triangle {t} {tuple(F[t])} has area {mesh.face_areas[t]:.3e} below floor {mesh.area_floor:.0e}",
        )
    used = np.zeros(len(V), dtype=bool)
    used[F.ravel()] = True
    if not used.all():
        v = int(np.flatnonzero(~used)[0])
        raise MeshValidationError("isolated_vertex", (v,), f"vertex {v} belongs to no triangle")

    edges, inverse, counts = mesh._edge_table
    over = np.flatnonzero(counts > 2)
    if len(over):
        e = edges[over[0]]
        raise MeshValidationError(
            "non_manifold_edge", e, f"edge {tuple(int(x) for x in e)} is shared by {counts[over[0]]} triangles"
        )
    he = mesh._half_edges
    dkeys = he[:, 0] * len(V) + he[:, 1]
    du, dcount = np.unique(dkeys, return_counts=True)
    dup = np.flatnonzero(dcount > 1)
    if len(dup):
        k = du[dup[0]]
        e = (k // len(V), k % len(V))
        raise MeshValidationError(
            "inconsistent_orientation", e,
            f"edge {tuple(int(x) for x in e)} is traversed in the same direction by two triangles",
        )


def _check_vertex_stars(mesh):
    """Every vertex star must be a single fan (disk or half-disk)."""
    F = mesh.faces
    m = len(F)
    corner_id = np.arange(3 * m).reshape(m, 3)
    edges, inverse, counts = mesh._edge_table
    he = mesh._half_edges
    face_of_he = np.repeat(np.arange(m), 3)
    slot_of_he = np.tile(np.arange(3), m)
    order = np.argsort(inverse, kind="stable")
    inv_sorted = inverse[order]
    starts = np.searchsorted(inv_sorted, np.flatnonzero(counts == 2))
    h1 = order[starts]
    h2 = order[starts + 1]
    f1, f2 = face_of_he[h1], face_of_he[h2]
    s1, s2 = slot_of_he[h1], slot_of_he[h2]
    # half-edge (a->b) in f1 at slot s1: a at s1, b at s1+1; f2 holds (b->a)
    a_in_f1 = corner_id[f1, s1]
    b_in_f1 = corner_id[f1, (s1 + 1) % 3]
    b_in_f2 = corner_id[f2, s2]
    a_in_f2 = corner_id[f2, (s2 + 1) % 3]
    r = np.r_[a_in_f1, b_in_f1]
    c = np.r_[a_in_f2, b_in_f2]
    G = sp.coo_matrix((np.ones(len(r)), (r, c)), shape=(3 * m, 3 * m))
    _, labels = connected_components(G, directed=False)
    vert = F.ravel()
    pairs = np.unique(np.stack([vert, labels], axis=1), axis=0)
    fans = np.bincount(pairs[:, 0], minlength=mesh.n_vertices)
    bad = np.flatnonzero(fans > 1)
    if len(bad):
        v = int(bad[0])
        raise MeshValidationError("non_manifold_vertex", (v,), f"star of vertex {v} splits into {fans[v]} fans")


def angle_defects(mesh):
    """``2*pi - angle sum`` (interior) or ``pi - angle sum`` (boundary)."""
    s = np.zeros(mesh.n_vertices)
    np.add.at(s, mesh.faces.ravel(), mesh.corner_angles.ravel())
    full = np.where(mesh.boundary_vertices, np.pi, 2.0 * np.pi)
    return full - s


def validate(mesh) -> MeshDiagnostics:
    """Check manifoldness, orientation and areas; return diagnostics.

    Raises
    ------
    MeshValidationError
        naming the offending edge, triangle or vertex.
    """
    _check_structure(mesh)
    _check_vertex_stars(mesh)
    V, E, F = mesh.n_vertices, mesh.n_edges, mesh.n_faces
    chi = V - E + F
    n_comp, _ = mesh.components
    closed = mesh.is_closed
    genus = None
    if closed:
        g2 = 2 * n_comp - chi
        genus = g2 // 2
    curv = curvature_tensors(mesh)
    Hvec = mean_curvature_vectors(mesh)
    Hs = np.einsum("ij,ij->i", Hvec, mesh.vertex_normals)
    return MeshDiagnostics(
        euler_characteristic=int(chi),
        genus=None if genus is None else int(genus),
        n_components=int(n_comp),
        n_vertices=V,
        n_edges=E,
        n_faces=F,
        total_area=float(mesh.face_areas.sum()),
        diameter=mesh.diameter,
        is_closed=closed,
        is_orientable=True,
        mean_curvature=Hs,
        gauss_curvature=curv.gauss,
        second_fundamental_norm2=curv.b2,
        boundary=np.asarray(mesh.boundary_vertices),
        angle_defect_total=float(angle_defects(mesh).sum()),
    )


# -- curvature -------------------------------------------------------------


def mean_curvature_vectors(mesh):
    """Discrete ``H = Delta X`` per vertex.

    Values at ``mesh.boundary_vertices`` come from a one-sided stencil and
    are unreliable; callers should mask them.
    """
    LX = mesh.laplacian_stiffness @ mesh.vertices
    return -LX / mesh.vertex_areas[:, None]


@dataclass
class ShrinkerResidual:
    vectors: np.ndarray = field(repr=False)
    boundary: np.ndarray = field(repr=False)
    sup: float
    l2: float

    def to_dict(self):
        return {"sup": self.sup, "l2": self.l2, "n_boundary_excluded": int(self.boundary.sum())}


def discrete_shrinker_residual(mesh) -> ShrinkerResidual:
    """Per-vertex ``H + X^N / 2`` with sup and rho-weighted L2 norms.

    ``l2`` is ``sqrt(sum_i |r_i|^2 rho_i A_i)`` over interior vertices.
    """
    X = mesh.vertices
    nu = mesh.vertex_normals
    XN = np.einsum("ij,ij->i", X, nu)[:, None] * nu
    r = mean_curvature_vectors(mesh) + 0.5 * XN
    inner = ~mesh.boundary_vertices
    mag = np.linalg.norm(r, axis=1)
    rho = np.exp(-np.einsum("ij,ij->i", X, X) / 4.0)
    sup = float(mag[inner].max()) if inner.any() else 0.0
    l2 = float(np.sqrt(np.sum((mag**2 * rho * mesh.vertex_areas)[inner])))
    return ShrinkerResidual(r, np.asarray(mesh.boundary_vertices), sup, l2)


@dataclass
class CurvatureReport:
    gauss: np.ndarray = field(repr=False)
    b2: np.ndarray = field(repr=False)
    h2: np.ndarray = field(repr=False)
    unreliable: np.ndarray = field(repr=False)
    integral_gauss: float
    integral_h2: float
    integral_b2: float

    def to_dict(self):
        return {
            "integral_K": self.integral_gauss,
            "integral_H2": self.integral_h2,
            "integral_B2": self.integral_b2,
            "n_unreliable": int(self.unreliable.sum()),
        }


def curvature_tensors(mesh) -> CurvatureReport:
    """Gauss curvature (angle defect / area), ``H^2`` and ``|B|^2 = H^2 - 2K``.

    Integrals are lumped sums, so ``integral_gauss`` equals the total angle
    defect and ``integral_b2 == integral_h2 - 2 * integral_gauss`` up to
    rounding.
    """
    A = mesh.vertex_areas
    defect = angle_defects(mesh)
    K = defect / A
    Hv = mean_curvature_vectors(mesh)
    H2 = np.einsum("ij,ij->i", Hv, Hv)
    B2 = H2 - 2.0 * K
    unreliable = np.asarray(mesh.boundary_vertices).copy()
    if not mesh.is_closed:
        unreliable |= (mesh.adjacency @ unreliable.astype(float)) > 0
    return CurvatureReport(
        gauss=K,
        b2=B2,
        h2=H2,
        unreliable=unreliable,
        integral_gauss=float(defect.sum()),
        integral_h2=float(np.sum(H2 * A)),
        integral_b2=float(np.sum(B2 * A)),
    )


def quadric_fit_b2(mesh, rings=2):
    """Cross-check estimator of ``|B|^2`` from a local height-function fit.

    Fits ``w = a u^2 + b u v + c v^2 + d u + e v`` over the k-ring in the
    tangent frame of each vertex normal and returns ``4a^2 + 2b^2 + 4c^2``.
    Boundary vertices get ``nan``.
    """
    A = mesh.adjacency
    reach = A.copy()
    for _ in range(rings - 1):
        reach = reach + reach @ A
    reach = reach.tocsr()
    V = mesh.vertices
    N = mesh.vertex_normals
    out = np.full(mesh.n_vertices, np.nan)
    helper = np.where(np.abs(N[:, 0:1]) < 0.9, np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]))
    T1 = np.cross(N, helper)
    T1 /= np.linalg.norm(T1, axis=1, keepdims=True)
    T2 = np.cross(N, T1)
    for i in range(mesh.n_vertices):
        if mesh.boundary_vertices[i]:
            continue
        nb = reach.indices[reach.indptr[i]:reach.indptr[i + 1]]
        nb = nb[nb != i]
        P = V[nb] - V[i]
        u, v, w = P @ T1[i], P @ T2[i], P @ N[i]
        M = np.stack([u * u, u * v, v * v, u, v], axis=1)
        coef, *_ = np.linalg.lstsq(M, w, rcond=None)
        a, b, c = coef[:3]
        out[i] = 4 * a * a + 2 * b * b + 4 * c * c
    return out
