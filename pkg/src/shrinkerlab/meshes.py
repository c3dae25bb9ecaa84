"""Structured triangle meshes: icospheres, tubes, flat disks, tori."""

import numpy as np
from scipy.spatial import Delaunay

from .mesh import EmbeddedSurfaceMesh

_PHI = (1.0 + 5.0 ** 0.5) / 2.0

_ICO_VERTS = np.array(
    [
        [-1, _PHI, 0], [1, _PHI, 0], [-1, -_PHI, 0], [1, -_PHI, 0],
        [0, -1, _PHI], [0, 1, _PHI], [0, -1, -_PHI], [0, 1, -_PHI],
        [_PHI, 0, -1], [_PHI, 0, 1], [-_PHI, 0, -1], [-_PHI, 0, 1],
    ],
    dtype=float,
)
_ICO_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
)


def icosphere_counts(level):
    return 10 * 4**level + 2, 20 * 4**level


def _unit_icosphere(level):
    V = _ICO_VERTS / np.linalg.norm(_ICO_VERTS, axis=1, keepdims=True)
    F = _ICO_FACES.copy()
    for _ in range(level):
        nv = len(V)
        e = np.sort(np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]]), axis=1)
        uniq, inv = np.unique(e, axis=0, return_inverse=True)
        inv = inv.ravel()
        mid = V[uniq[:, 0]] + V[uniq[:, 1]]
        mid /= np.linalg.norm(mid, axis=1, keepdims=True)
        V = np.vstack([V, mid])
        m = len(F)
        a, b, c = (nv + inv[:m], nv + inv[m:2 * m], nv + inv[2 * m:])
        F = np.concatenate(
            [
                np.stack([F[:, 0], a, c], 1),
                np.stack([F[:, 1], b, a], 1),
                np.stack([F[:, 2], c, b], 1),
                np.stack([a, b, c], 1),
            ]
        )
    return V, F


def icosphere(radius=1.0, level=3, center=(0.0, 0.0, 0.0)):
    """Subdivided icosahedron projected onto a sphere, outward orientation."""
    V, F = _unit_icosphere(level)
    return EmbeddedSurfaceMesh(radius * V + np.asarray(center, float), F)


def ellipsoid(axes=(1.0, 1.0, 1.0), level=3):
    V, F = _unit_icosphere(level)
    return EmbeddedSurfaceMesh(V * np.asarray(axes, float), F)


def tube(radius, n_theta, halflength):
    """Open cylinder ``x^2 + y^2 = radius^2``, ``|z| <= halflength``.

    Rings are staggered by half a step so triangles are close to
    equilateral; the end rings sit exactly at ``z = +-halflength``.
    """
    dz_target = 2.0 * np.pi * radius / n_theta * np.sqrt(3.0) / 2.0
    n_z = max(1, int(np.ceil(2.0 * halflength / dz_target)))
    z = np.linspace(-halflength, halflength, n_z + 1)
    k = np.arange(n_theta)
    V = []
    for j, zj in enumerate(z):
        th = 2.0 * np.pi * (k + 0.5 * (j % 2)) / n_theta
        V.append(np.stack([radius * np.cos(th), radius * np.sin(th), np.full(n_theta, zj)], 1))
    V = np.concatenate(V)
    F = []
    for j in range(n_z):
        lo = j * n_theta + k
        lo1 = j * n_theta + (k + 1) % n_theta
        hi = (j + 1) * n_theta + k
        hi1 = (j + 1) * n_theta + (k + 1) % n_theta
        if j % 2 == 0:
            # upper ring shifted forward by half a step
            F.append(np.stack([lo, lo1, hi], 1))
            F.append(np.stack([lo1, hi1, hi], 1))
        else:
            F.append(np.stack([lo, hi1, hi], 1))
            F.append(np.stack([lo, lo1, hi1], 1))
    return EmbeddedSurfaceMesh(V, np.concatenate(F))


def tube_counts(radius, n_theta, halflength):
    dz_target = 2.0 * np.pi * radius / n_theta * np.sqrt(3.0) / 2.0
    n_z = max(1, int(np.ceil(2.0 * halflength / dz_target)))
    return n_theta * (n_z + 1), 2 * n_theta * n_z


def disk_counts(rings):
    return 1 + 3 * rings * (rings + 1)


def disk(radius, rings, offset=(0.0, 0.0, 0.0)):
    """Flat disk in the plane ``z = 0`` (normal ``+e3``), then translated.

    Ring ``k`` carries ``6k`` equally spaced points at radius ``k*radius/rings``.
    """
    pts = [np.zeros((1, 2))]
    for k in range(1, rings + 1):
        th = 2.0 * np.pi * np.arange(6 * k) / (6 * k)
        r = radius * k / rings
        pts.append(np.stack([r * np.cos(th), r * np.sin(th)], 1))
    P = np.concatenate(pts)
    tri = Delaunay(P).simplices
    a, b, c = P[tri[:, 0]], P[tri[:, 1]], P[tri[:, 2]]
    orient = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    tri = np.where(orient[:, None] < 0, tri[:, [0, 2, 1]], tri)
    V = np.column_stack([P, np.zeros(len(P))]) + np.asarray(offset, float)
    return EmbeddedSurfaceMesh(V, tri)


def torus(major=2.0, minor=1.0, n_major=48, n_minor=24):
    """Torus of revolution about the z axis, outward orientation."""
    u = 2.0 * np.pi * np.arange(n_major) / n_major
    v = 2.0 * np.pi * np.arange(n_minor) / n_minor
    U, W = np.meshgrid(u, v, indexing="ij")
    R = major + minor * np.cos(W)
    V = np.stack([R * np.cos(U), R * np.sin(U), minor * np.sin(W)], -1).reshape(-1, 3)
    i = np.arange(n_major)[:, None]
    j = np.arange(n_minor)[None, :]
    a = i * n_minor + j
    b = ((i + 1) % n_major) * n_minor + j
    c = ((i + 1) % n_major) * n_minor + (j + 1) % n_minor
    d = i * n_minor + (j + 1) % n_minor
    F = np.concatenate([np.stack([a, b, c], -1).reshape(-1, 3), np.stack([a, c, d], -1).reshape(-1, 3)])
    return EmbeddedSurfaceMesh(V, F)
