"""Closed-form self-shrinkers in R^3: plane, round sphere, round cylinder.

The shrinker equation is ``H = -X^N / 2`` with ``H = Delta X``; for the
outward normal a sphere of radius r has scalar mean curvature ``-2/r`` and a
cylinder ``-1/r``, so the exact radii are 2 and sqrt(2).
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

import numpy as np

from . import meshes
from .errors import DomainError, ParameterError, ResourceError

N_DIM = 2
EXACT_TOL = 1e-12
DEFAULT_HALFLENGTH = 8.0
VERTEX_BUDGET = 1_000_000
KINDS = ("plane", "sphere", "cylinder")


@dataclass(frozen=True)
class AnalyticShrinker:
    kind: str
    radius: float | None = None
    offset: tuple = (0.0, 0.0, 0.0)
    exact: bool = False
    # ((lo, hi), (lo, hi)); sphere poles are excluded so the chart is an immersion
    domain: tuple = field(default=((-math.inf, math.inf), (-math.inf, math.inf)))
    n: int = N_DIM

    def contains(self, u, v):
        (a, b), (c, d) = self.domain
        if self.kind == "sphere":
            return a < u < b and c <= v <= d
        return a <= u <= b and c <= v <= d

    def position(self, u, v):
        if self.kind == "sphere":
            s = math.sin(u)
            return self.radius * np.array([s * math.cos(v), s * math.sin(v), math.cos(u)])
        if self.kind == "cylinder":
            return np.array([self.radius * math.cos(u), self.radius * math.sin(u), v])
        return np.array([u, v, 0.0]) + np.asarray(self.offset)

    def tangents(self, u, v):
        """Coordinate tangent vectors ``dX/du`` and ``dX/dv``."""
        if self.kind == "sphere":
            r = self.radius
            return (
                r * np.array([math.cos(u) * math.cos(v), math.cos(u) * math.sin(v), -math.sin(u)]),
                r * np.array([-math.sin(u) * math.sin(v), math.sin(u) * math.cos(v), 0.0]),
            )
        if self.kind == "cylinder":
            return (
                self.radius * np.array([-math.sin(u), math.cos(u), 0.0]),
                np.array([0.0, 0.0, 1.0]),
            )
        return np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])

    def to_dict(self):
        return {
            "kind": self.kind,
            "radius": self.radius,
            "offset": list(self.offset),
            "exact": self.exact,
            "n": self.n,
        }


@dataclass(frozen=True)
class PointFrame:
    position: np.ndarray
    normal: np.ndarray
    mean_curvature_vector: np.ndarray
    normal_part: np.ndarray
    tangential_part: np.ndarray
    mean_curvature: float


def _radial_defect(kind, r):
    # scalar <H + X^N/2, nu_out> for the round exemplars
    return (-N_DIM / r if kind == "sphere" else -1.0 / r) + r / 2.0


def make_shrinker(kind, params=None, **kw) -> AnalyticShrinker:
    """Build a catalog exemplar; ``exact`` is set iff ``H = -X^N/2`` holds.

    >>> make_shrinker("sphere", radius=2.0).exact
    True
    """
    p = dict(params or {})
    p.update(kw)
    kind = str(kind).lower()
    if kind not in KINDS:
        raise ParameterError(f"unknown shrinker kind {kind!r}; expected one of {KINDS}")
    if kind in ("sphere", "cylinder"):
        default = 2.0 if kind == "sphere" else math.sqrt(2.0)
        r = float(p.pop("radius", default))
        if p:
            raise ParameterError(f"unexpected parameters for {kind}: {sorted(p)}")
        if not math.isfinite(r) or r <= 0:
            raise ParameterError(f"{kind} radius must be positive and finite, got {r}")
        exact = abs(_radial_defect(kind, r)) <= EXACT_TOL
        if kind == "sphere":
            domain = ((0.0, math.pi), (0.0, 2.0 * math.pi))
        else:
            domain = ((0.0, 2.0 * math.pi), (-math.inf, math.inf))
        return AnalyticShrinker(kind, r, (0.0, 0.0, 0.0), exact, domain)
    off = np.asarray(p.pop("offset", (0.0, 0.0, 0.0)), dtype=float)
    if p:
        raise ParameterError(f"unexpected parameters for plane: {sorted(p)}")
    if off.shape != (3,) or not np.all(np.isfinite(off)):
        raise ParameterError(f"plane offset must be a finite 3-vector, got {off}")
    exact = abs(off[2]) <= EXACT_TOL
    return AnalyticShrinker("plane", None, tuple(float(x) for x in off), exact)


def eval_frame(shrinker: AnalyticShrinker, point) -> PointFrame:
    """Closed-form position, outward normal, ``H``, ``X^N`` and ``X^T``."""
    u, v = (float(x) for x in point)
    if not shrinker.contains(u, v):
        raise DomainError(f"parameter point {(u, v)} outside domain {shrinker.domain} of {shrinker.kind}")
    X = shrinker.position(u, v)
    if shrinker.kind == "sphere":
        nu = X / shrinker.radius
        h = -N_DIM / shrinker.radius
    elif shrinker.kind == "cylinder":
        nu = np.array([X[0], X[1], 0.0]) / shrinker.radius
        h = -1.0 / shrinker.radius
    else:
        nu = np.array([0.0, 0.0, 1.0])
        h = 0.0
    XN = float(X @ nu) * nu
    return PointFrame(X, nu, h * nu, XN, X - XN, h)


def shrinker_residual(shrinker: AnalyticShrinker, point) -> np.ndarray:
    """``H + X^N / 2``; identically zero on exact exemplars."""
    fr = eval_frame(shrinker, point)
    return fr.mean_curvature_vector + 0.5 * fr.normal_part


def mesh_size(shrinker, resolution, truncation_halflength=DEFAULT_HALFLENGTH):
    """Vertex count that ``sample_mesh`` would produce."""
    if shrinker.kind == "sphere":
        return meshes.icosphere_counts(resolution)[0]
    if shrinker.kind == "cylinder":
        return meshes.tube_counts(shrinker.radius, resolution, truncation_halflength)[0]
    return meshes.disk_counts(resolution)


def sample_mesh(shrinker, resolution, truncation_halflength=DEFAULT_HALFLENGTH, vertex_budget=VERTEX_BUDGET):
    """Triangulate an exemplar.

    sphere
        icosphere with ``resolution`` subdivision levels
    cylinder
        tube with ``resolution`` points per ring, cut at ``|z| = truncation_halflength``
    plane
        flat disk of radius ``truncation_halflength`` with ``resolution`` rings
    """
    resolution = int(resolution)
    if resolution < 1:
        raise ParameterError(f"resolution must be >= 1, got {resolution}")
    if shrinker.kind != "sphere" and not truncation_halflength > 0:
        raise ParameterError("non-compact exemplars need a positive truncation half-length")
    if shrinker.kind == "cylinder" and resolution < 3:
        raise ParameterError("a tube needs at least 3 points per ring")
    nv = mesh_size(shrinker, resolution, truncation_halflength)
    if nv > vertex_budget:
        raise ResourceError(f"{shrinker.kind} at resolution {resolution} needs {nv} vertices (budget {vertex_budget})")
    if shrinker.kind == "sphere":
        return meshes.icosphere(shrinker.radius, resolution)
    if shrinker.kind == "cylinder":
        return meshes.tube(shrinker.radius, resolution, truncation_halflength)
    return meshes.disk(truncation_halflength, resolution, shrinker.offset)


# -- text config -------------------------------------------------------------

_CONFIG_KEYS = {"kind", "radius", "offset", "resolution", "halflength"}


def load_config(source):
    """Read ``[shrinker]`` from an INI-style text (or path).

    Returns ``(shrinker, resolution, halflength)``. Unknown keys are rejected.
    """
    cp = configparser.ConfigParser()
    text = str(source)
    if "\n" not in text and "[" not in text:
        with open(text) as fh:
            text = fh.read()
    cp.read_string(text)
    if not cp.has_section("shrinker"):
        raise ParameterError("config needs a [shrinker] section")
    extra = set(cp.sections()) - {"shrinker"}
    if extra:
        raise ParameterError(f"unknown config sections: {sorted(extra)}")
    sec = dict(cp["shrinker"])
    unknown = set(sec) - _CONFIG_KEYS
    if unknown:
        raise ParameterError(f"unknown config keys: {sorted(unknown)}")
    if "kind" not in sec:
        raise ParameterError("config key 'kind' is required")
    params = {}
    if "radius" in sec:
        params["radius"] = float(sec["radius"])
    if "offset" in sec:
        params["offset"] = [float(x) for x in sec["offset"].replace(",", " ").split()]
    shrinker = make_shrinker(sec["kind"], params)
    resolution = int(sec.get("resolution", 4))
    halflength = float(sec.get("halflength", DEFAULT_HALFLENGTH))
    return shrinker, resolution, halflength
