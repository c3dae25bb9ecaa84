"""Drift Laplacian ``L = Delta - <X, grad>/2`` on triangle meshes.

The operator is discretized only through its weighted Dirichlet form,

    f^T S f  ~  int |grad f|^2 rho,        f^T M f  ~  int f^2 rho,

with ``rho = exp(-|X|^2/4)``, so ``-M^{-1} S`` is self-adjoint for the
``M`` inner product by construction.  The first eigenvalue is the minimum
of the Rayleigh quotient over functions with ``int f rho = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, MeshValidationError, ParameterError
from .mesh import discrete_shrinker_residual

DEFAULT_SEED = 0x5EED
SHIFT = 0.1
MULTIPLICITY_RTOL = 1e-3
WEIGHT_RULES = ("vertex_mean", "centroid")


def gaussian_weight(X, t=1.0):
    X = np.asarray(X, float)
    return np.exp(-np.einsum("...i,...i->...", X, X) / (4.0 * t))


@dataclass
class WeightedOperators:
    """Weighted stiffness ``S``, lumped weighted mass ``M`` (diagonal) and ``m = M 1``."""

    stiffness: sp.csr_matrix = field(repr=False)
    mass: np.ndarray = field(repr=False)
    boundary: np.ndarray = field(repr=False)
    weight_rule: str = "vertex_mean"

    @property
    def n(self):
        return len(self.mass)

    @property
    def mean_vector(self):
        return self.mass

    @property
    def total_mass(self):
        return float(np.sum(self.mass))

    def project(self, f):
        """Remove the weighted mean: ``f - (m.f / m.1)``."""
        f = np.asarray(f, float)
        m = self.mass
        return f - (m @ f) / m.sum() * (np.ones_like(f) if f.ndim == 1 else np.ones((len(m), 1)))

    def scaled(self, c):
        """Same operators with ``rho`` multiplied by ``c``."""
        return WeightedOperators(self.stiffness * c, self.mass * c, self.boundary, self.weight_rule)

    def apply_drift(self, f):
        """Discrete ``L f = -M^{-1} S f``."""
        return -(self.stiffness @ f) / (self.mass if np.ndim(f) == 1 else self.mass[:, None])


def assemble(mesh, weight_rule="vertex_mean", t=1.0) -> WeightedOperators:
    """Build the weighted operators of a connected mesh.

    Parameters
    ----------
    weight_rule : {"vertex_mean", "centroid"}
        Per-triangle weight of the stiffness: mean of the three vertex values
        of ``rho`` (default) or ``rho`` at the centroid.
    t : float
        Scale of the Gaussian, ``exp(-|X|^2 / 4t)``.

    Boundary vertices get the natural (free) treatment, i.e. Neumann.
    """
    if weight_rule not in WEIGHT_RULES:
        raise ParameterError(f"weight_rule must be one of {WEIGHT_RULES}")
    ncomp, labels = mesh.components
    if ncomp != 1:
        v = int(np.flatnonzero(labels != labels[0])[0])
        raise MeshValidationError(
            "disconnected", (0, v), f"mesh has {ncomp} components (vertices 0 and {v} are not connected)"
        )
    rho = gaussian_weight(mesh.vertices, t)
    if weight_rule == "vertex_mean":
        wT = rho[mesh.faces].mean(axis=1)
    else:
        wT = gaussian_weight(mesh.face_centroids, t)
    S = mesh.stiffness(wT)
    M = rho * mesh.vertex_areas
    return WeightedOperators(S, M, np.asarray(mesh.boundary_vertices), weight_rule)


@dataclass
class SpectralResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)
    residuals: np.ndarray
    constraint_violation: np.ndarray
    orthonormality_error: float
    multiplicity_groups: list

    @property
    def lambda1(self):
        return float(self.eigenvalues[0])

    def to_dict(self):
        return {
            "lambda": self.eigenvalues,
            "residuals": self.residuals,
            "constraint_violation": self.constraint_violation,
            "orthonormality_error": self.orthonormality_error,
            "multiplicity_groups": self.multiplicity_groups,
        }


def group_multiplicities(values, rtol=MULTIPLICITY_RTOL):
    """Index groups of consecutive sorted values within relative ``rtol``."""
    groups = []
    for i, v in enumerate(values):
        if groups and abs(v - values[groups[-1][0]]) <= rtol * max(abs(v), abs(values[groups[-1][0]])):
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def _fix_signs(U):
    # largest-magnitude entry of each column made positive
    idx = np.argmax(np.abs(U), axis=0)
    s = np.sign(U[idx, np.arange(U.shape[1])])
    s[s == 0] = 1.0
    return U * s


def _finalize(ops, lam, U):
    S, mvec = ops.stiffness, ops.mass
    order = np.argsort(lam)
    lam, U = lam[order], U[:, order]
    # M-orthonormalize (eigh already does; cheap and keeps both paths identical)
    G = U.T @ (mvec[:, None] * U)
    U = U @ np.linalg.inv(np.linalg.cholesky(G)).T
    U = _fix_signs(U)
    MU = mvec[:, None] * U
    R = S @ U - MU * lam
    res = np.linalg.norm(R, axis=0) / np.linalg.norm(MU, axis=0)
    cons = np.abs(mvec @ U) / math.sqrt(mvec.sum())
    ortho = float(np.abs(U.T @ MU - np.eye(len(lam))).max())
    return SpectralResult(lam, U, res, cons, ortho, group_multiplicities(lam))


def _refined_solver(A, factor_solve, steps=2):
    # two rounds of iterative refinement recover the accuracy a plain solve
    # loses on strongly graded systems (tiny weights far from the origin)
    def solve(B):
        X = factor_solve(B)
        for _ in range(steps):
            X = X + factor_solve(B - A @ X)
        return X

    return solve


def _polish(ops, U, solve, max_sweeps=12):
    """Block inverse iteration with Rayleigh-Ritz on the span of ``U``.

    Returns Ritz values and M-orthonormal Ritz vectors.  Sweeps stop once
    the Ritz values settle to a few ulps.
    """
    S, mvec = ops.stiffness, ops.mass
    one = np.ones((ops.n, 1)) / math.sqrt(mvec.sum())

    def ritz(Q):
        Q = Q - one @ (one.T @ (mvec[:, None] * Q))
        Q = Q @ np.linalg.inv(np.linalg.cholesky(Q.T @ (mvec[:, None] * Q))).T
        T = Q.T @ (S @ Q)
        th, Y = np.linalg.eigh((T + T.T) / 2)
        return th, Q @ Y

    th, U = ritz(U)
    for _ in range(max_sweeps):
        prev = th
        th, U = ritz(solve(mvec[:, None] * U))
        if np.all(np.abs(th - prev) <= 8 * np.finfo(float).eps * np.maximum(np.abs(th), 1.0)):
            break
    return th, U


def first_eigenpairs(ops: WeightedOperators, k=3, sigma=SHIFT, seed=DEFAULT_SEED, tol=1e-13, maxiter=None):
    """``k`` smallest eigenpairs of ``S u = lam M u`` with ``int u rho = 0``.

    Shift-invert Lanczos about ``sigma``; every application of the inverse
    is followed by the M-orthogonal projection that removes constants, so
    the zero mode never enters the Krylov space.

    A single-vector Krylov space holds only one direction of an exactly
    degenerate eigenspace (symmetric meshes have many), so the solve is
    repeated with the pairs found so far deflated and a fresh start vector
    until no new eigenvalue below the current ``k``-th one appears.  The
    pairs are then polished by block inverse iteration with refined solves.
    """
    n = ops.n
    if not 1 <= k <= n - 2:
        raise ParameterError(f"k must satisfy 1 <= k <= n - 2 = {n - 2}, got {k}")
    S = ops.stiffness.tocsc()
    mvec = ops.mass
    M = sp.diags(mvec).tocsc()
    A = (S - sigma * M).tocsc()
    lu = spla.splu(A)
    rng = np.random.default_rng(seed)
    lam = np.empty(0)
    U = np.empty((n, 0))
    while True:
        B = np.hstack([np.ones((n, 1)) / math.sqrt(mvec.sum()), U])

        def project(x, B=B):
            return x - B @ (B.T @ (mvec * x.T).T)

        kk = min(k, n - 1 - B.shape[1])
        if kk < 1:
            break
        opinv = spla.LinearOperator((n, n), matvec=lambda b, p=project: p(lu.solve(np.asarray(b, float).ravel())), dtype=float)
        v0 = project(rng.standard_normal(n))
        ncv = min(n - B.shape[1], max(2 * kk + 1, 20))
        try:
            mu, W = spla.eigsh(S, k=kk, M=M, sigma=sigma, which="LM", OPinv=opinv, v0=v0, tol=tol, ncv=ncv, maxiter=maxiter)
        except spla.ArpackNoConvergence as exc:
            W = exc.eigenvectors
            hist = []
            if W is not None and W.size:
                hist = list(np.linalg.norm(S @ W - (mvec[:, None] * W) * exc.eigenvalues, axis=0))
            raise ConvergenceError(f"shift-invert Lanczos did not converge ({len(exc.eigenvalues)} of {kk} pairs)", hist) from exc
        kth = lam[k - 1] if len(lam) >= k else math.inf
        new = mu < kth * (1 - 1e-10)
        if not new.any():
            break
        W = project(W[:, new])
        W = W @ np.linalg.inv(np.linalg.cholesky(W.T @ (mvec[:, None] * W))).T
        lam = np.r_[lam, mu[new]]
        U = np.hstack([U, W])
        order = np.argsort(lam)[:k]
        lam, U = lam[order], U[:, order]
    lam, U = _polish(ops, U, _refined_solver(A, lu.solve))
    return _finalize(ops, lam, U)


def dense_eigenpairs(ops: WeightedOperators, k=3, sigma=SHIFT):
    """Brute-force oracle: full dense generalized eigendecomposition.

    The constrained spectrum is the full spectrum without the constant mode,
    which is the single zero eigenvalue of a connected mesh.  The pairs are
    polished with a dense LU factorization, independent of the sparse path.
    """
    S = ops.stiffness.toarray()
    lam, U = sla.eigh(S, np.diag(ops.mass))
    A = S - sigma * np.diag(ops.mass)
    factors = sla.lu_factor(A)
    lam, U = _polish(ops, U[:, 1:k + 1], _refined_solver(A, lambda B: sla.lu_solve(factors, B)))
    return _finalize(ops, lam, U)


def rayleigh_quotient(ops: WeightedOperators, f):
    """``f^T S f / g^T M g`` with ``g`` the weighted-mean-free part of ``f``."""
    f = np.asarray(f, float)
    g = ops.project(f)
    den = float(g @ (ops.mass * g))
    if den <= 1e-24 * max(float(f @ (ops.mass * f)), 1e-300):
        raise ParameterError("Rayleigh quotient undefined for a constant function")
    return float(f @ (ops.stiffness @ f)) / den


def coordinate_eigen_residual(ops: WeightedOperators, mesh, min_relative_mass=1e-8):
    """``|S x_i - M x_i / 2| / |M x_i|`` over interior rows, per coordinate.

    Coordinates whose weighted norm is negligible (e.g. ``x3`` on a flat disk
    in ``z = 0``) are reported as ``nan``.
    """
    X = mesh.vertices
    inner = ~ops.boundary
    SX = (ops.stiffness @ X)[inner]
    MX = (ops.mass[:, None] * X)[inner]
    norms = np.linalg.norm(MX, axis=0)
    ref = max(norms.max(), 1e-300)
    out = np.full(3, np.nan)
    for i in range(3):
        if norms[i] > min_relative_mass * ref:
            out[i] = np.linalg.norm(SX[:, i] - 0.5 * MX[:, i]) / norms[i]
    return out


CLOSED_ANCHOR = "lambda_1 in (1/4, 1/2] for compact embedded shrinkers"
OPEN_ANCHOR = "lambda_1 in [1/4, 1/2] for complete noncompact shrinkers"


def eigenvalue_bound_report(result: SpectralResult, mesh, band=None, residual_gate=0.1, max_residual=1e-8):
    """Classify ``lambda_1`` against the shrinker eigenvalue interval.

    The interval is widened by the relative ``band`` (default 2% for closed
    meshes, 5% for truncated ones).  Meshes whose discrete shrinker residual
    exceeds ``residual_gate`` in sup norm are ``not_applicable``.
    """
    closed = mesh.is_closed
    if band is None:
        band = 0.02 if closed else 0.05
    shr = discrete_shrinker_residual(mesh)
    lam = result.lambda1
    lo, hi = 0.25, 0.5
    lo_b, hi_b = lo * (1 - band), hi * (1 + band)
    inside = (lo_b < lam <= hi_b) if closed else (lo_b <= lam <= hi_b)
    solved = bool(np.all(result.residuals <= max_residual))
    if shr.sup > residual_gate:
        status = "not_applicable"
        note = f"not applicable: shrinker residual {shr.sup:.3g}"
    else:
        status = "inside" if inside else "outside"
        note = f"lambda_1 = {lam:.10g} {'inside' if inside else 'outside'} the band"
    return {
        "anchor": CLOSED_ANCHOR if closed else OPEN_ANCHOR,
        "lambda_1": lam,
        "interval": [lo, hi],
        "band": band,
        "interval_with_band": [lo_b, hi_b],
        "lower_strict": closed,
        "shrinker_residual": shr.to_dict(),
        "residual_gate": residual_gate,
        "eigen_residuals_ok": solved,
        "paper_interval_check": status,
        "note": note,
    }


POINCARE_ANCHOR = "int (f - mean f)^2 rho <= 4 int |grad f|^2 rho"


def poincare_check(ops: WeightedOperators, functions, rel_tol=0.05):
    """Slack ``4 f^T S f - g^T M g`` per column of ``functions``.

    A sample passes when the slack is at least ``-rel_tol * g^T M g``.
    """
    F = np.asarray(functions, float)
    if F.ndim == 1:
        F = F[:, None]
    G = ops.project(F)
    energy = np.einsum("ij,ij->j", F, ops.stiffness @ F)
    var = np.einsum("ij,ij->j", G, ops.mass[:, None] * G)
    slack = 4.0 * energy - var
    ok = slack >= -rel_tol * var
    return {"anchor": POINCARE_ANCHOR, "slack": slack, "lhs": var, "tol": rel_tol * var, "ok": ok, "violations": int((~ok).sum())}


YANG_YAU_ANCHOR = "lambda_1(conformal metric) <= 8 pi (1 + g) / area"


def conformal_eigen(mesh, genus=None, lambda_drift=None, rel_tol=0.02, seed=DEFAULT_SEED):
    """First eigenvalue of the closed surface with metric ``rho g``.

    In two dimensions the Dirichlet energy is conformally invariant, so the
    stiffness is the plain cotangent matrix; the area form is ``rho dA``,
    so the mass is ``rho_i A_i`` and the side condition ``int f rho = 0``.
    Since ``rho <= 1`` the result dominates the drift ``lambda_1``.
    """
    if not mesh.is_closed:
        raise ParameterError("conformal eigenvalue needs a closed mesh")
    if genus is None:
        from .mesh import validate

        genus = validate(mesh).genus
    rho = gaussian_weight(mesh.vertices)
    ops = WeightedOperators(mesh.laplacian_stiffness, rho * mesh.vertex_areas, np.zeros(mesh.n_vertices, bool), "unweighted")
    res = first_eigenpairs(ops, k=1, seed=seed)
    lam_c = res.lambda1
    if lambda_drift is None:
        lambda_drift = first_eigenpairs(assemble(mesh), k=1, seed=seed).lambda1
    area = ops.total_mass
    bound = 8.0 * math.pi * (1 + genus) / area
    return {
        "anchor": YANG_YAU_ANCHOR,
        "genus": int(genus),
        "lambda_conformal": lam_c,
        "lambda_drift": float(lambda_drift),
        "conformal_area": area,
        "yang_yau_bound": bound,
        "product": lam_c * area,
        "dominates_drift": bool(lam_c >= lambda_drift * (1 - rel_tol)),
        "bound_satisfied": bool(lam_c <= bound * (1 + rel_tol)),
        "rel_tol": rel_tol,
        "residual": float(res.residuals[0]),
    }
