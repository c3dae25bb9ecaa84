import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shrinkerlab import fileio, meshes
from shrinkerlab.errors import MeshFormatError, MeshValidationError
from shrinkerlab.mesh import (
    EmbeddedSurfaceMesh,
    curvature_tensors,
    discrete_shrinker_residual,
    mean_curvature_vectors,
    quadric_fit_b2,
    validate,
)


def test_icosphere_topology(sphere3):
    d = validate(sphere3)
    assert (d.n_vertices, d.n_faces) == (642, 1280)
    assert d.euler_characteristic == 2 and d.genus == 0 and d.is_closed
    assert d.n_components == 1


def test_torus_genus(torus):
    d = validate(torus)
    assert d.euler_characteristic == 0 and d.genus == 1


def test_open_meshes(tube, disk):
    assert validate(tube).genus is None
    d = validate(disk)
    assert d.euler_characteristic == 1 and not d.is_closed


def test_two_triangles_inconsistent_orientation():
    V = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], float)
    m = EmbeddedSurfaceMesh(V, [[0, 1, 2], [1, 2, 3]])
    with pytest.raises(MeshValidationError) as e:
        validate(m)
    assert e.value.kind == "inconsistent_orientation"
    assert set(e.value.simplex) == {1, 2}
    validate(EmbeddedSurfaceMesh(V, [[0, 1, 2], [2, 1, 3]]))


def test_non_manifold_edge_is_named():
    V = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1]], float)
    m = EmbeddedSurfaceMesh(V, [[0, 1, 2], [1, 0, 3], [0, 1, 4]])
    with pytest.raises(MeshValidationError) as e:
        validate(m)
    assert e.value.kind == "non_manifold_edge"
    assert tuple(sorted(int(x) for x in e.value.simplex)) == (0, 1)
    assert "(0, 1)" in str(e.value)


def test_degenerate_and_isolated():
    V = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], float)
    with pytest.raises(MeshValidationError) as e:
        validate(EmbeddedSurfaceMesh(V, [[0, 1, 2]]))
    assert e.value.kind == "degenerate_triangle"
    V = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 5, 5]], float)
    with pytest.raises(MeshValidationError) as e:
        validate(EmbeddedSurfaceMesh(V, [[0, 1, 2]]))
    assert e.value.kind == "isolated_vertex" and tuple(e.value.simplex) == (3,)


def test_non_manifold_vertex():
    # two triangles touching at a single vertex
    V = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0]], float)
    with pytest.raises(MeshValidationError) as e:
        validate(EmbeddedSurfaceMesh(V, [[0, 1, 2], [0, 3, 4]]))
    assert e.value.kind == "non_manifold_vertex" and tuple(e.value.simplex) == (0,)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.05), st.sampled_from(["sphere", "torus"]))
def test_gauss_bonnet_under_perturbation(seed, amp, kind):
    base = meshes.icosphere(1.0, 2) if kind == "sphere" else meshes.torus(2.0, 1.0, 16, 8)
    rng = np.random.default_rng(seed)
    m = base.with_vertices(base.vertices + amp * rng.standard_normal(base.vertices.shape))
    d = validate(m)
    # total angle defect is a topological invariant of the triangulation
    assert d.angle_defect_total == pytest.approx(2 * math.pi * d.euler_characteristic, abs=1e-9)


def test_mean_curvature_magnitudes(unit_sphere4, disk, tube):
    H = np.linalg.norm(mean_curvature_vectors(unit_sphere4), axis=1)
    assert 0.99 <= H.mean() / 2 <= 1.01  # |H| = 2/r with H the trace
    inner = ~disk.boundary_vertices
    assert np.abs(mean_curvature_vectors(disk)[inner]).max() <= 1e-8
    Ht = np.linalg.norm(mean_curvature_vectors(tube), axis=1)[~tube.boundary_vertices]
    np.testing.assert_allclose(Ht, 1 / math.sqrt(2), rtol=0.01)


def test_mean_curvature_points_inward(sphere4):
    H = mean_curvature_vectors(sphere4)
    assert np.all(np.einsum("ij,ij->i", H, sphere4.vertex_normals) < 0)


def test_shrinker_residual_examples(sphere4, unit_sphere4):
    assert discrete_shrinker_residual(sphere4).sup <= 0.02
    assert discrete_shrinker_residual(unit_sphere4).sup == pytest.approx(1.5, rel=0.02)


def test_shrinker_residual_decreases_with_refinement():
    res = [discrete_shrinker_residual(meshes.icosphere(2.0, L)) for L in range(2, 6)]
    sups = [r.sup for r in res]
    l2s = [r.l2 for r in res]
    assert all(b < a for a, b in zip(sups, sups[1:]))
    assert all(b < a for a, b in zip(l2s, l2s[1:]))


def test_boundary_excluded(tube):
    r = discrete_shrinker_residual(tube)
    assert r.boundary.sum() == 2 * 64
    assert r.sup <= 0.02


def test_curvature_integrals(sphere4):
    c = curvature_tensors(sphere4)
    assert c.integral_gauss == pytest.approx(4 * math.pi, abs=1e-9)
    assert c.integral_b2 == pytest.approx(8 * math.pi, rel=0.02)
    assert c.integral_h2 == pytest.approx(16 * math.pi, rel=0.02)
    assert c.integral_b2 == pytest.approx(c.integral_h2 - 2 * c.integral_gauss, rel=1e-12)


def test_quadric_cross_check(sphere4):
    q = quadric_fit_b2(sphere4)
    b2 = curvature_tensors(sphere4).b2
    # |B|^2 = 2/r^2 = 0.5 on S^2(2)
    assert np.nanmean(q) == pytest.approx(0.5, rel=0.1)
    assert np.mean(b2) == pytest.approx(np.nanmean(q), rel=0.1)


def test_vertex_areas_partition(sphere4, disk):
    for m in (sphere4, disk):
        assert m.vertex_areas.sum() == pytest.approx(m.face_areas.sum(), rel=1e-13)
        assert np.all(m.corner_areas > 0)


def test_stiffness_annihilates_constants(sphere3):
    S = sphere3.laplacian_stiffness
    assert np.abs(S @ np.ones(sphere3.n_vertices)).max() <= 1e-12
    assert abs(S - S.T).max() <= 1e-14


def test_mesh_is_immutable(sphere3):
    with pytest.raises(ValueError):
        sphere3.vertices[0, 0] = 1.0


def test_components():
    a = meshes.icosphere(1.0, 1)
    b = meshes.icosphere(1.0, 1, center=(5, 0, 0))
    V = np.vstack([a.vertices, b.vertices])
    F = np.vstack([a.faces, b.faces + a.n_vertices])
    d = validate(EmbeddedSurfaceMesh(V, F))
    assert d.n_components == 2 and d.euler_characteristic == 4 and d.genus == 0


@pytest.mark.parametrize("ext", ["off", "obj"])
def test_file_round_trip(tmp_path, sphere3, ext):
    p = tmp_path / f"m.{ext}"
    (fileio.write_off if ext == "off" else fileio.write_obj)(sphere3, p)
    m = fileio.read_mesh(p)
    assert np.array_equal(m.vertices, sphere3.vertices)
    assert np.array_equal(m.faces, sphere3.faces)


def test_read_errors(tmp_path):
    with pytest.raises(FileNotFoundError) as e:
        fileio.read_mesh(tmp_path / "nope.off")
    assert "nope.off" in str(e.value)
    bad = tmp_path / "bad.off"
    bad.write_text("OFF\n3 1 0\n0 0 0\n1 0 0\n")
    with pytest.raises(MeshFormatError):
        fileio.read_mesh(bad)
