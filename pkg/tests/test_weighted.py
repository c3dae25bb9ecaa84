import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from shrinkerlab import meshes, spectrum, weighted
from shrinkerlab.errors import ParameterError

SQ2 = math.sqrt(2.0)


def x2(P):
    return np.einsum("...i,...i->...", P, P)


# -- F functional ------------------------------------------------------------


def test_f_plane(disk):
    assert weighted.f_functional(disk) == pytest.approx(1.0, abs=1e-3)
    # unit ring spacing is already enough
    assert weighted.f_functional(meshes.disk(20.0, 20)) == pytest.approx(1.0, abs=1e-3)


def test_f_sphere(sphere4):
    assert weighted.f_functional(sphere4) == pytest.approx(4 / math.e, rel=5e-3)


def test_f_cylinder(tube):
    rep = weighted.f_functional_report(tube)
    exact = math.sqrt(2 * math.pi / math.e)
    # the tail beyond |z| = 8 is erfc(4) of the whole
    assert rep["tail"] == pytest.approx(exact * math.erfc(4.0), rel=0.05)
    assert rep["F_t"] == pytest.approx(exact, rel=1e-2)
    assert rep["F_t_raw"] < rep["F_t"]


def test_f_bad_arguments(sphere3):
    for t in (0.0, -1.0, float("nan")):
        with pytest.raises(ParameterError):
            weighted.f_functional(sphere3, t)
    with pytest.raises(ParameterError):
        weighted.f_functional(sphere3, 1.0, clip_radius=0.0)


def test_quadrature_second_order():
    exact = 4 / math.e
    F = [weighted.f_functional(meshes.icosphere(2.0, L)) for L in (2, 3, 4)]
    for a, b in zip(F, F[1:]):
        assert abs(a - b) <= 4 * abs(b - exact)


def test_clipping_sphere(sphere4):
    # everything lies inside B_3, nothing inside B_1.5
    assert weighted.f_functional(sphere4, clip_radius=3.0) == pytest.approx(weighted.f_functional(sphere4), rel=1e-14)
    assert weighted.f_functional(sphere4, clip_radius=1.5) == 0.0


def test_clipping_disk_area(disk):
    for r in (2.0, 5.0, 11.3):
        assert weighted.weighted_integral(disk, None, None, r) == pytest.approx(math.pi * r * r, rel=5e-3)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.3, 4.0))
def test_f_sphere_closed_form_in_t(t):
    m = meshes.icosphere(2.0, 3)
    assert weighted.f_functional(m, t) == pytest.approx(4 / t * math.exp(-1 / t), rel=5e-3)


# -- F_t monotonicity ----------------------------------------------------------


def test_ft_scan_sphere(sphere4):
    rep = weighted.ft_monotonicity_scan(sphere4, t_grid=np.linspace(0.1, 5.0, 50))
    t = rep["t"]
    np.testing.assert_allclose(rep["F_t"], 4 / t * np.exp(-1 / t), rtol=5e-3)
    assert rep["t_argmax"] == pytest.approx(1.0, abs=0.02)
    assert rep["F_max"] == pytest.approx(4 / math.e, rel=5e-3)
    assert rep["bound_satisfied"]
    exact = 4 * np.exp(-1 / t) * (1 / t**3 - 1 / t**2)
    np.testing.assert_allclose(rep["dF_dt"], exact, atol=5e-3 * np.abs(exact).max())
    # central differences on a 0.1 grid carry an O(h^2) error of a few percent
    late = (t >= 0.5) & (t < 4.9)
    np.testing.assert_allclose(rep["dF_dt_central"][late], exact[late], atol=0.05)


def test_ft_scan_plane(disk):
    rep = weighted.ft_monotonicity_scan(disk, t_grid=np.linspace(0.5, 5.0, 10))
    np.testing.assert_allclose(rep["F_t"], 1.0, atol=1e-3)
    assert np.abs(rep["dF_dt"]).max() <= 1e-3


def test_ft_scan_sparse_grid(sphere4):
    rep = weighted.ft_monotonicity_scan(sphere4, t_grid=[1.0, 2.0, 3.0])
    assert rep["max_dF_dt_t_ge_1"] <= 1e-6 and rep["derivative_ok"]


def test_ft_scan_errors_and_warning(sphere3):
    with pytest.raises(ParameterError):
        weighted.ft_monotonicity_scan(sphere3, t_grid=[2.0, 1.0])
    with pytest.raises(ParameterError):
        weighted.ft_monotonicity_scan(sphere3, t_grid=[1.0])
    with pytest.raises(ParameterError):
        weighted.ft_monotonicity_scan(sphere3, r=-1.0, t_grid=[1.0, 2.0])
    with pytest.warns(weighted.ConditioningWarning):
        weighted.ft_monotonicity_scan(sphere3, t_grid=[1.0, 1.0 + 1e-7])


# -- identities ----------------------------------------------------------------


def test_identities_sphere(sphere4):
    rep = weighted.identity_residuals(sphere4)
    assert rep["res_mean"] <= 5e-3
    assert rep["res_LX2"]["l2"] <= 0.05
    assert rep["res_Lx"]["sup"] <= 0.03
    assert rep["ratio_X2_rho"] == pytest.approx(4.0, rel=5e-3)
    assert rep["n_boundary_excluded"] == 0


def test_identities_cylinder_against_line_integral(tube):
    rep = weighted.identity_residuals(tube)
    num = quad(lambda z: (2 + z * z) * math.exp(-z * z / 4), -8, 8, epsabs=1e-13)[0]
    den = quad(lambda z: math.exp(-z * z / 4), -8, 8, epsabs=1e-13)[0]
    assert rep["ratio_X2_rho"] == pytest.approx(num / den, rel=1e-3)
    assert rep["ratio_X2_rho_tail_corrected"] == pytest.approx(4.0, rel=1e-2)
    assert rep["res_mean_relative"] <= 1e-2
    assert rep["n_boundary_excluded"] == 128


def test_identity_refinement():
    # |X|^2 is constant on the sphere, so only the coordinate identity carries discretization error
    reps = [weighted.identity_residuals(meshes.icosphere(2.0, L)) for L in (2, 3, 4)]
    sup = [r["res_Lx"]["sup"] for r in reps]
    assert sup[0] > sup[1] > sup[2]
    assert all(r["res_LX2"]["l2"] <= 1e-11 for r in reps)


def test_tail_zero_for_closed(sphere3):
    assert weighted.truncation_tail(sphere3) == 0.0


def test_tail_disk():
    # outside a disk of radius R in the plane the Gaussian mass is 4 pi exp(-R^2/4)
    m = meshes.disk(6.0, 24)
    assert weighted.truncation_tail(m) == pytest.approx(4 * math.pi * math.exp(-9.0), rel=0.05)


# -- growth ----------------------------------------------------------------------


def test_growth_disk(disk):
    radii = np.array([2.0, 4.0, 8.0, 16.0])
    prof = weighted.growth_profile(disk, radii)
    np.testing.assert_allclose(prof.areas, math.pi * radii**2, rtol=5e-3)
    assert prof.growth_constant == pytest.approx(math.pi, rel=5e-3)
    assert prof.to_dict()["monotone"]
    assert prof.csv_rows()[0][2] == pytest.approx(prof.growth_constant * 4)


def test_growth_cylinder(tube):
    radii = np.linspace(2.0, 8.0, 13)
    prof = weighted.growth_profile(tube, radii)
    np.testing.assert_allclose(prof.areas, 4 * SQ2 * math.pi * np.sqrt(radii**2 - 2), rtol=1e-2)


def test_growth_sphere(sphere4):
    prof = weighted.growth_profile(sphere4, [2.5, 3.0, 5.0])
    np.testing.assert_allclose(prof.areas, sphere4.face_areas.sum(), rtol=1e-14)
    assert sphere4.face_areas.sum() == pytest.approx(16 * math.pi, rel=5e-3)


def test_growth_errors(disk):
    with pytest.raises(ParameterError):
        weighted.growth_profile(disk, [3.0, 2.0])
    with pytest.warns(weighted.ResolutionWarning):
        weighted.growth_profile(disk, [0.05, 1.0])


def test_annulus_mass(sphere4):
    prof = weighted.growth_profile(sphere4, [3.0])
    # the whole sphere of radius 2 sits in the annulus around sqrt(4) = 2
    assert prof.annulus_mass == pytest.approx(weighted.weighted_integral(sphere4), rel=1e-14)


# -- growth lemma --------------------------------------------------------------------

GRID = 2.0 ** np.arange(-2, 7, 0.25)


def test_lemma_power():
    cert = weighted.growth_lemma_check(GRID, GRID**2, n=2, C1=4.0, C2=2.0)
    assert cert.hypothesis_ok and cert.conclusion_ok


def test_lemma_constant():
    cert = weighted.growth_lemma_check(GRID, np.ones_like(GRID), n=2, C1=1.0, C2=2.0)
    assert cert.hypothesis_ok and cert.conclusion_ok


def test_lemma_exponential_violates_hypothesis():
    cert = weighted.growth_lemma_check(GRID, np.exp(GRID), n=2, C1=1.0, C2=2.0)
    assert not cert.hypothesis_ok
    assert any("r=64" in f for f in cert.failures)


def test_lemma_non_monotone_is_not_an_exception():
    cert = weighted.growth_lemma_check([1.0, 2.0, 4.0], [1.0, 3.0, 2.0])
    assert not cert.hypothesis_ok


def test_lemma_constant_formula():
    # f(C2) = 0 forces f = 0 below, so any C3 works
    assert weighted.growth_lemma_constant(2, 4.0, 2.0, 0.0) == 1.0
    C3 = weighted.growth_lemma_constant(2, 4.0, 2.0, 4.0)
    assert C3 > 0
    # the bound is attained in log space at the maximizing radius or at C2
    lr = np.log(np.geomspace(2.0, 1e6, 2000))
    log_iter = math.log(4.0) + ((lr - math.log(2.0)) / math.log(2) + 1) * (math.log(4.0) + 2 * lr)
    assert np.all(log_iter <= math.log(C3) + 4 * lr**2 + 1e-12)


def test_lemma_errors():
    with pytest.raises(ParameterError):
        weighted.growth_lemma_check([1.0, 2.0], [1.0], C2=2.0)
    with pytest.raises(ParameterError):
        weighted.growth_lemma_check([1.0, 2.0], [1.0, 1.0], C2=1.0)
    with pytest.raises(ParameterError):
        weighted.growth_lemma_check([1.0, 2.0], [1.0, 1.0], C1=0.0)


def random_doubling_function(seed, n=2, C1=1.5, C2=2.0, per_octave=4, octaves=8):
    """Monotone step function on a log grid obeying ``f(r) <= C1 r^n f(r/2)`` for ``r >= C2``."""
    rng = np.random.default_rng(seed)
    r = C2 * 2.0 ** (np.arange(-per_octave, per_octave * octaves) / per_octave)
    f = np.empty_like(r)
    # below C2 anything monotone works, as long as the first doubling can still grow
    f[:per_octave] = rng.uniform(0.1, 10.0) * np.sort(rng.uniform(1.0, C1 * C2**n, per_octave))
    f[0] = f[:per_octave].min()
    for k in range(per_octave, len(r)):
        grow = f[k - 1] * math.exp(rng.exponential(2.0)) if rng.random() < 0.5 else f[k - 1]
        f[k] = min(grow, C1 * r[k] ** n * f[k - per_octave])
    return r, f


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1.0, 8.0), st.sampled_from([1, 2, 3]))
def test_lemma_property(seed, C1, n):
    r, f = random_doubling_function(seed, n=n, C1=C1)
    cert = weighted.growth_lemma_check(r, f, n=n, C1=C1, C2=2.0)
    assert cert.hypothesis_ok
    assert cert.conclusion_ok, cert.failures


# -- log-Sobolev and budgets -------------------------------------------------------


def test_log_sobolev_constant(sphere4):
    rep = weighted.log_sobolev_check(sphere4, np.ones(sphere4.n_vertices))
    int_rho = spectrum.assemble(sphere4).total_mass
    assert rep["slack"][0] == pytest.approx(4 * int_rho, rel=1e-12)


def test_log_sobolev_coordinate(sphere4):
    rep = weighted.log_sobolev_check(sphere4, sphere4.vertices[:, 0])
    assert rep["slack"][0] == pytest.approx(256 * math.pi / math.e, rel=1e-2)


def test_log_sobolev_random(torus):
    rng = np.random.default_rng(7)
    X = torus.vertices
    basis = np.column_stack([X[:, 0] ** a * X[:, 1] ** b * X[:, 2] ** c for a in range(3) for b in range(3) for c in range(3)])
    F = basis @ rng.standard_normal((basis.shape[1], 100))
    rep = weighted.log_sobolev_check(torus, F)
    assert rep["violations"] == 0


def test_log_sobolev_zero(sphere3):
    rep = weighted.log_sobolev_check(sphere3, np.zeros(sphere3.n_vertices))
    assert rep["slack"][0] == 0.0 and rep["violations"] == 0


def test_genus_budgets_sphere(sphere4):
    rep = weighted.genus_budgets(sphere4)
    assert rep["weighted_area"]["value"] == pytest.approx(16 * math.pi / math.e, rel=5e-3)
    assert rep["weighted_area"]["bound_satisfied"]
    tc = rep["total_curvature_identity"]
    assert tc["integral_B2"] == pytest.approx(8 * math.pi, rel=2e-2)
    assert tc["relative_gap_to_area_form"] <= 2e-2
    assert tc["gap"] <= 1e-9 and tc["gauss_bonnet_gap"] <= 1e-9
    b = rep["total_curvature_bound"]
    assert b["bound"] == pytest.approx(32 * math.exp(0.25) * math.pi * 36 - 8 * math.pi, rel=1e-3)
    assert b["bound_satisfied"] and b["margin"] > 0
    assert rep["bound_satisfied"]


def test_genus_budgets_torus(torus):
    rep = weighted.genus_budgets(torus)
    assert rep["genus"] == 1
    assert rep["total_curvature_identity"]["gauss_bonnet_gap"] <= 1e-9
    with pytest.raises(ParameterError):
        weighted.genus_budgets(meshes.disk(2.0, 4))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.1))
def test_curvature_identity_any_closed_mesh(seed, amp):
    base = meshes.icosphere(1.3, 2)
    rng = np.random.default_rng(seed)
    m = base.with_vertices(base.vertices + amp * rng.standard_normal(base.vertices.shape))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tc = weighted.genus_budgets(m)["total_curvature_identity"]
    assert tc["gap"] <= 1e-9 * max(1.0, abs(tc["integral_B2"]))
    assert tc["gauss_bonnet_gap"] <= 1e-9
