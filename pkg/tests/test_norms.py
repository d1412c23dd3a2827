"""Mixed norms, the angular Sobolev multiplier, and the estimate harness."""

import math

import numpy as np
import pytest

from diraclab.clifford import (
    GridSpec,
    SpinorField3D,
    h1_norm,
    l2_norm,
    linf_norm,
    position_radius,
    radial_profile_field,
)
from diraclab.norms import (
    HALFWAVE_RADIAL_CONSTANT,
    BandLimitError,
    InadmissiblePotential,
    MixedNormSpec,
    NormReport,
    UnknownEstimate,
    angular_lp_slope,
    angular_sobolev,
    calibrate_halfwave_constant,
    field_to_shells,
    mixed_norm,
    radial_halfwave_maximal_check,
    shell_radii,
    spatial_norm,
    time_combine,
    verify_estimate,
    weight_comparability,
)
import diraclab.norms as norms
from diraclab.partialwave import QuantumNumbers, lift_callables
from diraclab.potential import PotentialSpec
from diraclab.propagator import EvolutionConfig, Trajectory, halfwave_sine
from diraclab.sphere import AngularGrid, grid_angles, quad_weights, sh_synthesize, ylm
from diraclab.util import file_digest
from diraclab.weights import japanese_bracket, log_weight_half, mixed_growth


@pytest.fixture(scope="module")
def grid48():
    return GridSpec(n=48, L=16.0)


@pytest.fixture(scope="module")
def angular():
    return AngularGrid(n_theta=24, n_phi=48)


def _radial_field(grid, prof):
    return radial_profile_field(grid, [prof, None, None, None])


# ---------------------------------------------------------------------------
# Norm catalog
# ---------------------------------------------------------------------------

def test_catalog_constructors():
    for spec in (MixedNormSpec.sup_in_space(),
                 MixedNormSpec.shell(),
                 MixedNormSpec.shell(b=8.0),
                 MixedNormSpec.shell(angular_order=1.0),
                 MixedNormSpec.weighted(),
                 MixedNormSpec.weighted(gradient=True),
                 MixedNormSpec.energy(),
                 MixedNormSpec.energy(angular_order=1.2)):
        assert spec.describe()


def test_catalog_rejects_foreign_combinations():
    with pytest.raises(ValueError):
        MixedNormSpec(math.inf, "sup")
    with pytest.raises(ValueError):
        MixedNormSpec(2.0, "energy")
    with pytest.raises(ValueError):
        MixedNormSpec(2.0, "shell", angular_exponent=0.5)
    with pytest.raises(ValueError):
        MixedNormSpec(2.0, "sup", gradient=True)


def test_time_combine_closed_forms():
    ts = np.linspace(0.0, 4.0, 33)
    vals = np.full_like(ts, 2.5)
    # constant integrand: trapezoid is exact
    assert abs(time_combine(ts, vals, 2.0) - 2.5 * 2.0) < 1e-12
    assert time_combine(ts, np.linspace(0, 1, 33), math.inf) == 1.0
    with pytest.raises(ValueError):
        time_combine(np.array([]), np.array([]), 2.0)


def test_mixed_norm_constant_trajectory(grid48):
    f = _radial_field(grid48, lambda r: np.exp(-((r - 1.0) / 1.5) ** 2))
    a = linf_norm(f)
    pairs = [(t, f) for t in np.linspace(0.0, 3.0, 13)]
    got = mixed_norm(pairs, MixedNormSpec.sup_in_space())
    assert abs(got - a * math.sqrt(3.0)) < 1e-12 * a


def test_mixed_norm_single_record_energy(grid48):
    f = _radial_field(grid48, lambda r: np.exp(-(r / 1.5) ** 2))
    got = mixed_norm([(0.7, f)], MixedNormSpec.energy())
    assert abs(got - h1_norm(f)) < 1e-12 * h1_norm(f)


def test_mixed_norm_rejects_defective_trajectories(grid48):
    with pytest.raises(ValueError):
        mixed_norm([], MixedNormSpec.sup_in_space())
    cfg = EvolutionConfig(dt=0.01, t_final=1.0, record_dt=0.2)
    ts = np.array([0.0, 0.2])
    traj = Trajectory(grid48, cfg, ts, ts, ts, ts, fields=None)
    with pytest.raises(ValueError, match="stored fields"):
        mixed_norm(traj, MixedNormSpec.sup_in_space())
    f = _radial_field(grid48, lambda r: np.exp(-(r / 1.5) ** 2))
    traj = Trajectory(grid48, cfg, ts, ts, ts, ts, fields=[f, f])
    with pytest.raises(ValueError, match="too sparse"):
        mixed_norm(traj, MixedNormSpec.sup_in_space())


# ---------------------------------------------------------------------------
# Shell sampling
# ---------------------------------------------------------------------------

def test_radial_shell_norm_closed_form(grid48):
    # for radial f the angular L^2 on each sphere is sqrt(4 pi) |f(r)|
    prof = lambda r: (np.exp(-((r - 1.2) / 1.6) ** 2)
                      + np.exp(-((r + 1.2) / 1.6) ** 2))
    f = _radial_field(grid48, prof)
    radii = shell_radii(grid48)
    want = math.sqrt(4.0 * math.pi) * np.abs(prof(radii)).max()
    got = spatial_norm(f, MixedNormSpec.shell())
    assert abs(got - want) < 2e-3 * want


def test_sector_shell_norm_closed_form(grid48, angular):
    # u = g(r) Phi: the basis is orthonormal, so the shell profile is |g|
    g = lambda r: r * np.exp(-((r - 1.0) / 1.7) ** 2)
    f = lift_callables(grid48, QuantumNumbers(0.5, 0.5, 1), g,
                       lambda r: np.zeros_like(r))
    radii = shell_radii(grid48)
    want = np.abs(g(radii)).max()
    got = spatial_norm(f, MixedNormSpec.shell(), angular, radii)
    assert abs(got - want) < 3e-3 * want


def test_tricubic_shell_sampling_accuracy(grid48, angular):
    # mirrored pair: even in r, hence smooth as a 3D function
    prof = lambda r: (np.exp(-((r - 1.5) / 1.8) ** 2)
                      + np.exp(-((r + 1.5) / 1.8) ** 2))
    f = _radial_field(grid48, prof)
    radii = np.linspace(0.5, 6.0, 40)
    _, _, samples = field_to_shells(f, radii, angular)
    want = prof(radii)[:, None, None]
    err = np.abs(samples[0] - want).max() / np.abs(want).max()
    assert err < 5e-3


# ---------------------------------------------------------------------------
# Angular Sobolev multiplier, sphere samples
# ---------------------------------------------------------------------------

def test_sphere_constant_is_fixed_point(angular):
    theta, phi = grid_angles(angular)
    vals = np.ones((theta.size, phi.size), dtype=complex)
    out = angular_sobolev(vals, 1.7, angular)
    np.testing.assert_allclose(out, vals, atol=1e-13)


def test_sphere_degree_one_eigenvalue(angular):
    theta, phi = grid_angles(angular)
    t2, p2 = np.meshgrid(theta, phi, indexing="ij")
    vals = ylm(1, 0, t2, p2)
    out = angular_sobolev(vals, 0.8, angular)
    np.testing.assert_allclose(out, 3.0 ** 0.4 * vals, rtol=1e-12, atol=1e-14)


def test_sphere_round_trip_inverse(angular):
    rng = np.random.default_rng(3)
    lmax = 8
    coef = rng.standard_normal((lmax + 1) ** 2) \
        + 1j * rng.standard_normal((lmax + 1) ** 2)
    vals = sh_synthesize(angular, coef, lmax)
    back = angular_sobolev(angular_sobolev(vals, 1.3, angular), -1.3, angular)
    assert np.abs(back - vals).max() < 1e-10 * np.abs(vals).max()


def test_sphere_operator_self_adjoint_positive(angular):
    rng = np.random.default_rng(5)
    lmax = 6
    mk = lambda: sh_synthesize(
        angular,
        rng.standard_normal((lmax + 1) ** 2)
        + 1j * rng.standard_normal((lmax + 1) ** 2),
        lmax)
    u, v = mk(), mk()
    w = quad_weights(angular)
    lu = angular_sobolev(u, 0.9, angular)
    lv = angular_sobolev(v, 0.9, angular)
    lhs = np.sum(w * lu * np.conj(v))
    rhs = np.sum(w * u * np.conj(lv))
    assert abs(lhs - rhs) < 1e-10 * abs(lhs)
    # symbol >= 1 for s > 0
    quad = np.sum(w * lu * np.conj(u)).real
    assert quad >= np.sum(w * np.abs(u) ** 2) * (1 - 1e-10)


def test_sphere_band_limit_refused(angular):
    theta, phi = grid_angles(angular)
    t2, p2 = np.meshgrid(theta, phi, indexing="ij")
    vals = ylm(5, 2, t2, p2)
    with pytest.raises(BandLimitError):
        angular_sobolev(vals, 0.5, angular, lmax=3)


# ---------------------------------------------------------------------------
# Angular Sobolev multiplier, 3D fields
# ---------------------------------------------------------------------------

def test_field_radial_passthrough(grid48):
    f = _radial_field(grid48, lambda r: (1 + 0.3 * r ** 2) * np.exp(-(r / 2.5) ** 2))
    out = angular_sobolev(f, 1.2)
    ball = position_radius(grid48) <= grid48.L
    err = np.abs((out.values - f.values)[:, ball]).max()
    assert err < 1e-10 * linf_norm(f)


def test_field_pure_degree_scales_and_commutes(grid48):
    # g(r) Y_2^1 is an eigenvector; scaling by g commutes with the operator
    theta, phi = norms._angles3d(grid48)
    r = position_radius(grid48)
    vals = np.zeros((4,) + r.shape, dtype=complex)
    vals[1] = r ** 2 * np.exp(-(r / 2.5) ** 2) * ylm(2, 1, theta, phi)
    f = SpinorField3D(grid48, vals)
    out = angular_sobolev(f, 0.7)
    ball = r <= grid48.L
    want = 7.0 ** 0.35 * vals
    err = np.abs((out.values - want)[:, ball]).max()
    assert err < 1e-10 * np.abs(vals).max()
    assert np.all(out.values[:, ~ball] == 0.0)


def test_field_band_limit_refused(grid48):
    # a width-1.5 envelope leaves real aliasing above the default tolerance
    theta, phi = norms._angles3d(grid48)
    r = position_radius(grid48)
    vals = np.zeros((4,) + r.shape, dtype=complex)
    vals[1] = r ** 2 * np.exp(-(r / 1.5) ** 2) * ylm(2, 1, theta, phi)
    with pytest.raises(BandLimitError, match="above degree"):
        angular_sobolev(SpinorField3D(grid48, vals), 0.7)


def test_field_corner_support_refused(grid48):
    # spheres past the inscribed ball wrap around the torus
    r = position_radius(grid48)
    vals = np.zeros((4,) + r.shape, dtype=complex)
    vals[0] = np.exp(-((r - 20.0) / 1.5) ** 2)
    with pytest.raises(BandLimitError, match="inscribed ball"):
        angular_sobolev(SpinorField3D(grid48, vals), 0.7)


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------

def test_weight_formulas_pointwise():
    r = np.geomspace(1e-3, 30.0, 400)
    sigma, eps = 1.5, 0.1
    want_log = r * (1 + np.abs(np.log(r))) ** sigma
    np.testing.assert_allclose(log_weight_half(sigma)(r), want_log, rtol=1e-12)
    want_jap = (1 + r ** 2) ** ((0.5 + eps) / 2)
    np.testing.assert_allclose(japanese_bracket(eps)(r), want_jap, rtol=1e-12)
    want_mix = np.sqrt(r) * np.abs(np.log(r)) ** (0.5 + eps) + r ** (1 + eps)
    np.testing.assert_allclose(mixed_growth(eps)(r), want_mix, rtol=1e-12)
    for fn in (log_weight_half(sigma), japanese_bracket(eps), mixed_growth(eps)):
        assert np.all(fn(r) > 0)


def test_weight_comparability_bounds(grid48):
    rep = weight_comparability(grid48)
    # frozen from a dense evaluation at the default (sigma, eps)
    assert 0.02 < rep.lo < 0.03
    assert 0.85 < rep.hi < 0.95
    assert "min" in rep.table()


# ---------------------------------------------------------------------------
# Radial half-wave kernel
# ---------------------------------------------------------------------------

def test_halfwave_constant_refit(grid48):
    fit = calibrate_halfwave_constant(grid48)
    assert abs(fit - HALFWAVE_RADIAL_CONSTANT) < 1e-6


def test_halfwave_zero_time_vanishes(grid48):
    f = _radial_field(grid48, lambda r: np.exp(-(r / 1.8) ** 2))
    assert l2_norm(halfwave_sine(f, 0.0)) < 1e-13


def test_maximal_check_on_reference_bump(grid48):
    rep = radial_halfwave_maximal_check(
        lambda r: np.exp(-(r / 1.8) ** 2), grid=grid48)
    assert rep.two_method_rel < 1e-5
    assert 0.9 < rep.domination_constant < 2.0
    assert rep.l2t_ratio < 1.0
    assert "domination" in rep.table()


# ---------------------------------------------------------------------------
# Estimate harness
# ---------------------------------------------------------------------------

def test_unknown_estimate_refused():
    with pytest.raises(UnknownEstimate, match="homdir"):
        verify_estimate("nosuch", 1)


def test_inadmissible_potential_refused():
    big = PotentialSpec.gaussian_bump(amplitude1=5.0)
    with pytest.raises(InadmissiblePotential):
        verify_estimate("endV", 1, potential=big, t_final=1.0, refine=False)


def test_free_endpoint_small_ensemble_passes():
    rep = verify_estimate("homdir", 4, seed=7, t_final=2.0, refine=True)
    assert rep.ensemble == 4
    assert len(rep.ratios) == 4
    assert all(np.isfinite(rep.ratios))
    assert all(b > 0 for b in rep.rhs)
    assert 0 < rep.max_ratio < 2.0
    assert rep.refinement_growth is not None and rep.refinement_growth < 0.25
    assert rep.passed
    assert "ratio_vs_split_norm" in rep.extra
    assert rep.resamples == 0


def test_harness_deterministic_after_cache_clear():
    kw = dict(n_samples=3, seed=19, t_final=2.0, refine=False)
    a = verify_estimate("homdir", **kw)
    norms._GROUP_CACHE.clear()
    b = verify_estimate("homdir", **kw)
    assert a.fingerprint == b.fingerprint
    assert a.ratios == b.ratios


def test_zero_potential_degenerates_to_free_flow():
    kw = dict(n_samples=3, seed=7, t_final=2.0, refine=False)
    free = verify_estimate("homdir", **kw)
    pert = verify_estimate("endV", potential="zero", **kw)
    # same draws, and a Strang step with V = 0 is exactly the free step
    for a, b in zip(free.lhs, pert.lhs):
        assert abs(a - b) < 1e-10 * a
    smooth = verify_estimate("smooth_l2", potential="zero", **kw)
    assert all(np.isfinite(smooth.ratios)) and smooth.max_ratio > 0


def test_source_estimate_small_ensemble():
    rep = verify_estimate("stdir", 2, t_final=2.5, refine=False)
    assert all(np.isfinite(rep.ratios))
    assert 0 < rep.max_ratio < 10.0


def test_angular_endpoint_small_ensemble():
    rep = verify_estimate("freedirac_ang", 2, t_final=2.5, refine=False)
    assert all(np.isfinite(rep.ratios))
    assert 0 < rep.max_ratio < 10.0


def test_sector_estimate_small_ensemble():
    rep = verify_estimate("endV_v", 2, t_final=3.0, refine=False)
    assert all(np.isfinite(rep.ratios))
    assert 0 < rep.max_ratio < 10.0


def test_angular_lp_probe():
    rep = verify_estimate("mnnop", 2, t_final=3.0, angular_p=4.0, refine=False)
    assert all(np.isfinite(rep.ratios))
    with pytest.raises(ValueError, match="not tabulated"):
        verify_estimate("mnnop", 2, t_final=3.0, angular_p=3.0, refine=False)
    # all p values reuse the one recorded flow
    slope, reports = angular_lp_slope(2, t_final=3.0)
    assert set(reports) == {2.0, 4.0, 8.0, 16.0}
    assert np.isfinite(slope)
    assert slope <= 0.6


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def _toy_report(**kw):
    base = dict(estimate="homdir", statement="s", ensemble=2,
                lhs=[1.0, 2.0], rhs=[2.0, 2.0], ratios=[0.5, 1.0],
                max_ratio=1.0, cap=50.0, t_final=5.0, fingerprint="abc")
    base.update(kw)
    return NormReport(**base)


def test_report_pass_logic():
    assert _toy_report().passed
    assert _toy_report(refined_max_ratio=1.1).passed
    assert not _toy_report(refined_max_ratio=1.3).passed       # 30% growth
    assert not _toy_report(max_ratio=60.0).passed              # over cap
    assert not _toy_report(ratios=[0.5, math.inf]).passed
    assert not _toy_report(rhs=[2.0, 0.0]).passed
    rep = _toy_report(refined_max_ratio=1.1)
    assert abs(rep.refinement_growth - 0.1) < 1e-12
    assert "statement: s" in rep.summary_lines()


def test_report_csv_deterministic(tmp_path):
    rep = _toy_report(extra={"alt": [0.4, 0.9]})
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    rep.write_csv(p1)
    rep.write_csv(p2)
    assert file_digest(p1) == file_digest(p2)
    text = p1.read_text()
    assert text.startswith("#")
    assert "sample,lhs,rhs,ratio,alt" in text
