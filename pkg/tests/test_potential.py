"""Potential assembly, admissibility classes, and pointwise application."""

import numpy as np
import pytest

from diraclab.clifford import GridSpec, SpinorField3D, l2_norm, radial_profile_field
from diraclab.potential import (
    AngularPerturbation,
    PotentialSpec,
    apply,
    assemble,
    calibrate_amplitude,
    check_admissibility,
)
from diraclab.propagator import CubicNonlinearity, EvolutionConfig, evolve
from diraclab.weights import japanese_bracket, log_weight_half


@pytest.fixture(scope="module")
def grid32():
    return GridSpec(n=32, L=12.0)


def _random_field(grid, seed=0):
    rng = np.random.default_rng(seed)
    shape = (4, grid.n, grid.n, grid.n)
    return SpinorField3D(grid, rng.standard_normal(shape)
                         + 1j * rng.standard_normal(shape))


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

def test_scalar_potential_scales_pointwise(grid32):
    spec = PotentialSpec.gaussian_bump(amplitude1=0.3, r0=2.0, width=1.5)
    u = _random_field(grid32)
    out = apply(spec, u)
    pot = assemble(spec, grid32)
    np.testing.assert_allclose(out.values, pot.v1 * u.values, atol=1e-15)
    assert pot.v2.max() == 0.0


def test_second_term_eigenvalues(grid32):
    # (i beta (alpha.xhat))^2 = I, so the matrix at x has eigenvalues +-V2
    spec = PotentialSpec.shell(amplitude1=0.0, amplitude2=0.04)
    pot = assemble(spec, grid32)
    i, j, k = 20, 17, 16  # node at r ~ 3, near the shell peak
    m = pot.dense_matrix()[:, :, i, j, k]
    v2 = pot.v2[i, j, k]
    assert v2 > 1e-4
    np.testing.assert_allclose(np.linalg.eigvalsh(m), [-v2, -v2, v2, v2],
                               atol=1e-13)


def test_involution_of_second_term(grid32):
    spec = PotentialSpec.shell(amplitude1=0.0, amplitude2=0.05)
    pot = assemble(spec, grid32)
    u = _random_field(grid32, seed=1)
    twice = apply(pot, apply(pot, u))
    want = pot.v2 ** 2 * u.values
    scale = np.abs(want).max()
    assert np.abs(twice.values - want).max() < 1e-13 * max(scale, 1.0)


def test_assembled_matrix_hermitian(grid32):
    spec = PotentialSpec.smooth_core(
        amplitude1=0.03, amplitude2=0.02, r0=1.5, width=2.2,
        angular=AngularPerturbation(amplitude=0.01))
    dense = assemble(spec, grid32).dense_matrix()
    defect = np.abs(dense - np.conj(np.swapaxes(dense, 0, 1))).max()
    assert defect < 1e-14


def test_quadratic_form_real(grid32):
    spec = PotentialSpec.smooth_core(amplitude1=0.03, amplitude2=0.02,
                                     r0=1.5, width=2.2)
    u = _random_field(grid32, seed=2)
    vu = apply(spec, u)
    inner = np.sum(np.conj(u.values) * vu.values, axis=0)
    mag2 = np.sum(np.abs(u.values) ** 2, axis=0)
    assert np.abs(inner.imag).max() < 1e-13 * mag2.max()


def test_singular_profile_clamped_at_origin(grid32):
    spec = PotentialSpec.saturating_vhp(amplitude1=0.05)
    pot = assemble(spec, grid32)
    o = grid32.n // 2
    clamp = spec.profile(1, np.asarray([0.5 * grid32.dx]))[0]
    assert pot.v1[o, o, o] == pytest.approx(clamp, rel=1e-12)
    assert pot.v2[o, o, o] == 0.0


def test_grid_mismatch_refused(grid32):
    pot = assemble(PotentialSpec.gaussian_bump(), GridSpec(n=24, L=12.0))
    u = _random_field(grid32)
    with pytest.raises(ValueError, match="different grids"):
        apply(pot, u)


def test_table_profile_reproduces_nodes():
    r = [0.5, 1.0, 2.0, 4.0, 8.0]
    v = [0.01, 0.03, 0.02, 0.005, 0.0]
    spec = PotentialSpec.from_table(r, v)
    np.testing.assert_allclose(spec.profile(1, np.asarray(r)), v, atol=1e-15)
    assert spec.profile(1, np.asarray([9.0]))[0] == 0.0
    assert spec.profile(2, np.asarray([1.0]))[0] == 0.0
    with pytest.raises(ValueError, match="increasing"):
        PotentialSpec.from_table([1.0, 1.0], [0.0, 0.0])


# ---------------------------------------------------------------------------
# Admissibility
# ---------------------------------------------------------------------------

def test_zero_potential_admissible(grid32):
    rep = check_admissibility(PotentialSpec.zero(), grid32, "vhp")
    assert all(row.sup_ratio == 0.0 for row in rep.rows)
    assert rep.passed


def test_saturating_profile_nearly_flat(grid32):
    spec = PotentialSpec.saturating_vhp(amplitude1=0.05)
    r = np.geomspace(0.2, 20.0, 300)
    ratio = (spec.profile(1, r) * japanese_bracket(spec.eps)(r)
             * log_weight_half(spec.sigma)(r))
    # |V| itself spans orders of magnitude; the weighted ratio does not
    assert ratio.max() / ratio.min() < 5.0


def test_calibrated_potential_passes_class(grid32):
    seed = PotentialSpec.saturating_vhp(amplitude1=1.0)
    cal = calibrate_amplitude(seed, grid32, "vhp", 0.05)
    rep = check_admissibility(cal, grid32, "vhp", delta=0.05)
    assert rep.passed
    assert max(row.sup_ratio for row in rep.rows) <= 0.05
    assert "delta" in rep.table()


def test_constant_potential_fails_with_growing_sup():
    const = PotentialSpec.from_table([0.01, 30.0], [0.05, 0.05])
    small = check_admissibility(const, GridSpec(n=32, L=8.0), "vhp")
    big = check_admissibility(const, GridSpec(n=32, L=16.0), "vhp")
    assert not small.passed and not big.passed
    assert big.rows[0].sup_ratio > small.rows[0].sup_ratio > 10 * 0.05


def test_v_class_bounds(grid32):
    spec = PotentialSpec.smooth_core(amplitude1=0.01, amplitude2=0.008,
                                     r0=1.5, width=2.5)
    rep = check_admissibility(spec, grid32, "v_class")
    assert rep.passed
    with pytest.raises(ValueError, match="admissibility class"):
        check_admissibility(spec, grid32, "nosuch")


def test_calibrate_rejects_zero():
    with pytest.raises(ValueError, match="zero potential"):
        calibrate_amplitude(PotentialSpec.zero(), GridSpec(n=24, L=8.0))


# ---------------------------------------------------------------------------
# Flow-level consequence of hermiticity
# ---------------------------------------------------------------------------

def test_perturbed_flow_conserves_l2(grid32):
    spec = PotentialSpec.smooth_core(amplitude1=0.04, amplitude2=0.03,
                                     r0=1.5, width=2.2)
    prof = lambda r: (np.exp(-((r - 1.0) / 1.4) ** 2)
                      + np.exp(-((r + 1.0) / 1.4) ** 2))
    f = radial_profile_field(grid32, [prof, None, None, None])
    cfg = EvolutionConfig(dt=0.05, t_final=10.0, record_dt=1.0)
    traj = evolve(f, spec, CubicNonlinearity.none(), cfg)
    drift = np.abs(np.asarray(traj.l2) - traj.l2[0]).max() / traj.l2[0]
    assert drift < 1e-6
