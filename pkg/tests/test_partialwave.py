"""Angular sectors, the reduced radial system, and cross-solver checks."""

import numpy as np
import pytest

from diraclab.clifford import GridSpec, alpha_dot_apply, l2_norm
from diraclab.potential import PotentialSpec
from diraclab.propagator import EvolutionConfig, SolverBlowup
from diraclab.partialwave import (
    CFLViolation,
    QuantumNumbers,
    RadialSpinorState,
    SectorNotApplicable,
    SectorProfile,
    UnsupportedQuantumNumbers,
    basis_samples,
    build_basis,
    cross_validate,
    cubic_sector_check,
    dirac_action_check,
    enumerate_sectors,
    evolve_radial,
    lift,
    lift_callables,
    off_sector_fraction,
    pauli_spinor,
    potential_sector_check,
    project,
    radial_dirac_apply,
    reduce_nonlinearity,
    sector_component_table,
    sector_l2,
    write_radial_trajectory,
)
from diraclab.partialwave import _default_profiles, _derivative4
from diraclab.sphere import AngularGrid, grid_angles, quad_weights

J_HALF = QuantumNumbers(0.5, 0.5, 1)


@pytest.fixture(scope="module")
def grid48():
    return GridSpec(n=48, L=12.0)


@pytest.fixture(scope="module")
def angular():
    return AngularGrid(n_theta=24, n_phi=48)


# ---------------------------------------------------------------------------
# Quantum numbers and angular bases
# ---------------------------------------------------------------------------

def test_quantum_number_validation():
    with pytest.raises(ValueError):
        QuantumNumbers(0.6, 0.5, 1)
    with pytest.raises(ValueError):
        QuantumNumbers(0.5, 1.5, 1)
    with pytest.raises(ValueError):
        QuantumNumbers(0.5, 0.5, 2)
    with pytest.raises(ValueError):
        QuantumNumbers(0.5, 0.5, 0)


def test_orbital_degrees():
    assert (J_HALF.l_plus, J_HALF.l_minus) == (1, 0)
    neg = QuantumNumbers(0.5, -0.5, -1)
    assert (neg.l_plus, neg.l_minus) == (0, 1)
    two = QuantumNumbers(1.5, 0.5, 2)
    assert (two.l_plus, two.l_minus) == (2, 1)


def test_sector_enumeration():
    sectors = enumerate_sectors(3.5)
    assert len(sectors) == 40
    assert len(set(sectors)) == 40
    js = sorted({q.j for q in sectors})
    assert js == [0.5, 1.5, 2.5, 3.5]
    for q in sectors:
        assert abs(q.kappa) == int(round(q.j + 0.5))


def test_lowest_sector_closed_form():
    # kappa = +1, m_j = +1/2: upper pair carries i/(2 sqrt(pi)) times
    # (cos(theta), e^{i phi} sin(theta)); the lower pair is the constant
    # spinor 1/(2 sqrt(pi)) in its first component.
    theta = np.array([0.2, 0.9, 1.7, 2.8])
    phi = np.array([0.0, 1.1, 3.0, 5.2])
    plus, minus = basis_samples(J_HALF, theta, phi)
    c = 1j / (2.0 * np.sqrt(np.pi))
    np.testing.assert_allclose(plus[0], c * np.cos(theta), atol=1e-15)
    np.testing.assert_allclose(plus[1], c * np.exp(1j * phi) * np.sin(theta), atol=1e-15)
    np.testing.assert_allclose(plus[2:], 0.0, atol=1e-15)
    np.testing.assert_allclose(minus[2], 1.0 / (2.0 * np.sqrt(np.pi)), atol=1e-15)
    np.testing.assert_allclose(minus[[0, 1, 3]], 0.0, atol=1e-15)


def test_coupling_weights_normalized():
    for qn in enumerate_sectors(3.5):
        rows = sector_component_table(qn)
        for slot in (0, 1):
            total = sum(abs(c) ** 2 for _, s, c, _, _ in rows if s == slot)
            assert abs(total - 1.0) < 1e-13


def test_all_sectors_orthonormal(angular):
    theta, phi = grid_angles(angular)
    w = quad_weights(angular)
    stack = []
    for qn in enumerate_sectors(3.5):
        plus, minus = basis_samples(qn, theta[:, None], phi[None, :])
        stack.extend([plus, minus])
    basis = np.stack(stack)
    gram = np.einsum("ij,acij,bcij->ab", w, np.conj(basis), basis)
    defect = np.max(np.abs(gram - np.eye(len(stack))))
    assert defect < 1e-10


def test_radial_flip_identity():
    # sigma.xhat maps the kappa harmonic to minus the -kappa one.
    theta = np.linspace(0.1, 3.0, 7)
    phi = np.linspace(0.0, 6.0, 7)
    sx = np.sin(theta) * np.cos(phi)
    sy = np.sin(theta) * np.sin(phi)
    sz = np.cos(theta)
    sigma_dot = np.array([[sz, sx - 1j * sy], [sx + 1j * sy, -sz]])
    for kappa in (-3, -2, -1, 1, 2, 3):
        j = abs(kappa) - 0.5
        for m_j in (-j, 0.5) if j >= 0.5 else (-j,):
            om = pauli_spinor(kappa, m_j, theta, phi)
            flipped = pauli_spinor(-kappa, m_j, theta, phi)
            got = np.einsum("abx,bx->ax", sigma_dot, om)
            np.testing.assert_allclose(got, -flipped, atol=1e-13)


def test_swap_under_radial_matrix():
    # i beta (alpha.xhat) exchanges the plus and minus basis functions.
    theta = np.array([0.3, 1.2, 2.0])
    phi = np.array([0.5, 2.5, 4.0])
    x = np.sin(theta) * np.cos(phi)
    y = np.sin(theta) * np.sin(phi)
    z = np.cos(theta)
    for kappa in (-2, -1, 1, 2):
        qn = QuantumNumbers(abs(kappa) - 0.5, 0.5, kappa)
        plus, minus = basis_samples(qn, theta, phi)
        for src, dst in ((plus, minus), (minus, plus)):
            m = alpha_dot_apply(x, y, z, src)
            m[:2] *= 1j
            m[2:] *= -1j
            np.testing.assert_allclose(m, dst, atol=1e-13)


def test_unsupported_sectors_refused():
    with pytest.raises(UnsupportedQuantumNumbers):
        build_basis(QuantumNumbers(4.5, 0.5, 5))
    with pytest.raises(UnsupportedQuantumNumbers):
        build_basis(QuantumNumbers(3.5, 0.5, 4), AngularGrid(n_theta=3, n_phi=6))


def test_basis_pair_orthonormal_default_grid():
    pair = build_basis(QuantumNumbers(1.5, -0.5, -2))
    assert pair.orthonormality_defect() < 1e-10


# ---------------------------------------------------------------------------
# Projection and lifting
# ---------------------------------------------------------------------------

def test_lift_project_roundtrip():
    grid = GridSpec(n=32, L=10.0)
    prof_p, prof_m = _default_profiles(J_HALF, 1.6)
    field = lift_callables(grid, J_HALF, prof_p.amplitude, prof_m.amplitude)
    radii = np.linspace(0.3125, 4.0, 60)
    back = project(field, J_HALF, radii)
    scale = np.max(np.abs(prof_p.reduced(radii)))
    assert np.max(np.abs(back.u_plus - prof_p.reduced(radii))) < 1e-5 * scale
    assert np.max(np.abs(back.u_minus - prof_m.reduced(radii))) < 1e-5 * scale


def test_project_foreign_sector_vanishes():
    grid = GridSpec(n=32, L=10.0)
    prof_p, prof_m = _default_profiles(J_HALF, 1.6)
    field = lift_callables(grid, J_HALF, prof_p.amplitude, prof_m.amplitude)
    radii = np.linspace(0.3125, 4.0, 60)
    foreign = project(field, QuantumNumbers(0.5, 0.5, -1), radii)
    top = max(np.max(np.abs(foreign.u_plus)), np.max(np.abs(foreign.u_minus)))
    assert top < 1e-6 * np.max(np.abs(prof_p.reduced(radii)))


def test_lifted_data_stays_in_sector(grid48):
    prof_p, prof_m = _default_profiles(J_HALF, 1.8)
    field = lift_callables(grid48, J_HALF, prof_p.amplitude, prof_m.amplitude)
    assert off_sector_fraction(field, J_HALF) < 1e-10


def test_spline_lift_matches_callable_lift(grid48):
    prof_p, prof_m = _default_profiles(J_HALF, 1.8)
    direct = lift_callables(grid48, J_HALF, prof_p.amplitude, prof_m.amplitude)
    nodes = (12.0 / 256) * np.arange(1, 257)
    state = RadialSpinorState(J_HALF, nodes,
                              prof_p.reduced(nodes).astype(complex),
                              prof_m.reduced(nodes).astype(complex))
    splined = lift(state, grid48)
    diff = l2_norm(type(direct)(grid48, direct.values - splined.values))
    assert diff < 1e-6 * l2_norm(direct)


# ---------------------------------------------------------------------------
# Operator actions on a sector
# ---------------------------------------------------------------------------

def test_dirac_action_coefficients(grid48):
    for kappa in (-1, 1, 2):
        qn = QuantumNumbers(abs(kappa) - 0.5, 0.5, kappa)
        rep = dirac_action_check(qn, grid48, width=1.8)
        assert abs(rep.coef_plus - kappa) < 1e-6
        assert abs(rep.coef_minus - kappa) < 1e-6
        assert rep.leakage < 1e-8
        assert rep.passed()
        assert "kappa" in rep.table() or "coefficient" in rep.table()


def test_potential_keeps_sector(grid48):
    spec = PotentialSpec.smooth_core(amplitude1=0.04, amplitude2=0.03,
                                     r0=1.5, width=2.2)
    leak, resid = potential_sector_check(J_HALF, grid48, spec, width=1.8)
    assert leak < 1e-5
    assert resid < 1e-5


def test_cubic_keeps_sector(grid48):
    assert cubic_sector_check(J_HALF, grid48, width=2.4) < 1e-4
    with pytest.raises(SectorNotApplicable):
        cubic_sector_check(QuantumNumbers(1.5, 0.5, 2), grid48)


def test_bracket_reduction_on_half_sector():
    nodes = np.linspace(1 / 32, 12.0, 384)
    prof_p, prof_m = _default_profiles(J_HALF, 2.0)
    state = RadialSpinorState(J_HALF, nodes,
                              prof_p.reduced(nodes).astype(complex),
                              prof_m.reduced(nodes).astype(complex))
    rep = reduce_nonlinearity(state)
    assert rep.fluctuation < 1e-12
    a_p, a_m = state.amplitudes()
    want = (np.abs(a_p) ** 2 - np.abs(a_m) ** 2) / (4.0 * np.pi)
    np.testing.assert_allclose(rep.mean_profile.real, want, atol=1e-13)
    np.testing.assert_allclose(rep.mean_profile.imag, 0.0, atol=1e-13)


def test_bracket_signs_on_single_slots():
    nodes = np.linspace(1 / 32, 12.0, 384)
    prof_p, prof_m = _default_profiles(J_HALF, 2.0)
    zero = np.zeros(nodes.size, dtype=complex)
    plus_only = RadialSpinorState(J_HALF, nodes, prof_p.reduced(nodes).astype(complex), zero)
    minus_only = RadialSpinorState(J_HALF, nodes, zero, prof_m.reduced(nodes).astype(complex))
    rp = reduce_nonlinearity(plus_only)
    rm = reduce_nonlinearity(minus_only)
    a_p = np.abs(plus_only.amplitudes()[0]) ** 2 / (4.0 * np.pi)
    a_m = np.abs(minus_only.amplitudes()[1]) ** 2 / (4.0 * np.pi)
    np.testing.assert_allclose(rp.mean_profile.real, a_p, atol=1e-13)
    np.testing.assert_allclose(rm.mean_profile.real, -a_m, atol=1e-13)


def test_bracket_reduction_refuses_higher_sectors():
    nodes = np.linspace(1 / 32, 8.0, 128)
    state = RadialSpinorState(QuantumNumbers(1.5, 0.5, 2), nodes,
                              np.exp(-nodes ** 2).astype(complex) * nodes ** 3,
                              np.zeros(nodes.size, dtype=complex))
    with pytest.raises(SectorNotApplicable):
        reduce_nonlinearity(state)


# ---------------------------------------------------------------------------
# Radial finite differences and evolution
# ---------------------------------------------------------------------------

def test_derivative_fourth_order():
    prof = SectorProfile(l=1, c=0.25, scale=1.0, width=1.5)
    errs = []
    for n in (128, 256):
        dr = 8.0 / n
        r = dr * np.arange(1, n + 1)
        got = _derivative4(prof.reduced(r).astype(complex), dr, +1, +1)
        errs.append(np.max(np.abs(got - prof.reduced_derivative(r))))
    assert errs[1] < 1e-5
    assert errs[0] / errs[1] > 12.0


def test_radial_operator_matches_analytic():
    n, R = 512, 12.0
    dr = R / n
    r = dr * np.arange(1, n + 1)
    prof_p, prof_m = _default_profiles(J_HALF, 1.5)
    state = RadialSpinorState(J_HALF, r,
                              prof_p.reduced(r).astype(complex),
                              prof_m.reduced(r).astype(complex))
    d_plus, d_minus = radial_dirac_apply(state)
    want_plus = -prof_m.reduced_derivative(r) + state.qn.kappa * prof_m.reduced(r) / r
    want_minus = prof_p.reduced_derivative(r) + state.qn.kappa * prof_p.reduced(r) / r
    scale = np.max(np.abs(want_minus))
    assert np.max(np.abs(d_plus - want_plus)) < 1e-6 * scale
    assert np.max(np.abs(d_minus - want_minus)) < 1e-6 * scale


def _half_sector_state(n_r=256, R=16.0, width=2.0):
    dr = R / n_r
    r = dr * np.arange(1, n_r + 1)
    prof_p, prof_m = _default_profiles(J_HALF, width)
    return RadialSpinorState(J_HALF, r,
                             prof_p.reduced(r).astype(complex),
                             prof_m.reduced(r).astype(complex))


def test_cfl_guard():
    state = _half_sector_state()
    dr = float(state.r_grid[1] - state.r_grid[0])
    bad = EvolutionConfig(dt=dr, t_final=4 * dr, record_dt=4 * dr)
    with pytest.raises(CFLViolation):
        evolve_radial(state, None, bad, nonlinearity="none")


def test_radial_free_evolution_conserves():
    state = _half_sector_state()
    cfg = EvolutionConfig(dt=0.025, t_final=1.0, record_dt=0.25)
    traj = evolve_radial(state, None, cfg, nonlinearity="none")
    assert np.max(np.abs(traj.l2 - traj.l2[0])) < 1e-8 * traj.l2[0]
    assert np.max(np.abs(traj.h1 - traj.h1[0])) < 1e-8 * traj.h1[0]


def test_radial_nonlinear_evolution_conserves_mass():
    state = _half_sector_state()
    spec = PotentialSpec.smooth_core(amplitude1=0.04, amplitude2=0.03,
                                     r0=2.0, width=2.8)
    cfg = EvolutionConfig(dt=0.025, t_final=1.0, record_dt=0.25)
    traj = evolve_radial(state, spec, cfg, nonlinearity="beta_form")
    assert np.max(np.abs(traj.l2 - traj.l2[0])) < 1e-7 * traj.l2[0]


def test_radial_rejects_angular_potential():
    from diraclab.potential import AngularPerturbation

    state = _half_sector_state()
    pert = AngularPerturbation(l=1, m=0, amplitude=0.01, width=2.0)
    spec = PotentialSpec.gaussian_bump(amplitude1=0.01, angular=pert)
    cfg = EvolutionConfig(dt=0.025, t_final=0.1, record_dt=0.1)
    with pytest.raises(SectorNotApplicable):
        evolve_radial(state, spec, cfg, nonlinearity="none")


def test_radial_blowup_guard():
    state = _half_sector_state(n_r=128, R=8.0, width=1.6)
    state = RadialSpinorState(state.qn, state.r_grid,
                              40.0 * state.u_plus, state.u_minus)
    cfg = EvolutionConfig(dt=0.03125, t_final=4.0, record_dt=1.0)
    with pytest.raises(SolverBlowup) as info:
        evolve_radial(state, None, cfg, nonlinearity="beta_form")
    assert info.value.t > 0.0
    assert info.value.step >= 1


def test_radial_trajectory_file_roundtrip(tmp_path):
    state = _half_sector_state(n_r=32, R=8.0)
    cfg = EvolutionConfig(dt=0.05, t_final=0.2, record_dt=0.1)
    traj = evolve_radial(state, None, cfg, nonlinearity="none", store_states=True)
    out = tmp_path / "radial.csv"
    write_radial_trajectory(out, traj, header_comments=["demo run"])
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "# demo run"
    assert lines[1].startswith("# r nodes: 32")
    header = lines[2].split(",")
    assert header[0] == "t"
    assert len(header) == 1 + 4 * 32
    rows = [np.array([float(v) for v in ln.split(",")]) for ln in lines[3:]]
    assert len(rows) == traj.times.size
    got_final = rows[-1][1::4] + 1j * rows[-1][2::4]
    np.testing.assert_allclose(got_final, traj.states[-1].u_plus, atol=1e-10)

    bare = evolve_radial(state, None, cfg, nonlinearity="none")
    with pytest.raises(ValueError):
        write_radial_trajectory(tmp_path / "bare.csv", bare)


# ---------------------------------------------------------------------------
# Cross-solver comparison
# ---------------------------------------------------------------------------

def test_cross_solver_free_flow():
    prof_p, prof_m = _default_profiles(J_HALF, 1.6)
    rep = cross_validate(J_HALF, prof_p.amplitude, prof_m.amplitude, None,
                         GridSpec(n=32, L=10.0), n_r=320,
                         dt_3d=0.0125, dt_radial=0.0125, t_final=0.5,
                         nonlinearity="none")
    assert rep.rel_l2 < 1e-4
    assert rep.radial_l2_drift < 1e-8


def test_cross_solver_with_potential_and_cubic():
    prof_p, prof_m = _default_profiles(J_HALF, 1.6)
    spec = PotentialSpec.smooth_core(amplitude1=0.04, amplitude2=0.03,
                                     r0=1.5, width=2.0)
    rep = cross_validate(J_HALF, prof_p.amplitude, prof_m.amplitude, spec,
                         GridSpec(n=32, L=10.0), n_r=320,
                         dt_3d=0.0125, dt_radial=0.0125, t_final=0.5,
                         nonlinearity="beta_form")
    assert rep.rel_l2 < 1e-2
    assert rep.radial_l2_drift < 1e-8
    assert "relative L2 discrepancy" in rep.table()
