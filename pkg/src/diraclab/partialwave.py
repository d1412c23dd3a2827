"""Angular momentum sectors and the reduced radial dynamics.

A 4-spinor field in the sector labeled (j, m_j, kappa) is a pair of
radial profiles against the orthonormal angular basis (phi_plus,
phi_minus).  We store the reduced profiles (amplitude times r), so the
sector inner product is a plain integral in dr and both profiles vanish
at the origin whatever the sector.  Projection onto a sector goes
through Fourier space: the plane-wave expansion in spherical waves
turns each angular channel of the trig interpolant into an exact
Bessel-weighted shell sum, so no real-space interpolation error enters.

The induced radial operator is never transcribed; dirac_action_check
fits its 1/r coefficients from the action of the full 3D operator and
reports them, and the radial solver consumes the fitted integers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import spherical_jn

from .clifford import (
    ArrayC,
    ArrayR,
    GridSpec,
    SpinorField3D,
    k_vectors,
    l2_norm,
    position_radius,
    position_unit,
    spectral_coefficients,
)
from .potential import PotentialSpec
from .propagator import EvolutionConfig, SolverBlowup
from .sphere import AngularGrid, grid_angles, quad_weights, ylm

FOUR_PI = 4.0 * np.pi


class UnsupportedQuantumNumbers(NotImplementedError):
    """Sector outside the built table (j cap or quadrature band limit)."""


class SectorNotApplicable(ValueError):
    """Operation only defined on j = 1/2 sectors."""


class CFLViolation(ValueError):
    """Radial time step too large for the grid spacing."""


# ---------------------------------------------------------------------------
# Quantum numbers and the two-component angular spinors
# ---------------------------------------------------------------------------

def _l_of_kappa(kappa: int) -> int:
    return kappa if kappa > 0 else -kappa - 1


@dataclass(frozen=True)
class QuantumNumbers:
    """Sector label (j, m_j, kappa); j and m_j are half-integers."""

    j: float
    m_j: float
    kappa: int

    def __post_init__(self):
        two_j = 2 * self.j
        if abs(two_j - round(two_j)) > 1e-12 or round(two_j) < 1 or round(two_j) % 2 == 0:
            raise ValueError(f"j must be a positive half-integer, got {self.j}")
        two_m = 2 * self.m_j
        if abs(two_m - round(two_m)) > 1e-12 or round(two_m) % 2 == 0:
            raise ValueError(f"m_j must be a half-integer, got {self.m_j}")
        if abs(self.m_j) > self.j + 1e-12:
            raise ValueError(f"|m_j| = {abs(self.m_j)} exceeds j = {self.j}")
        if abs(self.kappa) != round(self.j + 0.5):
            raise ValueError(
                f"kappa must be +-(j + 1/2) = +-{round(self.j + 0.5)}, got {self.kappa}"
            )

    @property
    def l_plus(self) -> int:
        """Orbital degree of the upper pair."""
        return _l_of_kappa(self.kappa)

    @property
    def l_minus(self) -> int:
        """Orbital degree of the lower pair."""
        return _l_of_kappa(-self.kappa)

    def origin_parity(self, slot: int) -> int:
        """Parity of the reduced profile's smooth extension through r = 0.

        The reduced profile behaves like r^(l+1) times an even function,
        slot 0 for the plus profile and 1 for the minus one.
        """
        l = self.l_plus if slot == 0 else self.l_minus
        return -1 if l % 2 == 0 else 1


def enumerate_sectors(j_max: float = 3.5) -> list[QuantumNumbers]:
    """All (j, m_j, kappa) with j <= j_max; 4j+2 entries per j."""
    out = []
    two_j = 1
    while two_j / 2 <= j_max + 1e-12:
        j = two_j / 2
        kap = (two_j + 1) // 2
        for two_m in range(-two_j, two_j + 1, 2):
            for kappa in (-kap, kap):
                out.append(QuantumNumbers(j=j, m_j=two_m / 2, kappa=kappa))
        two_j += 2
    return out


def _coupling(kappa: int, m_j: float) -> tuple[float, float, int]:
    """Weights (c_up, c_dn) on Y_l^{m_j -/+ 1/2} for the 2-spinor of kappa.

    Closed forms of the spin-1/2 Clebsch-Gordan coefficients with the
    Condon-Shortley convention baked into ylm.
    """
    l = _l_of_kappa(kappa)
    den = 2.0 * l + 1.0
    if kappa < 0:  # j = l + 1/2
        c_up = np.sqrt((l + 0.5 + m_j) / den)
        c_dn = np.sqrt((l + 0.5 - m_j) / den)
    else:  # j = l - 1/2
        c_up = -np.sqrt((l + 0.5 - m_j) / den)
        c_dn = np.sqrt((l + 0.5 + m_j) / den)
    return c_up, c_dn, l


def pauli_spinor(kappa: int, m_j: float, theta: ArrayR, phi: ArrayR) -> ArrayC:
    """The 2-spinor spherical harmonic for (kappa, m_j), shape (2, ...)."""
    c_up, c_dn, l = _coupling(kappa, m_j)
    shape = np.broadcast_shapes(np.shape(theta), np.shape(phi))
    out = np.zeros((2,) + shape, dtype=np.complex128)
    m_up = int(round(m_j - 0.5))
    m_dn = int(round(m_j + 0.5))
    if c_up != 0.0 and abs(m_up) <= l:
        out[0] = c_up * ylm(l, m_up, theta, phi)
    if c_dn != 0.0 and abs(m_dn) <= l:
        out[1] = c_dn * ylm(l, m_dn, theta, phi)
    return out


def sector_component_table(qn: QuantumNumbers) -> list[tuple[int, int, complex, int, int]]:
    """Angular content of each nonzero 3D component of a sector field.

    Rows are (component, slot, coefficient, l, m): component `component`
    of the field equals coefficient * amplitude_slot(r) * Y_l^m, with
    slot 0 the plus profile and 1 the minus one.  The upper pair carries
    -i times the kappa spinor, the lower pair the -kappa spinor.
    """
    rows = []
    for slot, kap, phase, offset in ((0, qn.kappa, -1j, 0), (1, -qn.kappa, 1.0, 2)):
        c_up, c_dn, l = _coupling(kap, qn.m_j)
        for comp, c, dm in ((offset, c_up, -1), (offset + 1, c_dn, +1)):
            m = int(round(qn.m_j + 0.5 * dm))
            if c != 0.0 and abs(m) <= l:
                rows.append((comp, slot, phase * c, l, m))
    return rows


@dataclass(frozen=True)
class AngularBasisPair:
    """Orthonormal pair (phi_plus, phi_minus) sampled on an angular grid."""

    qn: QuantumNumbers
    grid: AngularGrid
    phi_plus: ArrayC
    phi_minus: ArrayC

    def gram(self) -> ArrayC:
        w = quad_weights(self.grid)
        basis = (self.phi_plus, self.phi_minus)
        g = np.empty((2, 2), dtype=np.complex128)
        for i, a in enumerate(basis):
            for k, b in enumerate(basis):
                g[i, k] = np.sum(w * np.sum(np.conj(a) * b, axis=0))
        return g

    def orthonormality_defect(self) -> float:
        return float(np.max(np.abs(self.gram() - np.eye(2))))


def basis_samples(qn: QuantumNumbers, theta: ArrayR, phi: ArrayR) -> tuple[ArrayC, ArrayC]:
    """(phi_plus, phi_minus) as (4, ...) arrays at the given angles."""
    shape = np.broadcast_shapes(np.shape(theta), np.shape(phi))
    plus = np.zeros((4,) + shape, dtype=np.complex128)
    minus = np.zeros((4,) + shape, dtype=np.complex128)
    for comp, slot, coef, l, m in sector_component_table(qn):
        target = plus if slot == 0 else minus
        target[comp] = coef * ylm(l, m, theta, phi)
    return plus, minus


def build_basis(
    qn: QuantumNumbers,
    angular_grid: Optional[AngularGrid] = None,
    j_cap: float = 3.5,
) -> AngularBasisPair:
    """Sample the sector's angular basis on a quadrature grid.

    Sectors beyond j_cap (default 7/2) are refused, as is a grid whose
    band limit cannot hold the basis polynomials.
    """
    if qn.j > j_cap + 1e-12:
        raise UnsupportedQuantumNumbers(
            f"sector j = {qn.j} beyond the supported cap {j_cap}"
        )
    grid = angular_grid if angular_grid is not None else AngularGrid()
    need = max(qn.l_plus, qn.l_minus)
    if grid.lmax < need:
        raise UnsupportedQuantumNumbers(
            f"angular grid resolves degree {grid.lmax}, sector needs {need}"
        )
    theta, phi = grid_angles(grid)
    plus, minus = basis_samples(qn, theta[:, None], phi[None, :])
    return AngularBasisPair(qn=qn, grid=grid, phi_plus=plus, phi_minus=minus)


# ---------------------------------------------------------------------------
# Radial states
# ---------------------------------------------------------------------------

@dataclass
class RadialSpinorState:
    """Reduced radial pair on nodes r_i in (0, R].

    u_plus and u_minus are r times the physical amplitudes, so the
    squared sector norm is the integral of |u_plus|^2 + |u_minus|^2 dr
    and both profiles extend through the origin with the parity fixed by
    kappa.
    """

    qn: QuantumNumbers
    r_grid: ArrayR
    u_plus: ArrayC
    u_minus: ArrayC

    def __post_init__(self):
        self.r_grid = np.asarray(self.r_grid, dtype=float)
        self.u_plus = np.asarray(self.u_plus, dtype=np.complex128)
        self.u_minus = np.asarray(self.u_minus, dtype=np.complex128)
        if not (self.r_grid.ndim == 1 and np.all(np.diff(self.r_grid) > 0)):
            raise ValueError("r_grid must be strictly increasing")
        if self.r_grid[0] <= 0:
            raise ValueError("r_grid must start above 0")
        if self.u_plus.shape != self.r_grid.shape or self.u_minus.shape != self.r_grid.shape:
            raise ValueError("profiles and r_grid must share a shape")

    def copy(self) -> "RadialSpinorState":
        return RadialSpinorState(self.qn, self.r_grid.copy(),
                                 self.u_plus.copy(), self.u_minus.copy())

    def amplitudes(self) -> tuple[ArrayC, ArrayC]:
        """Physical (unreduced) amplitudes at the nodes."""
        return self.u_plus / self.r_grid, self.u_minus / self.r_grid


def _radial_quad(r: ArrayR, values: ArrayR) -> float:
    """Integral over (0, max r] with an implicit zero node at the origin."""
    rr = np.concatenate(([0.0], r))
    vv = np.concatenate(([0.0], values))
    return float(np.trapezoid(vv, rr))


def sector_l2(state: RadialSpinorState) -> float:
    dens = np.abs(state.u_plus) ** 2 + np.abs(state.u_minus) ** 2
    return float(np.sqrt(_radial_quad(state.r_grid, dens)))


def sector_sup_amplitude(state: RadialSpinorState) -> float:
    """Pointwise 3D sup |u|; exact for the angle-flat j = 1/2 sectors."""
    a, b = state.amplitudes()
    dens = (np.abs(a) ** 2 + np.abs(b) ** 2) / FOUR_PI
    return float(np.sqrt(np.max(dens)))


# ---------------------------------------------------------------------------
# Spectral shell projection
# ---------------------------------------------------------------------------

@lru_cache(maxsize=4)
def _shell_table(grid: GridSpec):
    """Frequency shells: per-mode shell index, |xi| per shell, mode angles."""
    kx, ky, kz = (np.broadcast_to(a, (grid.n,) * 3) for a in k_vectors(grid))
    scale = grid.L / np.pi
    m1 = np.rint(kx * scale).astype(np.int64)
    m2 = np.rint(ky * scale).astype(np.int64)
    m3 = np.rint(kz * scale).astype(np.int64)
    s2 = (m1 * m1 + m2 * m2 + m3 * m3).ravel()
    shells, inverse = np.unique(s2, return_inverse=True)
    q = (np.pi / grid.L) * np.sqrt(shells.astype(float))
    kkx, kky, kkz = kx.ravel(), ky.ravel(), kz.ravel()
    mag = np.sqrt(kkx**2 + kky**2 + kkz**2)
    safe = np.where(mag == 0.0, 1.0, mag)
    theta = np.arccos(np.clip(np.where(mag == 0.0, 1.0, kkz / safe), -1.0, 1.0))
    phi = np.arctan2(kky, kkx)
    return inverse, q, theta, phi


def shell_profiles(
    field: SpinorField3D,
    targets: Sequence[tuple[int, int, int]],
    radii: ArrayR,
) -> ArrayC:
    """Radial profile of each (component, l, m) angular channel.

    Row k holds the L^2(S^2) projection of component c onto Y_l^m on
    every sphere of the given radii, computed from the field's Fourier
    coefficients through the spherical-wave expansion.  Exact for the
    trig interpolant, so the only error is the band limit of the data.
    """
    radii = np.asarray(radii, dtype=float)
    hat = spectral_coefficients(field)
    inverse, q, theta, phi = _shell_table(field.grid)
    out = np.empty((len(targets), radii.size), dtype=np.complex128)
    ylm_cache: dict[tuple[int, int], ArrayC] = {}
    bessel_cache: dict[int, ArrayR] = {}
    nshell = q.size
    for row, (c, l, m) in enumerate(targets):
        key = (l, m)
        if key not in ylm_cache:
            ylm_cache[key] = np.conj(ylm(l, m, theta, phi))
        w = hat[c].ravel() * ylm_cache[key]
        s = (np.bincount(inverse, w.real, minlength=nshell)
             + 1j * np.bincount(inverse, w.imag, minlength=nshell))
        if l not in bessel_cache:
            bessel_cache[l] = spherical_jn(l, np.outer(q, radii))
        out[row] = (FOUR_PI * (1j ** l) / field.grid.box_volume) * (s @ bessel_cache[l])
    return out


def project(
    u: SpinorField3D,
    qn: QuantumNumbers,
    radii: Optional[ArrayR] = None,
) -> RadialSpinorState:
    """Sector content of a 3D field as a reduced radial state.

    Default radii follow the 3D grid spacing out to the inscribed
    sphere; radii beyond it trigger a truncation warning since the
    spheres then leave the box.
    """
    grid = u.grid
    if radii is None:
        n_r = grid.n // 2
        radii = grid.dx * np.arange(1, n_r + 1)
    radii = np.asarray(radii, dtype=float)
    if radii.max() > grid.L * (1 + 1e-12):
        warnings.warn(
            f"projection radius {radii.max():g} exceeds the inscribed sphere "
            f"radius {grid.L:g}; outer shells are truncated by the box",
            stacklevel=2,
        )
    table = sector_component_table(qn)
    profiles = shell_profiles(u, [(c, l, m) for c, _, _, l, m in table], radii)
    amp = np.zeros((2, radii.size), dtype=np.complex128)
    for row, (_, slot, coef, _, _) in enumerate(table):
        amp[slot] += np.conj(coef) * profiles[row]
    return RadialSpinorState(qn, radii, radii * amp[0], radii * amp[1])


def lift_callables(
    grid: GridSpec,
    qn: QuantumNumbers,
    amp_plus: Callable[[ArrayR], ArrayC],
    amp_minus: Callable[[ArrayR], ArrayC],
) -> SpinorField3D:
    """3D field of a sector with physical amplitude callables.

    The callables take radii (r = 0 included) and must be finite there;
    sector amplitudes behave like r^l so this is only a constraint for
    the degree-0 slot.
    """
    r = position_radius(grid)
    ux, uy, uz = position_unit(grid)
    theta = np.arccos(np.clip(uz, -1.0, 1.0))
    phi = np.arctan2(uy, ux)
    values = np.zeros((4, grid.n, grid.n, grid.n), dtype=np.complex128)
    radial = {0: np.asarray(amp_plus(r), dtype=np.complex128),
              1: np.asarray(amp_minus(r), dtype=np.complex128)}
    for comp, slot, coef, l, m in sector_component_table(qn):
        values[comp] += coef * radial[slot] * ylm(l, m, theta, phi)
    return SpinorField3D(grid, values)


def lift(state: RadialSpinorState, grid: GridSpec) -> SpinorField3D:
    """3D field of a radial state, zero outside the outermost node."""
    from scipy.interpolate import CubicSpline

    a_plus, a_minus = state.amplitudes()
    r_max = state.r_grid[-1]

    def make(values):
        spline = CubicSpline(state.r_grid, values, extrapolate=True)

        def amp(r):
            # below the first node the cubic extrapolates (amplitudes are
            # smooth through r = 0); clipping there would plant an O(dr)
            # spike on the origin grid node
            out = spline(np.minimum(r, r_max))
            return np.where(r > r_max, 0.0, out)

        return amp

    return lift_callables(grid, state.qn, make(a_plus), make(a_minus))


# ---------------------------------------------------------------------------
# Consistency checks against the 3D operator
# ---------------------------------------------------------------------------

def _scan_channels(qn: QuantumNumbers, l_scan: int) -> list[tuple[int, int, int]]:
    """All angular channels up to l_scan that are foreign to the sector."""
    own = {(c, l, m) for c, _, _, l, m in sector_component_table(qn)}
    out = []
    for c in range(4):
        for l in range(l_scan + 1):
            for m in range(-l, l + 1):
                if (c, l, m) not in own:
                    out.append((c, l, m))
    return out


def off_sector_fraction(
    field: SpinorField3D,
    qn: QuantumNumbers,
    l_scan: Optional[int] = None,
    n_quad: int = 321,
) -> float:
    """Relative L^2 mass of a field outside its nominal sector.

    Scans every foreign angular channel up to l_scan (default: sector
    degrees + 4) on radii covering the inscribed sphere and compares
    against the full 3D norm.
    """
    if l_scan is None:
        l_scan = max(qn.l_plus, qn.l_minus) + 4
    total = l2_norm(field)
    if total == 0.0:
        return 0.0
    radii = np.linspace(0.0, field.grid.L, n_quad)[1:]
    channels = _scan_channels(qn, l_scan)
    profiles = shell_profiles(field, channels, radii)
    dens = np.sum(np.abs(profiles) ** 2, axis=0) * radii ** 2
    foreign = _radial_quad(radii, dens)
    return float(np.sqrt(foreign) / total)


@dataclass
class DiracActionReport:
    """Fit of the induced radial operator and the off-sector leakage."""

    qn: QuantumNumbers
    coef_plus: float
    coef_minus: float
    spread_plus: float
    spread_minus: float
    leakage: float

    def passed(self, tol_coef: float = 1e-6, tol_leak: float = 1e-8) -> bool:
        near_int = (abs(self.coef_plus - round(self.coef_plus)) < tol_coef
                    and abs(self.coef_minus - round(self.coef_minus)) < tol_coef)
        return (near_int and self.spread_plus < tol_coef
                and self.spread_minus < tol_coef and self.leakage < tol_leak)

    def table(self) -> str:
        rows = [
            f"sector (j={self.qn.j}, m_j={self.qn.m_j}, kappa={self.qn.kappa})",
            f"  plus row coefficient  {self.coef_plus:+.9f} (spread {self.spread_plus:.2e})",
            f"  minus row coefficient {self.coef_minus:+.9f} (spread {self.spread_minus:.2e})",
            f"  off-sector leakage    {self.leakage:.3e}",
        ]
        return "\n".join(rows)


@dataclass(frozen=True)
class SectorProfile:
    """Analytic reduced profile scale * r^(l+1) (1 + c r^2) exp(-r^2/w^2)."""

    l: int
    c: float
    scale: float
    width: float

    def reduced(self, r: ArrayR) -> ArrayR:
        r = np.asarray(r, dtype=float)
        return self.scale * r ** (self.l + 1) * (1 + self.c * r * r) \
            * np.exp(-(r / self.width) ** 2)

    def reduced_derivative(self, r: ArrayR) -> ArrayR:
        r = np.asarray(r, dtype=float)
        l, c, w = self.l, self.c, self.width
        poly = ((l + 1) * r ** l * (1 + c * r * r) + 2 * c * r ** (l + 2)
                - (2.0 / w**2) * r ** (l + 2) * (1 + c * r * r))
        return self.scale * poly * np.exp(-(r / w) ** 2)

    def amplitude(self, r: ArrayR) -> ArrayR:
        """The physical (unreduced) amplitude, finite at r = 0."""
        r = np.asarray(r, dtype=float)
        return self.scale * r ** self.l * (1 + self.c * r * r) \
            * np.exp(-(r / self.width) ** 2)


def _default_profiles(qn: QuantumNumbers, width: float) -> tuple[SectorProfile, SectorProfile]:
    plus = SectorProfile(l=qn.l_plus, c=0.25, scale=1.0, width=width)
    minus = SectorProfile(l=qn.l_minus, c=-0.1, scale=0.8, width=width)
    return plus, minus


def dirac_action_check(
    qn: QuantumNumbers,
    grid: GridSpec,
    width: float = 2.0,
    radii: Optional[ArrayR] = None,
    l_scan: Optional[int] = None,
) -> DiracActionReport:
    """Fit the 1/r coefficients of the induced radial operator.

    Lifts smooth sector data, applies the full 3D Dirac operator,
    projects back, and least-squares fits the two off-diagonal rows
    d_plus = -g' + (A/r) g and d_minus = f' + (B/r) f against the known
    analytic derivatives.  Also measures how much of the 3D action
    leaks out of the sector.
    """
    from .clifford import apply_dirac

    prof_p, prof_m = _default_profiles(qn, width)
    if radii is None:
        radii = np.linspace(0.15 * width, 3.2 * width, 160)
    radii = np.asarray(radii, dtype=float)

    field = lift_callables(grid, qn, prof_p.amplitude, prof_m.amplitude)
    action = apply_dirac(field)
    projected = project(action, qn, radii)
    d_plus, d_minus = projected.u_plus, projected.u_minus

    g, dg = prof_m.reduced(radii), prof_m.reduced_derivative(radii)
    f, df = prof_p.reduced(radii), prof_p.reduced_derivative(radii)

    def fit(target, base):
        mask = np.abs(base) > 0.05 * np.max(np.abs(base))
        base_over_r = (base / radii)[mask]
        coef = float(np.real(np.sum(np.conj(base_over_r) * target[mask])
                             / np.sum(np.abs(base_over_r) ** 2)))
        spread = float(np.max(np.abs(target[mask] / base_over_r - coef)))
        return coef, spread

    coef_p, spread_p = fit(d_plus + dg, g)
    coef_m, spread_m = fit(d_minus - df, f)
    leak = off_sector_fraction(action, qn, l_scan=l_scan)
    return DiracActionReport(qn, coef_p, coef_m, spread_p, spread_m, leak)


def potential_sector_check(
    qn: QuantumNumbers,
    grid: GridSpec,
    spec: PotentialSpec,
    width: float = 2.2,
) -> tuple[float, float]:
    """Sector invariance of a structured potential.

    Returns (leakage, matrix_residual): the off-sector fraction of V
    applied to lifted sector data, and the defect of the induced 2x2
    action [[V1, V2], [V2, V1]] on the reduced profiles.
    """
    from .potential import apply as apply_potential

    prof_p, prof_m = _default_profiles(qn, width)
    field = lift_callables(grid, qn, prof_p.amplitude, prof_m.amplitude)
    vu = apply_potential(spec, field)
    leakage = off_sector_fraction(vu, qn)
    radii = np.linspace(0.2 * width, 3.0 * width, 120)
    got = project(vu, qn, radii)
    v1 = spec.profile(1, radii)
    v2 = spec.profile(2, radii)
    want_plus = v1 * prof_p.reduced(radii) + v2 * prof_m.reduced(radii)
    want_minus = v2 * prof_p.reduced(radii) + v1 * prof_m.reduced(radii)
    scale = max(np.max(np.abs(want_plus)), np.max(np.abs(want_minus)), 1e-300)
    residual = max(np.max(np.abs(got.u_plus - want_plus)),
                   np.max(np.abs(got.u_minus - want_minus))) / scale
    return leakage, residual


@dataclass
class ReducedCubicReport:
    """Radial reduction of the cubic term on a j = 1/2 sector."""

    mean_profile: ArrayC
    fluctuation: float
    p3_leakage: Optional[float]


def reduce_nonlinearity(
    state: RadialSpinorState,
    angular_grid: Optional[AngularGrid] = None,
    grid3d: Optional[GridSpec] = None,
) -> ReducedCubicReport:
    """Angular mean and fluctuation of <beta u, u> per radius.

    Only j = 1/2 sectors keep the cubic term inside the sector; others
    are refused.  When a 3D grid is supplied the full cubic term is also
    lifted, cubed pointwise, and projected back to measure its
    off-sector fraction.
    """
    if abs(state.qn.j - 0.5) > 1e-12:
        raise SectorNotApplicable(
            f"cubic reduction is only defined on j = 1/2 sectors, got j = {state.qn.j}"
        )
    g = angular_grid if angular_grid is not None else AngularGrid()
    theta, phi = grid_angles(g)
    plus, minus = basis_samples(state.qn, theta[:, None], phi[None, :])
    w = quad_weights(g)
    beta = np.array([1.0, 1.0, -1.0, -1.0])
    a_p, a_m = state.amplitudes()
    spinor = (a_p[:, None, None, None] * plus[None, :]
              + a_m[:, None, None, None] * minus[None, :])
    bracket = np.einsum("c,rcij->rij", beta, np.abs(spinor) ** 2)
    mean = np.sum(w * bracket, axis=(-2, -1)) / FOUR_PI
    fluct = np.sqrt(np.sum(w * (bracket - mean[:, None, None]) ** 2, axis=(-2, -1)))
    scale = max(float(np.max(np.abs(mean))), 1e-300)
    report = ReducedCubicReport(
        mean_profile=mean.astype(np.complex128),
        fluctuation=float(np.max(fluct)) / scale,
        p3_leakage=None,
    )
    if grid3d is not None:
        from .propagator import CubicNonlinearity

        field = lift(state, grid3d)
        p3 = SpinorField3D(grid3d, CubicNonlinearity.beta_form().evaluate(field.values))
        report.p3_leakage = off_sector_fraction(p3, state.qn)
    return report


def cubic_sector_check(
    qn: QuantumNumbers,
    grid: GridSpec,
    width: float = 3.2,
) -> float:
    """Off-sector fraction of the cubic term on analytic j = 1/2 data.

    Uses wide Gaussian profiles so the tripled bandwidth of the
    pointwise cube stays inside the grid's band limit; no radial
    interpolation is involved.
    """
    if abs(qn.j - 0.5) > 1e-12:
        raise SectorNotApplicable("cubic invariance only claimed for j = 1/2")
    from .propagator import CubicNonlinearity

    prof_p, prof_m = _default_profiles(qn, width)
    field = lift_callables(grid, qn, prof_p.amplitude, prof_m.amplitude)
    p3 = SpinorField3D(grid, CubicNonlinearity.beta_form().evaluate(field.values))
    return off_sector_fraction(p3, qn)


# ---------------------------------------------------------------------------
# Radial solver
# ---------------------------------------------------------------------------

_D4 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0


def _derivative4(values: ArrayC, dr: float, parity0: int, parityR: int) -> ArrayC:
    """4th-order first derivative on nodes dr..R.

    Closure: an exact zero node at r = 0 plus parity ghosts below it,
    and a reflecting wall at R folded the same way (odd parity pins the
    wall value to zero through the companion rhs constraint).
    """
    n = values.size
    w = np.empty(n + 5, dtype=values.dtype)
    w[3:3 + n] = values
    w[2] = 0.0
    w[1] = parity0 * values[0]
    w[0] = parity0 * values[1]
    w[3 + n] = parityR * values[n - 2]
    w[4 + n] = parityR * values[n - 3]
    out = (_D4[0] * w[1:1 + n] + _D4[1] * w[2:2 + n]
           + _D4[3] * w[4:4 + n] + _D4[4] * w[5:5 + n])
    return out / dr


@dataclass
class RadialTrajectory:
    qn: QuantumNumbers
    config: EvolutionConfig
    r_grid: ArrayR
    times: ArrayR
    l2: ArrayR
    h1: ArrayR
    sup_amplitude: ArrayR
    states: Optional[list[RadialSpinorState]] = None


def radial_dirac_apply(state: RadialSpinorState) -> tuple[ArrayC, ArrayC]:
    """The induced first-order operator on the reduced profiles."""
    qn = state.qn
    dr = float(state.r_grid[1] - state.r_grid[0])
    kap = qn.kappa
    r = state.r_grid
    dg = _derivative4(state.u_minus, dr, qn.origin_parity(1), -1)
    df = _derivative4(state.u_plus, dr, qn.origin_parity(0), +1)
    d_plus = -dg + kap * state.u_minus / r
    d_minus = df + kap * state.u_plus / r
    return d_plus, d_minus


def sector_h1(state: RadialSpinorState) -> float:
    d_plus, d_minus = radial_dirac_apply(state)
    grad = _radial_quad(state.r_grid, np.abs(d_plus) ** 2 + np.abs(d_minus) ** 2)
    return float(np.sqrt(sector_l2(state) ** 2 + grad))


def evolve_radial(
    state: RadialSpinorState,
    potential: Optional[PotentialSpec],
    cfg: EvolutionConfig,
    nonlinearity: str = "beta_form",
    store_states: bool = False,
) -> RadialTrajectory:
    """Method-of-lines RK4 for the reduced sector equation.

    The grid must be uniform; the time step is capped at 0.5 dr (hard
    CFL error).  The cubic term requires a j = 1/2 sector, where the
    bracket has no angular component; linear runs work on any sector.
    The wall at r = R reflects (odd parity on the minus profile).
    """
    if nonlinearity not in ("none", "beta_form"):
        raise ValueError(f"unknown nonlinearity {nonlinearity!r}")
    if nonlinearity == "beta_form" and abs(state.qn.j - 0.5) > 1e-12:
        raise SectorNotApplicable("cubic radial dynamics only on j = 1/2 sectors")
    r = state.r_grid
    dr = r[1] - r[0]
    if not np.allclose(np.diff(r), dr, rtol=1e-10):
        raise ValueError("radial solver needs a uniform grid")
    if cfg.dt > 0.5 * dr:
        raise CFLViolation(f"dt = {cfg.dt:g} exceeds the CFL bound 0.5 dr = {0.5 * dr:g}")

    qn = state.qn
    kap = qn.kappa
    p0_plus, p0_minus = qn.origin_parity(0), qn.origin_parity(1)
    if potential is not None and potential.is_zero():
        potential = None
    if potential is not None:
        v1 = potential.profile(1, r)
        v2 = potential.profile(2, r)
        if potential.angular is not None:
            raise SectorNotApplicable("angular potential terms break the sector")
    cubic = nonlinearity == "beta_form"
    inv_4pi_r2 = 1.0 / (FOUR_PI * r * r)

    def rhs(f, g):
        df = _derivative4(f, dr, p0_plus, +1)
        dg = _derivative4(g, dr, p0_minus, -1)
        a_plus = -dg + kap * g / r
        a_minus = df + kap * f / r
        if potential is not None:
            a_plus = a_plus + v1 * f + v2 * g
            a_minus = a_minus + v2 * f + v1 * g
        if cubic:
            b = (np.abs(f) ** 2 - np.abs(g) ** 2) * inv_4pi_r2
            a_plus = a_plus - b * f
            a_minus = a_minus - b * g
        out_p = 1j * a_plus
        out_m = 1j * a_minus
        out_m[-1] = 0.0
        return out_p, out_m

    f = state.u_plus.copy()
    g = state.u_minus.copy()
    g[-1] = 0.0
    dt = cfg.dt
    sup0 = max(float(np.max(np.abs(f))), float(np.max(np.abs(g))), 1e-300)

    times, l2s, h1s, sups = [], [], [], []
    states = [] if store_states else None

    def record(t):
        snap = RadialSpinorState(qn, r, f.copy(), g.copy())
        times.append(t)
        l2s.append(sector_l2(snap))
        h1s.append(sector_h1(snap))
        sups.append(sector_sup_amplitude(snap))
        if store_states:
            states.append(snap)

    record(0.0)
    for step in range(1, cfg.n_steps + 1):
        k1p, k1m = rhs(f, g)
        k2p, k2m = rhs(f + 0.5 * dt * k1p, g + 0.5 * dt * k1m)
        k3p, k3m = rhs(f + 0.5 * dt * k2p, g + 0.5 * dt * k2m)
        k4p, k4m = rhs(f + dt * k3p, g + dt * k3m)
        f = f + dt / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
        g = g + dt / 6.0 * (k1m + 2 * k2m + 2 * k3m + k4m)
        t = step * dt
        sup = max(float(np.max(np.abs(f))), float(np.max(np.abs(g))))
        if not np.isfinite(sup) or sup > cfg.blowup_factor * sup0:
            raise SolverBlowup(
                f"radial solution blew up at t = {t:.6g} "
                f"(sup {sup:.3e} vs initial {sup0:.3e})",
                step=step, t=t,
            )
        if step % cfg.steps_per_record == 0:
            record(t)

    return RadialTrajectory(
        qn=qn, config=cfg, r_grid=r,
        times=np.asarray(times), l2=np.asarray(l2s),
        h1=np.asarray(h1s), sup_amplitude=np.asarray(sups),
        states=states,
    )


def write_radial_trajectory(
    path: str | Path,
    traj: RadialTrajectory,
    header_comments: Sequence[str] = (),
) -> None:
    """Wide CSV: one row per record time, interleaved profile values.

    Requires store_states=True on the producing run.
    """
    if traj.states is None:
        raise ValueError("trajectory was recorded without states")
    n = traj.r_grid.size
    lines = [f"# {c}" for c in header_comments]
    lines.append(f"# r nodes: {n} points, dr = {traj.r_grid[0]:.12g}, "
                 f"r_max = {traj.r_grid[-1]:.12g}")
    cols = ["t"]
    for i in range(n):
        cols += [f"re_up_{i}", f"im_up_{i}", f"re_um_{i}", f"im_um_{i}"]
    lines.append(",".join(cols))
    for t, st in zip(traj.times, traj.states):
        row = np.empty(4 * n)
        row[0::4] = st.u_plus.real
        row[1::4] = st.u_plus.imag
        row[2::4] = st.u_minus.real
        row[3::4] = st.u_minus.imag
        lines.append(f"{t:.12g}," + ",".join(f"{v:.12g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Cross-solver comparison
# ---------------------------------------------------------------------------

@dataclass
class CrossValidationReport:
    qn: QuantumNumbers
    t_final: float
    rel_l2: float
    sector_loss: float
    radial_l2_drift: float
    times: Optional[ArrayR] = None
    series: Optional[ArrayR] = None

    def table(self) -> str:
        return "\n".join([
            f"sector (j={self.qn.j}, m_j={self.qn.m_j}, kappa={self.qn.kappa}) "
            f"at T = {self.t_final:g}",
            f"  relative L2 discrepancy {self.rel_l2:.6e}",
            f"  3D off-sector mass      {self.sector_loss:.3e}",
            f"  radial L2 drift         {self.radial_l2_drift:.3e}",
        ])


def cross_validate(
    qn: QuantumNumbers,
    amp_plus: Callable[[ArrayR], ArrayC],
    amp_minus: Callable[[ArrayR], ArrayC],
    potential: Optional[PotentialSpec],
    grid: GridSpec,
    n_r: int,
    dt_3d: float,
    dt_radial: float,
    t_final: float,
    nonlinearity: str = "beta_form",
    record_dt: Optional[float] = None,
) -> CrossValidationReport:
    """Evolve the same sector data with both solvers and compare.

    The 3D field is compared against the radial solution in the full 3D
    L^2 norm: the in-sector mismatch is measured on the radial nodes via
    the exact shell projection, and whatever 3D mass left the sector is
    added on top (the lifted radial solution cannot represent it).  With
    record_dt the comparison runs at every record time (the 3D flow is
    streamed, nothing is stored); otherwise only at T.
    """
    from .propagator import CubicNonlinearity, iter_evolution

    r_max = grid.L
    dr = r_max / n_r
    nodes = dr * np.arange(1, n_r + 1)
    state = RadialSpinorState(
        qn, nodes,
        nodes * np.asarray(amp_plus(nodes), dtype=np.complex128),
        nodes * np.asarray(amp_minus(nodes), dtype=np.complex128),
    )
    rec = t_final if record_dt is None else record_dt
    cfg_r = EvolutionConfig(dt=dt_radial, t_final=t_final, record_dt=rec)
    traj_r = evolve_radial(state, potential, cfg_r, nonlinearity=nonlinearity,
                           store_states=True)

    field0 = lift_callables(grid, qn, amp_plus, amp_minus)
    nl = (CubicNonlinearity.beta_form() if nonlinearity == "beta_form"
          else CubicNonlinearity.none())
    cfg_3 = EvolutionConfig(dt=dt_3d, t_final=t_final, record_dt=rec,
                            support_radius=None)
    times, series, losses = [], [], []
    for k, (t, u) in enumerate(iter_evolution(field0, potential, nl, cfg_3)):
        ref = traj_r.states[k]
        if abs(t - traj_r.times[k]) > 1e-9:
            raise RuntimeError("solver record times fell out of step")
        proj = project(u, qn, nodes)
        diff = (np.abs(proj.u_plus - ref.u_plus) ** 2
                + np.abs(proj.u_minus - ref.u_minus) ** 2)
        sector_mismatch = _radial_quad(nodes, diff)
        total = l2_norm(u)
        in_sector = _radial_quad(
            nodes, np.abs(proj.u_plus) ** 2 + np.abs(proj.u_minus) ** 2)
        off_sector = max(total ** 2 - in_sector, 0.0)
        times.append(t)
        series.append(float(np.sqrt(sector_mismatch + off_sector) / total))
        losses.append(float(np.sqrt(off_sector) / total))
    drift = float(np.max(np.abs(traj_r.l2 - traj_r.l2[0])) / traj_r.l2[0])
    return CrossValidationReport(
        qn=qn, t_final=t_final, rel_l2=series[-1],
        sector_loss=losses[-1],
        radial_l2_drift=drift,
        times=np.asarray(times), series=np.asarray(series),
    )
