"""Dirac matrices, periodic grids, and Fourier-multiplier machinery.

Everything downstream (propagators, partial-wave reductions, norm
harnesses) is built on the objects in this module: the 4x4 Clifford
matrices, a periodic box grid, 4-component spinor fields sampled on it,
and spectral application of scalar and matrix Fourier multipliers.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import numpy.typing as npt
import scipy.fft as sfft

ArrayC = npt.NDArray[np.complexfloating]
ArrayR = npt.NDArray[np.floating]

_FFT_WORKERS = os.cpu_count() or 1


class GridMismatchError(ValueError):
    """Fields living on different grids were combined."""


class MultiplierDomainError(ValueError):
    """A multiplier symbol evaluated to NaN or Inf on the frequency grid."""


# ---------------------------------------------------------------------------
# Clifford matrices
# ---------------------------------------------------------------------------

_SIGMA = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def _alpha_from_sigma(sig: ArrayC) -> ArrayC:
    out = np.zeros((4, 4), dtype=complex)
    out[:2, 2:] = sig
    out[2:, :2] = sig
    return out


ALPHA: tuple[ArrayC, ArrayC, ArrayC] = tuple(_alpha_from_sigma(s) for s in _SIGMA)
BETA: ArrayC = np.diag([1.0, 1.0, -1.0, -1.0]).astype(complex)


@dataclass(frozen=True)
class DiracMatrices:
    """The three alpha matrices and beta, as explicit 4x4 complex arrays."""

    alpha: tuple[ArrayC, ArrayC, ArrayC]
    beta: ArrayC

    @classmethod
    def standard(cls) -> "DiracMatrices":
        return cls(alpha=tuple(a.copy() for a in ALPHA), beta=BETA.copy())

    def conjugated(self, unitary: ArrayC) -> "DiracMatrices":
        """Same algebra in a rotated representation U a U^dagger."""
        u = np.asarray(unitary, dtype=complex)
        uh = u.conj().T
        return DiracMatrices(
            alpha=tuple(u @ a @ uh for a in self.alpha),
            beta=u @ self.beta @ uh,
        )


@dataclass
class AlgebraIdentity:
    label: str
    residual: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.tol


@dataclass
class AlgebraReport:
    identities: list[AlgebraIdentity]

    @property
    def max_residual(self) -> float:
        return max(i.residual for i in self.identities)

    @property
    def passed(self) -> bool:
        return all(i.passed for i in self.identities)

    def table(self) -> str:
        lines = ["%-28s %12s  %s" % ("identity", "residual", "pass")]
        for i in self.identities:
            lines.append("%-28s %12.3e  %s" % (i.label, i.residual, i.passed))
        return "\n".join(lines)


def _maxabs(m: ArrayC) -> float:
    return float(np.max(np.abs(m)))


def verify_algebra(matrices: DiracMatrices | None = None, tol: float = 1e-15) -> AlgebraReport:
    """Check hermiticity and the anticommutation relations of alpha_j, beta.

    Returns a report with one residual per identity (max-abs entry of the
    defect matrix).  The standard integer-entry representation satisfies
    everything exactly in floating point.
    """
    m = matrices or DiracMatrices.standard()
    eye = np.eye(4, dtype=complex)
    out: list[AlgebraIdentity] = []
    for j, a in enumerate(m.alpha, start=1):
        out.append(AlgebraIdentity(f"alpha{j} hermitian", _maxabs(a - a.conj().T), tol))
    out.append(AlgebraIdentity("beta hermitian", _maxabs(m.beta - m.beta.conj().T), tol))
    for j in range(3):
        for k in range(j, 3):
            anti = m.alpha[j] @ m.alpha[k] + m.alpha[k] @ m.alpha[j]
            want = 2.0 * eye if j == k else 0.0 * eye
            out.append(
                AlgebraIdentity(f"alpha{j+1} alpha{k+1} + alpha{k+1} alpha{j+1}",
                                _maxabs(anti - want), tol)
            )
    out.append(AlgebraIdentity("beta^2 = I", _maxabs(m.beta @ m.beta - eye), tol))
    for j in range(3):
        anti = m.beta @ m.alpha[j] + m.alpha[j] @ m.beta
        out.append(AlgebraIdentity(f"beta alpha{j+1} + alpha{j+1} beta", _maxabs(anti), tol))
    return AlgebraReport(out)


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Periodic cube [-L, L)^3 sampled with n points per axis.

    Grid points are x_k = 2L k / n - L and the discrete frequencies are
    xi in (pi/L) {-n/2, ..., n/2 - 1}^3.  Powers of two are the intended
    use; n must at least be even and >= 8.
    """

    n: int
    L: float

    def __post_init__(self):
        if self.n < 8 or self.n % 2:
            raise ValueError(f"grid needs n >= 8 and even, got {self.n}")
        if not self.L > 0:
            raise ValueError(f"grid needs L > 0, got {self.L}")

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def cell_volume(self) -> float:
        return self.dx ** 3

    @property
    def box_volume(self) -> float:
        return (2.0 * self.L) ** 3

    @property
    def k_max(self) -> float:
        """Largest resolved frequency magnitude along one axis."""
        return np.pi * self.n / (2.0 * self.L)

    def axis(self) -> ArrayR:
        return -self.L + self.dx * np.arange(self.n)

    def k_axis(self) -> ArrayR:
        return 2.0 * np.pi * sfft.fftfreq(self.n, d=self.dx)

    def refined(self) -> "GridSpec":
        return GridSpec(n=2 * self.n, L=self.L)


@lru_cache(maxsize=16)
def k_vectors(spec: GridSpec) -> tuple[ArrayR, ArrayR, ArrayR]:
    """Broadcastable frequency components (kx, ky, kz)."""
    k = spec.k_axis()
    return k[:, None, None], k[None, :, None], k[None, None, :]


@lru_cache(maxsize=16)
def k_magnitude(spec: GridSpec) -> ArrayR:
    kx, ky, kz = k_vectors(spec)
    return np.sqrt(kx ** 2 + ky ** 2 + kz ** 2)


@lru_cache(maxsize=16)
def position_radius(spec: GridSpec) -> ArrayR:
    x = spec.axis()
    return np.sqrt(x[:, None, None] ** 2 + x[None, :, None] ** 2 + x[None, None, :] ** 2)


@lru_cache(maxsize=16)
def position_unit(spec: GridSpec) -> tuple[ArrayR, ArrayR, ArrayR]:
    """Unit vector x/|x| at every node of the grid.

    The direction is undefined at the origin node; it is set to the z
    axis there so the vector stays exactly unit length everywhere (the
    pointwise potential algebra relies on |xhat| = 1).
    """
    x = spec.axis()
    r = position_radius(spec)
    origin = r == 0.0
    rsafe = np.where(origin, 1.0, r)
    ux = x[:, None, None] / rsafe
    uy = x[None, :, None] / rsafe
    uz = x[None, None, :] / rsafe
    uz = np.where(origin, 1.0, uz)
    return ux, uy, uz


# ---------------------------------------------------------------------------
# Spinor fields
# ---------------------------------------------------------------------------

@dataclass
class SpinorField3D:
    """4-component complex field on a GridSpec, stored component-first.

    values has shape (4, n, n, n), complex128.
    """

    grid: GridSpec
    values: ArrayC

    def __post_init__(self):
        v = np.asarray(self.values)
        want = (4, self.grid.n, self.grid.n, self.grid.n)
        if v.shape != want:
            raise GridMismatchError(f"field shape {v.shape}, grid wants {want}")
        if v.dtype != np.complex128:
            v = v.astype(np.complex128)
        self.values = v

    def copy(self) -> "SpinorField3D":
        return SpinorField3D(self.grid, self.values.copy())


def zero_field(grid: GridSpec) -> SpinorField3D:
    return SpinorField3D(grid, np.zeros((4, grid.n, grid.n, grid.n), dtype=np.complex128))


def _same_grid(f: SpinorField3D, g: SpinorField3D) -> None:
    if f.grid != g.grid:
        raise GridMismatchError(f"grids differ: {f.grid} vs {g.grid}")


def l2_inner(f: SpinorField3D, g: SpinorField3D) -> complex:
    """<f, g> = integral of conj(f) . g, cell-sum quadrature."""
    _same_grid(f, g)
    return complex(f.grid.cell_volume * np.sum(f.values.conj() * g.values))


def l2_norm(f: SpinorField3D) -> float:
    return float(np.sqrt(f.grid.cell_volume) * np.linalg.norm(f.values))


def linf_norm(f: SpinorField3D) -> float:
    """Grid max of the pointwise C^4 euclidean norm."""
    return float(np.sqrt(np.max(np.sum(np.abs(f.values) ** 2, axis=0))))


def pointwise_magnitude(values: ArrayC) -> ArrayR:
    return np.sqrt(np.sum(np.abs(values) ** 2, axis=0))


# ---------------------------------------------------------------------------
# FFT plumbing
# ---------------------------------------------------------------------------

def fft_values(values: ArrayC) -> ArrayC:
    """Plain forward DFT over the last three axes."""
    return sfft.fftn(values, axes=(-3, -2, -1), workers=_FFT_WORKERS)


def ifft_values(values: ArrayC) -> ArrayC:
    return sfft.ifftn(values, axes=(-3, -2, -1), workers=_FFT_WORKERS)


@lru_cache(maxsize=16)
def _center_phase(spec: GridSpec) -> ArrayC:
    # e^{-i xi . x0} with x0 = (-L, -L, -L), the offset between index
    # space and the physical box.  Each factor is +-1 on this grid.
    k = spec.k_axis()
    ph = np.exp(1j * spec.L * k)
    return ph[:, None, None] * ph[None, :, None] * ph[None, None, :]


def spectral_coefficients(f: SpinorField3D) -> ArrayC:
    """Continuum-normalized Fourier coefficients of the trig interpolant.

    With these coefficients  f(x) = (1/|box|) sum_xi  fhat(xi) e^{i xi.x}
    holds exactly at arbitrary x, not just at grid nodes, and a single
    plane wave e^{i x.xi0} v has fhat(xi0) = |box| v.
    """
    return fft_values(f.values) * (f.grid.cell_volume * _center_phase(f.grid))


def field_from_spectral(grid: GridSpec, fhat: ArrayC) -> SpinorField3D:
    vals = ifft_values(fhat / (grid.cell_volume * _center_phase(grid)))
    return SpinorField3D(grid, vals)


def symbol_on_grid(
    spec: GridSpec,
    symbol: Callable[..., ArrayR | ArrayC],
    kind: str = "radial",
) -> ArrayR | ArrayC:
    """Evaluate a multiplier symbol on the frequency grid and validate it."""
    if kind == "radial":
        sym = np.asarray(symbol(k_magnitude(spec)))
    elif kind == "vector":
        sym = np.asarray(symbol(*k_vectors(spec)))
    else:
        raise ValueError(f"kind must be 'radial' or 'vector', got {kind!r}")
    if not np.all(np.isfinite(sym)):
        raise MultiplierDomainError("symbol evaluated to NaN or Inf on the grid")
    return sym


def apply_symbol_values(
    spec: GridSpec,
    values: ArrayC,
    symbol: Callable[..., ArrayR | ArrayC],
    kind: str = "radial",
) -> ArrayC:
    """Multiplier application on a raw (..., n, n, n) array."""
    sym = symbol_on_grid(spec, symbol, kind)
    return ifft_values(sym * fft_values(values))


def apply_multiplier(
    f: SpinorField3D,
    symbol: Callable[..., ArrayR | ArrayC],
    kind: str = "radial",
) -> SpinorField3D:
    """Apply a scalar Fourier multiplier, symbol(|xi|) or symbol(kx,ky,kz).

    The evaluated symbol must be finite everywhere on the frequency grid;
    removable singularities (e.g. sin(t|xi|)/|xi| at 0) are the caller's
    responsibility.
    """
    return SpinorField3D(f.grid, apply_symbol_values(f.grid, f.values, symbol, kind))


def alpha_dot_apply(kx: ArrayR, ky: ArrayR, kz: ArrayR, u: ArrayC) -> ArrayC:
    """(alpha . k) u for a stacked 4-component array, done componentwise.

    Works for position-space vectors (k = xhat) just as well as for
    frequency-space ones; only the 2x2 block structure of the alphas is
    baked in.
    """
    pm = kx - 1j * ky
    pp = kx + 1j * ky
    out = np.empty_like(u)
    out[0] = kz * u[2] + pm * u[3]
    out[1] = pp * u[2] - kz * u[3]
    out[2] = kz * u[0] + pm * u[1]
    out[3] = pp * u[0] - kz * u[1]
    return out


def apply_dirac(f: SpinorField3D) -> SpinorField3D:
    """The massless Dirac operator -i alpha . grad, exact on the grid.

    Acts in Fourier space as multiplication by the hermitian symbol
    alpha . xi, so a plane wave e^{i x.xi0} v maps to e^{i x.xi0}
    (alpha . xi0) v and the square equals minus the Laplacian.
    """
    kx, ky, kz = k_vectors(f.grid)
    hat = fft_values(f.values)
    return SpinorField3D(f.grid, ifft_values(alpha_dot_apply(kx, ky, kz, hat)))


def spectral_gradient(f: SpinorField3D) -> list[ArrayC]:
    """[d/dx1 f, d/dx2 f, d/dx3 f] as raw (4,n,n,n) arrays."""
    kx, ky, kz = k_vectors(f.grid)
    hat = fft_values(f.values)
    return [ifft_values(1j * kv * hat) for kv in (kx, ky, kz)]


def sobolev_norm(f: SpinorField3D, s: float, homogeneous: bool = False) -> float:
    """Sobolev norm via the Fourier weights |xi|^s or (1 + |xi|^2)^{s/2}.

    Plancherel is normalized so the result matches the continuum L^2 norm
    on the box; for homogeneous norms of negative order the xi = 0 mode
    is dropped.
    """
    kk = k_magnitude(f.grid)
    hat = fft_values(f.values)
    power = np.sum(np.abs(hat) ** 2, axis=0)
    if homogeneous:
        if s <= 0:
            # drop the mean mode, |xi|^s is singular or flat there
            kk = np.where(kk == 0.0, 1.0, kk)
            power = power.copy()
            power[0, 0, 0] = 0.0
        weight = kk ** (2.0 * s)
    else:
        weight = (1.0 + kk ** 2) ** s
    total = float(np.sum(weight * power))
    # forward DFT carries no volume factor here, fold it in once:
    # |fhat_cont|^2 = dV^2 |DFT|^2 and Plancherel divides by |box|.
    norm2 = total * f.grid.cell_volume ** 2 / f.grid.box_volume
    return float(np.sqrt(norm2))


def h1_norm(f: SpinorField3D) -> float:
    return sobolev_norm(f, 1.0)


def dirac_square_check(
    grid: GridSpec,
    n_fields: int = 50,
    seed: int = 7,
    kmax_frac: float = 0.4,
) -> float:
    """Max relative defect of D(Df) against the spectral Laplacian.

    Runs on random band-limited fields; returns the worst
    ||D^2 f + Lap f|| / ||Lap f|| over the sample.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_fields):
        f = random_band_limited(grid, rng, kmax_frac=kmax_frac)
        d2 = apply_dirac(apply_dirac(f))
        lap = apply_multiplier(f, lambda k: -(k ** 2))
        num = l2_norm(SpinorField3D(grid, d2.values + lap.values))
        den = l2_norm(lap)
        worst = max(worst, num / den)
    return worst


# ---------------------------------------------------------------------------
# Simple field constructors (shared by tests and harnesses)
# ---------------------------------------------------------------------------

def plane_wave(grid: GridSpec, mode: Sequence[int], amplitudes: Sequence[complex]) -> SpinorField3D:
    """e^{i x . xi0} v with xi0 = (pi/L) * mode, an exact grid frequency."""
    x = grid.axis()
    k0 = np.pi / grid.L * np.asarray(mode, dtype=float)
    phase = np.exp(
        1j * (k0[0] * x[:, None, None] + k0[1] * x[None, :, None] + k0[2] * x[None, None, :])
    )
    v = np.asarray(amplitudes, dtype=complex).reshape(4, 1, 1, 1)
    return SpinorField3D(grid, v * phase[None, :, :, :])


def random_band_limited(
    grid: GridSpec,
    rng: np.random.Generator,
    kmax_frac: float = 0.33,
    normalize: str = "l2",
) -> SpinorField3D:
    """Random smooth field with spectrum inside |xi| <= kmax_frac * k_max."""
    kk = k_magnitude(grid)
    mask = kk <= kmax_frac * grid.k_max
    shape = (4, grid.n, grid.n, grid.n)
    hat = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * mask
    f = SpinorField3D(grid, ifft_values(hat))
    if normalize == "l2":
        f.values /= l2_norm(f)
    elif normalize == "h1":
        f.values /= h1_norm(f)
    return f


def radial_profile_field(
    grid: GridSpec,
    profiles: Sequence[Callable[[ArrayR], ArrayR | ArrayC]],
) -> SpinorField3D:
    """Field whose components are radial functions of |x|.

    profiles is a 4-sequence of callables evaluated on the radius grid;
    use None for a zero component.
    """
    r = position_radius(grid)
    vals = np.zeros((4, grid.n, grid.n, grid.n), dtype=np.complex128)
    for c, prof in enumerate(profiles):
        if prof is not None:
            vals[c] = prof(r)
    return SpinorField3D(grid, vals)
