"""Matrix potentials V(x) = V1(|x|) I + i beta (alpha . x/|x|) V2(|x|).

The second term is hermitian and squares to V2^2 I, so the whole
potential is a pointwise hermitian 4x4 field with eigenvalues V1 +- V2.
An optional non-radial hermitian perturbation with a declared angular
band is supported for the angular-regularity experiments.

Admissibility classes:
  vhp      |V|, |grad V|  <= delta / (<x>^{1/2+eps} w^{1/2})
  v_class  |V| <= delta / v,   |grad V| <= C / v
  angular  same as v_class but with Lambda_omega^s shell norms of V
           and grad V on the left side
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import sphere
from .clifford import (
    ALPHA,
    BETA,
    ArrayC,
    ArrayR,
    GridSpec,
    SpinorField3D,
    position_radius,
    position_unit,
)
from .weights import (
    DEFAULT_EPS,
    DEFAULT_SIGMA,
    WeightFunction,
    clamp_radius,
    japanese_bracket,
    log_weight_half,
    mixed_growth,
)


class OriginClampWarning(UserWarning):
    """A potential profile was clamped at the innermost radius."""


_GENERATORS = {
    "identity": np.eye(4, dtype=complex),
    "beta": BETA,
    "alpha3": ALPHA[2],
}


@dataclass(frozen=True)
class AngularPerturbation:
    """Small non-radial hermitian term  amp * g(r) * Re Y_l^m(xhat) * H."""

    amplitude: float
    l: int = 2
    m: int = 1
    r0: float = 3.0
    width: float = 1.5
    generator: str = "beta"

    def radial(self, r: ArrayR) -> ArrayR:
        return self.amplitude * np.exp(-(((r - self.r0) / self.width) ** 2))

    def matrix(self) -> ArrayC:
        return _GENERATORS[self.generator]


@dataclass(frozen=True)
class PotentialSpec:
    """Declarative description of a potential; assemble() turns it into grids.

    kind is one of zero, gaussian_bump, smooth_core, saturating_vhp,
    shell, table.
    amplitude1/amplitude2 scale the scalar and the i beta (alpha.xhat)
    profiles.  sigma and eps parametrize the weights used when checking
    admissibility; delta is the smallness target the profile is meant to
    satisfy.
    """

    kind: str = "zero"
    amplitude1: float = 0.0
    amplitude2: float = 0.0
    r0: float = 2.0
    width: float = 1.0
    delta: float = 0.05
    sigma: float = DEFAULT_SIGMA
    eps: float = DEFAULT_EPS
    table_r: Optional[tuple[float, ...]] = None
    table_v1: Optional[tuple[float, ...]] = None
    table_v2: Optional[tuple[float, ...]] = None
    angular: Optional[AngularPerturbation] = None

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls) -> "PotentialSpec":
        return cls()

    @classmethod
    def gaussian_bump(cls, amplitude1=0.05, amplitude2=0.0, r0=2.0, width=1.0, **kw):
        return cls(kind="gaussian_bump", amplitude1=amplitude1, amplitude2=amplitude2,
                   r0=r0, width=width, **kw)

    @classmethod
    def saturating_vhp(cls, amplitude1=0.05, amplitude2=0.0, **kw):
        return cls(kind="saturating_vhp", amplitude1=amplitude1, amplitude2=amplitude2, **kw)

    @classmethod
    def shell(cls, amplitude1=0.05, amplitude2=0.0, r0=3.0, width=1.5, **kw):
        return cls(kind="shell", amplitude1=amplitude1, amplitude2=amplitude2,
                   r0=r0, width=width, **kw)

    @classmethod
    def smooth_core(cls, amplitude1=0.05, amplitude2=0.0, r0=2.0, width=2.0, **kw):
        """Gaussian envelope with V1 even and V2 odd in r.

        The parity pattern makes the assembled 3D matrix infinitely
        smooth (V2 odd cancels the x/|x| kink), so sector and band-limit
        checks see no aliasing floor from the potential itself.
        """
        return cls(kind="smooth_core", amplitude1=amplitude1, amplitude2=amplitude2,
                   r0=r0, width=width, **kw)

    @classmethod
    def from_table(cls, r, v1, v2=None, **kw):
        r = tuple(float(x) for x in r)
        if any(b <= a for a, b in zip(r, r[1:])):
            raise ValueError("table radii must be strictly increasing")
        v2 = v2 if v2 is not None else tuple(0.0 for _ in r)
        # amplitudes act as scale factors on the tabulated values, so
        # calibration works the same way as for the named profiles
        kw.setdefault("amplitude1", 1.0)
        kw.setdefault("amplitude2", 1.0)
        return cls(kind="table", table_r=r, table_v1=tuple(map(float, v1)),
                   table_v2=tuple(map(float, v2)), **kw)

    # -- radial profiles ---------------------------------------------------

    def profile(self, which: int, r: ArrayR) -> ArrayR:
        """V1(r) or V2(r) on positive radii (no clamping here)."""
        r = np.asarray(r, dtype=float)
        amp = self.amplitude1 if which == 1 else self.amplitude2
        if self.kind == "zero" or amp == 0.0:
            return np.zeros_like(r)
        if self.kind == "gaussian_bump":
            return amp * np.exp(-(((r - self.r0) / self.width) ** 2))
        if self.kind == "smooth_core":
            env = np.exp(-((r / self.width) ** 2))
            return amp * env if which == 1 else amp * (r / self.r0) * env
        if self.kind == "saturating_vhp":
            # designed so the vhp ratio is nearly flat in r
            return amp / (np.sqrt(r) * (1.0 + np.abs(np.log(r))) ** self.sigma * (1.0 + r))
        if self.kind == "shell":
            # function of r^2, smooth across the origin
            return amp * (r ** 2 / self.r0 ** 2) * np.exp(
                -(((r ** 2 - self.r0 ** 2) / (2.0 * self.r0 * self.width)) ** 2)
            )
        if self.kind == "table":
            tab = self.table_v1 if which == 1 else self.table_v2
            interp = PchipInterpolator(self.table_r, tab, extrapolate=False)
            out = interp(np.clip(r, self.table_r[0], self.table_r[-1]))
            return amp * np.asarray(out) * (r <= self.table_r[-1])
        raise ValueError(f"unknown potential kind {self.kind!r}")

    def is_zero(self) -> bool:
        return (
            self.kind == "zero"
            or (self.amplitude1 == 0.0 and self.amplitude2 == 0.0 and self.angular is None)
        )

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "amplitude1": self.amplitude1,
            "amplitude2": self.amplitude2,
            "r0": self.r0,
            "width": self.width,
            "delta": self.delta,
            "sigma": self.sigma,
            "eps": self.eps,
        }
        if self.table_r is not None:
            out["table"] = [list(self.table_r), list(self.table_v1), list(self.table_v2)]
        if self.angular is not None:
            a = self.angular
            out["angular"] = [a.amplitude, a.l, a.m, a.r0, a.width, a.generator]
        return out


# ---------------------------------------------------------------------------
# Grid assembly and pointwise application
# ---------------------------------------------------------------------------

@dataclass
class PotentialOnGrid:
    """Potential sampled on a grid, ready for pointwise application."""

    spec: PotentialSpec
    grid: GridSpec
    v1: ArrayR
    v2: ArrayR
    extra: Optional[ArrayC] = None  # dense (4,4,n,n,n) hermitian addition

    def is_structured(self) -> bool:
        return self.extra is None

    def apply_values(self, u: ArrayC) -> ArrayC:
        from .clifford import alpha_dot_apply

        xh = position_unit(self.grid)
        out = self.v1 * u
        if np.any(self.v2):
            # i beta (alpha.xhat) u, beta = diag(1,1,-1,-1)
            m = alpha_dot_apply(xh[0], xh[1], xh[2], u)
            m[:2] *= 1j
            m[2:] *= -1j
            out += self.v2 * m
        if self.extra is not None:
            out += np.einsum("ab...,b...->a...", self.extra, u)
        return out

    def operator_norm(self) -> ArrayR:
        """Pointwise operator norm |V(x)| on the grid."""
        if self.extra is None:
            return np.abs(self.v1) + np.abs(self.v2)
        dense = self.dense_matrix()
        flat = dense.reshape(4, 4, -1).transpose(2, 0, 1)
        sv = np.linalg.svd(flat, compute_uv=False)
        return sv[:, 0].reshape(self.v1.shape)

    def dense_matrix(self) -> ArrayC:
        """Full (4,4,n,n,n) hermitian matrix field."""
        n = self.grid.n
        xh = position_unit(self.grid)
        out = np.zeros((4, 4, n, n, n), dtype=np.complex128)
        idx = np.arange(4)
        out[idx, idx] = self.v1
        ax = sum(a[:, :, None, None, None] * xh[j][None, None] for j, a in enumerate(ALPHA))
        out += 1j * self.v2 * np.einsum("ab,bc...->ac...", BETA, ax)
        if self.extra is not None:
            out += self.extra
        return out


def assemble(spec: PotentialSpec, grid: GridSpec) -> PotentialOnGrid:
    """Sample the potential on the grid, patching the origin node.

    The origin node gets the exact r -> 0 limit when the profile has one;
    a single mispatched node acts as a delta and pollutes every angular
    channel.  Profiles that are singular at the origin are clamped at half
    a cell instead, and the clamp is reported with a warning.
    """
    r_min = 0.5 * grid.dx
    r_true = position_radius(grid)
    origin = r_true == 0.0
    r = clamp_radius(r_true, r_min)
    v1 = spec.profile(1, r)
    v2 = spec.profile(2, r)
    for which, arr in ((1, v1), (2, v2)):
        with np.errstate(all="ignore"):
            head0 = float(spec.profile(which, np.asarray([0.0]))[0])
        if np.isfinite(head0):
            arr[origin] = head0
            continue
        head = abs(float(spec.profile(which, np.asarray([r_min]))[0]))
        ref = abs(float(spec.profile(which, np.asarray([4.0 * r_min]))[0]))
        if head > 5.0 * max(ref, 1e-300):
            warnings.warn(
                f"V{which} grows toward the origin; clamped at r = {r_min:.4g}",
                OriginClampWarning,
            )
    # the unit vector has no limit at the origin, so the V2 term is
    # dropped on that node no matter what the profile does
    v2[origin] = 0.0
    extra = None
    if spec.angular is not None:
        pert = spec.angular
        xh = position_unit(grid)
        theta = np.arccos(np.clip(xh[2], -1.0, 1.0))
        phi = np.arctan2(xh[1], xh[0])
        ang = np.real(sphere.ylm(pert.l, pert.m, theta, phi))
        scalar = pert.radial(r) * ang
        extra = pert.matrix()[:, :, None, None, None] * scalar[None, None]
    return PotentialOnGrid(spec=spec, grid=grid, v1=v1, v2=v2, extra=extra)


def apply(pot: PotentialOnGrid | PotentialSpec, u: SpinorField3D) -> SpinorField3D:
    """V u, pointwise."""
    if isinstance(pot, PotentialSpec):
        pot = assemble(pot, u.grid)
    if pot.grid != u.grid:
        raise ValueError("potential and field live on different grids")
    return SpinorField3D(u.grid, pot.apply_values(u.values))


# ---------------------------------------------------------------------------
# Admissibility
# ---------------------------------------------------------------------------

@dataclass
class AdmissibilityRow:
    label: str
    sup_ratio: float
    bound: float
    r_at_sup: float

    @property
    def passed(self) -> bool:
        return self.sup_ratio <= self.bound


@dataclass
class AdmissibilityReport:
    klass: str
    delta: float
    rows: list[AdmissibilityRow] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def table(self) -> str:
        lines = [f"class {self.klass}, delta = {self.delta:g}"]
        lines.append("%-26s %12s %12s %10s  %s" % ("quantity", "sup", "bound", "at r", "pass"))
        for r in self.rows:
            lines.append("%-26s %12.4e %12.4e %10.3g  %s"
                         % (r.label, r.sup_ratio, r.bound, r.r_at_sup, r.passed))
        lines += self.notes
        return "\n".join(lines)


def _check_mesh(grid: GridSpec, n: int = 1200) -> ArrayR:
    """Radial evaluation mesh from the clamp radius to the box diagonal."""
    r_min = 0.5 * grid.dx
    r_max = np.sqrt(3.0) * grid.L
    if r_min >= 1.0:
        return np.linspace(r_min, r_max, n)
    lo = np.geomspace(r_min, 1.0, n // 3, endpoint=False)
    hi = np.linspace(1.0, r_max, n - n // 3)
    return np.concatenate([lo, hi])


def _structured_norms(spec: PotentialSpec, r: ArrayR) -> tuple[ArrayR, ArrayR]:
    """Pointwise |V| and |grad V| for the radial structured potential.

    Both are angle independent:  |V| = max |V1 +- V2|  and
    |grad V|^2 = max|V1' +- V2'|^2 + 2 V2^2 / r^2.
    """
    v1 = spec.profile(1, r)
    v2 = spec.profile(2, r)
    opn = np.maximum(np.abs(v1 + v2), np.abs(v1 - v2))
    v1p = np.gradient(v1, r)
    v2p = np.gradient(v2, r)
    radial_part = np.maximum(np.abs(v1p + v2p), np.abs(v1p - v2p))
    grad = np.sqrt(radial_part ** 2 + 2.0 * (v2 / r) ** 2)
    return opn, grad


def _row(label: str, ratio: ArrayR, bound: float, r: ArrayR) -> AdmissibilityRow:
    i = int(np.argmax(ratio))
    return AdmissibilityRow(label, float(ratio[i]), bound, float(r[i]))


def check_admissibility(
    spec: PotentialSpec,
    grid: GridSpec,
    klass: str = "vhp",
    delta: Optional[float] = None,
    grad_cap: float = 1e3,
    s: float = 1.5,
    angular_grid: Optional[sphere.AngularGrid] = None,
) -> AdmissibilityReport:
    """Evaluate the class bounds on a dense radial mesh and report sups.

    klass is vhp, v_class, or angular.  grad_cap is the arbitrary
    constant C allowed on gradients in the v-based classes.  For the
    angular class, shell norms of Lambda_omega^s V are computed by
    quadrature when a non-radial part is present, and in closed form
    otherwise (the structured potential has only l = 0 and l = 1
    angular content).
    """
    delta = spec.delta if delta is None else delta
    r = _check_mesh(grid)
    report = AdmissibilityReport(klass=klass, delta=delta)

    if klass == "vhp":
        w = log_weight_half(spec.sigma)
        br = japanese_bracket(spec.eps)
        denom_inv = br(r) * w(r)  # bound is delta / (<x> w^{1/2})
        opn, grad = _structured_norms(spec, r)
        if spec.angular is not None:
            opn, grad = _dense_norms(spec, r, angular_grid or sphere.AngularGrid())
        report.rows.append(_row("|V| <x>^{1/2+} w^{1/2}", opn * denom_inv, delta, r))
        report.rows.append(_row("|grad V| <x>^{1/2+} w^{1/2}", grad * denom_inv, delta, r))
    elif klass == "v_class":
        v = mixed_growth(spec.eps)
        vv = v(r)
        opn, grad = _structured_norms(spec, r)
        if spec.angular is not None:
            opn, grad = _dense_norms(spec, r, angular_grid or sphere.AngularGrid())
        report.rows.append(_row("|V| v", opn * vv, delta, r))
        report.rows.append(_row("|grad V| v", grad * vv, grad_cap, r))
    elif klass == "angular":
        v = mixed_growth(spec.eps)
        vv = v(r)
        lam_v, lam_grad = _angular_shell_norms(spec, r, s, angular_grid or sphere.AngularGrid())
        report.rows.append(_row(f"||Lam^{s:g} V|| v", lam_v * vv, delta, r))
        report.rows.append(_row(f"||Lam^{s:g} grad V|| v", lam_grad * vv, grad_cap, r))
    else:
        raise ValueError(f"unknown admissibility class {klass!r}")

    r_min = 0.5 * grid.dx
    head = float(_structured_norms(spec, np.asarray([r_min, 4 * r_min]))[0][0])
    if head > 0 and spec.kind in ("saturating_vhp", "table"):
        report.notes.append(f"profile evaluated down to clamp radius {r_min:.4g}")
    return report


def _dense_norms(spec, r, agrid):
    """|V| and |grad V| by quadrature over angles (angular part present)."""
    om = sphere.unit_vectors(agrid)
    vals = _sample_matrix(spec, r, om)  # (nr, nt, np, 4, 4)
    opn = np.linalg.matrix_norm(vals, ord=2).max(axis=(1, 2))
    grads = _sample_matrix_gradient(spec, r, om)  # (3, nr, nt, np, 4, 4)
    gn = np.sqrt(np.sum(np.linalg.matrix_norm(grads, ord=2) ** 2, axis=0))
    return opn, gn.max(axis=(1, 2))


def _sample_matrix(spec: PotentialSpec, r: ArrayR, om: ArrayR) -> ArrayC:
    nr, (_, nt, nph) = len(r), om.shape
    v1 = spec.profile(1, r)[:, None, None]
    v2 = spec.profile(2, r)[:, None, None]
    ax = sum(a[None, None, None] * om[j][None, :, :, None, None] for j, a in enumerate(ALPHA))
    out = np.zeros((nr, nt, nph, 4, 4), dtype=complex)
    out += v1[..., None, None] * np.eye(4)
    out += 1j * v2[..., None, None] * np.einsum("ab,...bc->...ac", BETA, ax)
    if spec.angular is not None:
        p = spec.angular
        theta = np.arccos(np.clip(om[2], -1, 1))
        phi = np.arctan2(om[1], om[0])
        ang = np.real(sphere.ylm(p.l, p.m, theta, phi))
        out += (p.radial(r)[:, None, None] * ang[None])[..., None, None] * p.matrix()
    return out


def _sample_matrix_gradient(spec, r, om, h=1e-4):
    """Central differences of V along the three axes, sampled on shells."""
    def v_at(points):
        rr = np.sqrt(np.sum(points ** 2, axis=0))
        rr = np.maximum(rr, 1e-8)
        oo = points / rr
        # evaluate entry by entry through _sample_matrix's machinery on
        # a flattened pseudo-shell: radius varies per point here, so
        # build directly
        v1 = spec.profile(1, rr)[..., None, None]
        v2 = spec.profile(2, rr)[..., None, None]
        ax = sum(ALPHA[j] * oo[j][..., None, None] for j in range(3))
        out = v1 * np.eye(4) + 1j * v2 * np.einsum("ab,...bc->...ac", BETA, ax)
        if spec.angular is not None:
            p = spec.angular
            theta = np.arccos(np.clip(oo[2], -1, 1))
            phi = np.arctan2(oo[1], oo[0])
            ang = np.real(sphere.ylm(p.l, p.m, theta, phi))
            out = out + (p.radial(rr) * ang)[..., None, None] * p.matrix()
        return out

    pts = r[:, None, None, None] * om[None]  # (nr, 3, nt, np)
    pts = np.moveaxis(pts, 1, 0)  # (3, nr, nt, np)
    grads = []
    for j in range(3):
        dp = np.zeros_like(pts)
        dp[j] = h
        grads.append((v_at(pts + dp) - v_at(pts - dp)) / (2 * h))
    return np.stack(grads)


def _angular_shell_norms(spec, r, s, agrid):
    """||Lam^s V(r.)||_{L2(S2)} and the same for grad V, per radius."""
    om = sphere.unit_vectors(agrid)
    lmax = min(agrid.lmax, 8 if spec.angular is None else max(8, spec.angular.l + 2))
    vals = _sample_matrix(spec, r, om)  # (nr, nt, np, 4, 4)
    vt = np.moveaxis(vals, (-2, -1), (1, 2))  # (nr, 4, 4, nt, np)
    sm = sphere.apply_angular_sobolev(agrid, vt, s, lmax)
    opn = np.linalg.matrix_norm(np.moveaxis(sm, (1, 2), (-2, -1)), ord=2)
    lam_v = np.sqrt(np.sum(sphere.quad_weights(agrid) * opn ** 2, axis=(1, 2)))

    grads = _sample_matrix_gradient(spec, r, om)  # (3, nr, nt, np, 4, 4)
    gt = np.moveaxis(grads, (-2, -1), (2, 3))  # (3, nr, 4, 4, nt, np)
    gsm = sphere.apply_angular_sobolev(agrid, gt, s, lmax)
    gn = np.linalg.matrix_norm(np.moveaxis(gsm, (2, 3), (-2, -1)), ord=2)
    gtot = np.sqrt(np.sum(gn ** 2, axis=0))
    lam_g = np.sqrt(np.sum(sphere.quad_weights(agrid) * gtot ** 2, axis=(1, 2)))
    return lam_v, lam_g


def calibrate_amplitude(
    spec: PotentialSpec,
    grid: GridSpec,
    klass: str = "vhp",
    delta: Optional[float] = None,
    **kw,
) -> PotentialSpec:
    """Rescale amplitudes so the leading class ratio saturates delta.

    The |V| bound is linear in the amplitudes, so one evaluation
    suffices.  Gradient rows are checked afterwards by the caller if
    they matter.
    """
    delta = spec.delta if delta is None else delta
    report = check_admissibility(spec, grid, klass=klass, delta=delta, **kw)
    if all(r.sup_ratio == 0.0 for r in report.rows):
        raise ValueError("cannot calibrate a zero potential")
    # every row is linear in the amplitudes; shrink until the tightest
    # fits, with a hair of margin so roundoff cannot tip it back over
    c = 0.999 * min(r.bound / r.sup_ratio for r in report.rows if r.sup_ratio > 0)
    return replace(spec, amplitude1=spec.amplitude1 * c, amplitude2=spec.amplitude2 * c,
                   delta=delta,
                   angular=None if spec.angular is None
                   else replace(spec.angular, amplitude=spec.angular.amplitude * c))
