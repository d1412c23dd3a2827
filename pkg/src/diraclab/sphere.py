"""Unit-sphere quadrature and scalar spherical harmonics.

Gauss-Legendre nodes in cos(theta) crossed with a uniform phi grid, plus
a plain associated-Legendre implementation of Y_lm (Condon-Shortley
phase, orthonormal on the sphere).  Shared by the partial-wave basis and
the angular-regularity norms.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, lpmv

from .clifford import ArrayC, ArrayR


@dataclass(frozen=True)
class AngularGrid:
    """Quadrature grid on S^2, exact for products up to degree 2 n_theta - 1."""

    n_theta: int = 16
    n_phi: int = 32

    def __post_init__(self):
        if self.n_theta < 2 or self.n_phi < 4:
            raise ValueError("angular grid too small")

    @property
    def lmax(self) -> int:
        """Largest degree the grid can analyze exactly."""
        return min(self.n_theta - 1, (self.n_phi - 1) // 2)


@lru_cache(maxsize=8)
def _gauss_legendre(n: int) -> tuple[ArrayR, ArrayR]:
    return np.polynomial.legendre.leggauss(n)


@lru_cache(maxsize=8)
def grid_angles(g: AngularGrid) -> tuple[ArrayR, ArrayR]:
    """theta (n_theta,) and phi (n_phi,) node vectors."""
    nodes, _ = _gauss_legendre(g.n_theta)
    theta = np.arccos(nodes[::-1])  # increasing theta
    phi = 2.0 * np.pi * np.arange(g.n_phi) / g.n_phi
    return theta, phi


@lru_cache(maxsize=8)
def quad_weights(g: AngularGrid) -> ArrayR:
    """(n_theta, n_phi) weights with sum exactly 4 pi."""
    _, w = _gauss_legendre(g.n_theta)
    wt = w[::-1][:, None] * (2.0 * np.pi / g.n_phi)
    return np.broadcast_to(wt, (g.n_theta, g.n_phi)).copy()


@lru_cache(maxsize=8)
def unit_vectors(g: AngularGrid) -> ArrayR:
    """(3, n_theta, n_phi) cartesian directions."""
    theta, phi = grid_angles(g)
    st = np.sin(theta)[:, None]
    ct = np.cos(theta)[:, None]
    return np.stack(
        [st * np.cos(phi)[None, :], st * np.sin(phi)[None, :], ct * np.ones_like(phi)[None, :]]
    )


def ylm(l: int, m: int, theta: ArrayR, phi: ArrayR) -> ArrayC:
    """Orthonormal Y_l^m with the Condon-Shortley phase.

    theta and phi are broadcast against each other.
    """
    if abs(m) > l:
        raise ValueError(f"|m| = {abs(m)} exceeds l = {l}")
    ma = abs(m)
    lognorm = 0.5 * (
        np.log((2 * l + 1) / (4.0 * np.pi)) + gammaln(l - ma + 1) - gammaln(l + ma + 1)
    )
    # lpmv carries the (-1)^m Condon-Shortley factor already
    p = lpmv(ma, l, np.cos(theta))
    y = np.exp(lognorm) * p * np.exp(1j * ma * np.asarray(phi))
    if m < 0:
        y = (-1.0) ** ma * np.conj(y)
    return y


def degree_index(lmax: int) -> list[tuple[int, int]]:
    return [(l, m) for l in range(lmax + 1) for m in range(-l, l + 1)]


@lru_cache(maxsize=16)
def _ylm_matrix(g: AngularGrid, lmax: int) -> ArrayC:
    """((lmax+1)^2, n_theta, n_phi) table of Y_lm samples."""
    theta, phi = grid_angles(g)
    th = theta[:, None]
    ph = phi[None, :]
    rows = [ylm(l, m, th, ph) for l, m in degree_index(lmax)]
    return np.stack([np.broadcast_to(r, (g.n_theta, g.n_phi)) for r in rows])


def sh_analyze(g: AngularGrid, values: ArrayC, lmax: int) -> ArrayC:
    """Coefficients <f, Y_lm> for f sampled on the grid.

    values: (..., n_theta, n_phi).  Returns (..., (lmax+1)^2) in the
    degree_index order.  Exact for content up to the grid's lmax.
    """
    if lmax > g.lmax:
        raise ValueError(f"lmax {lmax} beyond grid capacity {g.lmax}")
    tbl = _ylm_matrix(g, lmax)
    w = quad_weights(g)
    return np.tensordot(values, np.conj(tbl) * w, axes=[(-2, -1), (-2, -1)])


def sh_synthesize(g: AngularGrid, coeffs: ArrayC, lmax: int) -> ArrayC:
    """Inverse of sh_analyze on band-limited data."""
    tbl = _ylm_matrix(g, lmax)
    return np.tensordot(coeffs, tbl, axes=[(-1,), (0,)])


def angular_weights(lmax: int, s: float) -> ArrayR:
    """(1 + l(l+1))^{s/2} per (l, m) slot, the (1 - sphere Laplacian)^{s/2} symbol."""
    return np.array([(1.0 + l * (l + 1)) ** (0.5 * s) for l, m in degree_index(lmax)])


def apply_angular_sobolev(g: AngularGrid, values: ArrayC, s: float, lmax: int) -> ArrayC:
    """(1 - Laplace_omega)^{s/2} of sphere-sampled data, truncated at lmax."""
    coeffs = sh_analyze(g, values, lmax)
    return sh_synthesize(g, coeffs * angular_weights(lmax, s), lmax)


def sphere_l2(g: AngularGrid, values: ArrayC) -> ArrayR:
    """L^2(S^2) norm over the trailing angular axes (componentwise sum first).

    values: (..., n_theta, n_phi) or (..., c, n_theta, n_phi) handled by the
    caller; this reduces only the last two axes.
    """
    w = quad_weights(g)
    return np.sqrt(np.sum(w * np.abs(values) ** 2, axis=(-2, -1)))


def sphere_lp(g: AngularGrid, values: ArrayR, p: float) -> ArrayR:
    """L^p(S^2) quadrature norm of a nonnegative sample array."""
    w = quad_weights(g)
    return np.sum(w * values ** p, axis=(-2, -1)) ** (1.0 / p)
