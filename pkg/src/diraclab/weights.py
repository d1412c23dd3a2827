"""Radial weight functions used by smoothing norms and admissibility checks.

All weights are functions of r = |x| > 0 and are evaluated with the
radius clamped away from zero by the caller when grid nodes are
involved.  The "+" in exponents like 1/2+ is realized as a concrete
epsilon, configurable and defaulting to 0.1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .clifford import ArrayR

DEFAULT_SIGMA = 1.5
DEFAULT_EPS = 0.1


@dataclass(frozen=True)
class WeightFunction:
    """Named positive radial weight with its parameters baked in."""

    name: str
    params: tuple[tuple[str, float], ...]
    fn: Callable[[ArrayR], ArrayR]

    def __call__(self, r: ArrayR) -> ArrayR:
        return self.fn(np.asarray(r, dtype=float))

    def describe(self) -> str:
        ps = ", ".join(f"{k}={v:g}" for k, v in self.params)
        return f"{self.name}({ps})" if ps else self.name


def log_weight_half(sigma: float = DEFAULT_SIGMA) -> WeightFunction:
    """w^{1/2}(r) = r (1 + |log r|)^sigma, the square root of the
    logarithmic smoothing weight."""

    def fn(r):
        return r * (1.0 + np.abs(np.log(r))) ** sigma

    return WeightFunction("log_weight_half", (("sigma", sigma),), fn)


def japanese_bracket(eps: float = DEFAULT_EPS) -> WeightFunction:
    """<x>^{1/2+eps} = (1 + r^2)^{(1/2+eps)/2}."""

    def fn(r):
        return (1.0 + r ** 2) ** (0.5 * (0.5 + eps))

    return WeightFunction("japanese_bracket", (("eps", eps),), fn)


def mixed_growth(eps: float = DEFAULT_EPS) -> WeightFunction:
    """v(r) = r^{1/2} |log r|^{1/2+eps} + r^{1+eps}.

    Vanishes only at r = 0; the |log| factor dips to zero at r = 1 where
    the polynomial term takes over.
    """

    def fn(r):
        return np.sqrt(r) * np.abs(np.log(r)) ** (0.5 + eps) + r ** (1.0 + eps)

    return WeightFunction("mixed_growth", (("eps", eps),), fn)


def clamp_radius(r: ArrayR, r_min: float) -> ArrayR:
    return np.maximum(np.asarray(r, dtype=float), r_min)
