"""Smoothing-kernel primitives.

Provides the covariate kernel (a product of identical 1-D densities), the
response kernel, its antiderivative (the integrated kernel mapping scaled
residuals to [0, 1]), and the analytic constants that enter the plug-in
variance and bandwidth formulas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .normal import INV_SQRT_2PI, norm_cdf, norm_cdf_array, norm_quantile

GAUSSIAN = "gaussian"
EPANECHNIKOV = "epanechnikov"
FAMILIES = (GAUSSIAN, EPANECHNIKOV)

# 1-D closed forms: second moment (int t^2 k) and L2 norm (int k^2).
_SECOND_MOMENT_1D = {GAUSSIAN: 1.0, EPANECHNIKOV: 0.2}
_L2_NORM_1D = {GAUSSIAN: 1.0 / (2.0 * math.sqrt(math.pi)), EPANECHNIKOV: 0.6}


@dataclass(frozen=True)
class KernelSpec:
    """A smoothing kernel: `family` applied per coordinate, product form in d > 1."""

    family: str
    dimension: int = 1

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        if not isinstance(self.dimension, int) or self.dimension < 1:
            raise ValueError(f"kernel dimension must be a positive integer, got {self.dimension!r}")

    @property
    def compact_support(self) -> bool:
        """Documentation flag: True when the kernel vanishes outside [-1, 1]^d."""
        return self.family == EPANECHNIKOV


@dataclass(frozen=True)
class KernelConstants:
    """Analytic constants of a (covariate, response) kernel pair."""

    second_moment_K: float  # int ||s||^2 K(s) ds over R^d
    l2_norm_K: float        # int K(z)^2 dz over R^d
    second_moment_w: float  # int t^2 w(t) dt over R

    def __post_init__(self) -> None:
        for name in ("second_moment_K", "l2_norm_K", "second_moment_w"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be finite and strictly positive, got {v}")


def _eval_1d(family: str, t: np.ndarray) -> np.ndarray:
    if family == GAUSSIAN:
        return INV_SQRT_2PI * np.exp(-0.5 * t * t)
    return np.where(np.abs(t) <= 1.0, 0.75 * (1.0 - t * t), 0.0)


def kernel_values(spec: KernelSpec, diffs: np.ndarray) -> np.ndarray:
    """Product-kernel values for an (n, d) array of scaled differences."""
    diffs = np.atleast_2d(np.asarray(diffs, dtype=float))
    if diffs.shape[1] != spec.dimension:
        raise ValueError(
            f"argument dimension {diffs.shape[1]} does not match kernel dimension {spec.dimension}"
        )
    if spec.family == GAUSSIAN:
        return INV_SQRT_2PI ** spec.dimension * np.exp(-0.5 * np.sum(diffs * diffs, axis=1))
    return np.prod(_eval_1d(spec.family, diffs), axis=1)


def eval_kernel(spec: KernelSpec, u) -> float:
    """Evaluate the kernel density at a point of matching dimension."""
    u = np.asarray(u, dtype=float).ravel()
    if u.size != spec.dimension:
        raise ValueError(f"point has dimension {u.size}, kernel expects {spec.dimension}")
    return float(kernel_values(spec, u[None, :])[0])


def integrated_kernel_values(spec: KernelSpec, t: np.ndarray) -> np.ndarray:
    """Antiderivative of the 1-D kernel on an array of scaled residuals."""
    if spec.dimension != 1:
        raise ValueError("integrated kernel is defined for 1-D kernels only")
    t = np.asarray(t, dtype=float)
    if spec.family == GAUSSIAN:
        return norm_cdf_array(t)
    tc = np.clip(t, -1.0, 1.0)
    return 0.5 + tc * (0.75 - 0.25 * tc * tc)


def integrated_kernel(spec: KernelSpec, u: float) -> float:
    """Mass of the 1-D kernel to the left of u; 0 at -inf, 1 at +inf."""
    if spec.dimension != 1:
        raise ValueError("integrated kernel is defined for 1-D kernels only")
    u = float(u)
    if spec.family == GAUSSIAN:
        return norm_cdf(u)
    if u <= -1.0:
        return 0.0
    if u >= 1.0:
        return 1.0
    return 0.5 + u * (0.75 - 0.25 * u * u)


def kernel_constants(spec_K: KernelSpec, spec_w: KernelSpec) -> KernelConstants:
    """Closed-form constants for a covariate kernel and a 1-D response kernel.

    The product form factorizes both integrals: the d-dimensional second
    moment is d times the 1-D one, and the d-dimensional L2 norm is the
    1-D value to the d-th power.
    """
    if spec_w.dimension != 1:
        raise ValueError("response kernel must be 1-D")
    d = spec_K.dimension
    return KernelConstants(
        second_moment_K=d * _SECOND_MOMENT_1D[spec_K.family],
        l2_norm_K=_L2_NORM_1D[spec_K.family] ** d,
        second_moment_w=_SECOND_MOMENT_1D[spec_w.family],
    )


def bracket_radius(spec_w: KernelSpec, tol: float) -> float:
    """Radius beyond which the integrated kernel is within tol of {0, 1}.

    Exact support radius for compact kernels; a tail radius for the
    gaussian, so root brackets built from it straddle any level in
    (tol, 1 - tol).
    """
    if spec_w.dimension != 1:
        raise ValueError("bracket radius is defined for 1-D kernels only")
    if spec_w.family == EPANECHNIKOV:
        return 1.0
    return -norm_quantile(min(max(tol, 1e-300), 0.5))
