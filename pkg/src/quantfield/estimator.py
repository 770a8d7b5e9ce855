"""Kernel estimators of conditional distributions, quantiles, and intervals.

Everything is built from two weighted sums over the training pairs: the
covariate-kernel weights give the local mass, and combining them with the
response kernel (its density or its antiderivative) gives the joint
density, the smoothed conditional CDF, and the conditional density.
Quantiles invert the CDF by bisection with a leftmost-root convention;
intervals follow the plug-in normal approximation or pair two quantiles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import BracketError, NoMassError, ZeroDensityError
from .kernels import KernelSpec, bracket_radius, integrated_kernel_values, kernel_constants, kernel_values
from .normal import norm_quantile

__all__ = [
    "Sample",
    "EstimatorConfig",
    "QuantileResult",
    "IntervalResult",
    "density_g",
    "joint_density_f",
    "psi",
    "cond_cdf",
    "cond_density",
    "cond_quantile",
    "local_constant_quantile",
    "plugin_sigma2",
    "confidence_interval",
    "predictive_interval",
]


class Sample:
    """Immutable training pairs: covariates in R^d and scalar responses."""

    __slots__ = ("covariates", "responses")

    def __init__(self, covariates, responses):
        X = np.asarray(covariates, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("covariates must form a nonempty (n, d) array")
        y = np.asarray(responses, dtype=float)
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ValueError("responses must be a vector matching the covariate count")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
            raise ValueError("sample entries must all be finite")
        X = X.copy()
        y = y.copy()
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "covariates", X)
        object.__setattr__(self, "responses", y)

    def __setattr__(self, name, value):
        raise AttributeError("Sample is immutable")

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def d(self) -> int:
        return self.covariates.shape[1]

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"Sample(n={self.n}, d={self.d})"


@dataclass(frozen=True)
class EstimatorConfig:
    """Bandwidth, kernel pair, and numerical tolerances for the estimators.

    One bandwidth smooths both the covariate and the response directions.
    ``mass_threshold`` is the minimum admissible local mass; None means the
    scaled floor 1e-12 / (n h^d), which only rejects points with no
    effective support.
    """

    bandwidth: float
    kernel_x: KernelSpec
    kernel_y: KernelSpec
    mass_threshold: float | None = None
    root_tol: float = 1e-8

    def __post_init__(self) -> None:
        if not (math.isfinite(self.bandwidth) and self.bandwidth > 0.0):
            raise ValueError(f"bandwidth must be strictly positive, got {self.bandwidth}")
        if self.kernel_y.dimension != 1:
            raise ValueError("response kernel must be 1-D")
        if not 0.0 < self.root_tol <= 1e-3:
            raise ValueError(f"root_tol must lie in (0, 1e-3], got {self.root_tol}")
        if self.mass_threshold is not None and not self.mass_threshold > 0.0:
            raise ValueError(f"mass_threshold must be strictly positive, got {self.mass_threshold}")

    def mass_floor(self, n: int) -> float:
        if self.mass_threshold is not None:
            return self.mass_threshold
        return 1e-12 / (n * self.bandwidth ** self.kernel_x.dimension)

    def with_bandwidth(self, h: float) -> "EstimatorConfig":
        return replace(self, bandwidth=h)


@dataclass(frozen=True)
class QuantileResult:
    """Conditional quantile with its inversion diagnostics."""

    value: float
    cdf_at_value: float
    bracket: tuple[float, float]
    iterations: int


@dataclass(frozen=True)
class IntervalResult:
    """A two-sided interval, either plug-in asymptotic or a quantile pair."""

    lower: float
    upper: float
    level: float
    kind: str  # "asymptotic" | "predictive"

    def __post_init__(self) -> None:
        if self.lower > self.upper:
            raise ValueError(f"interval bounds out of order: [{self.lower}, {self.upper}]")

    @property
    def width(self) -> float:
        return self.upper - self.lower


def _weights(sample: Sample, x, cfg: EstimatorConfig) -> np.ndarray:
    """Covariate-kernel weights K((x - X_i)/h) for all training points."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != sample.d:
        raise ValueError(f"query point has dimension {x.size}, sample has {sample.d}")
    if cfg.kernel_x.dimension != sample.d:
        raise ValueError(
            f"covariate kernel dimension {cfg.kernel_x.dimension} does not match sample dimension {sample.d}"
        )
    return kernel_values(cfg.kernel_x, (x - sample.covariates) / cfg.bandwidth)


def _mass(sample: Sample, w: np.ndarray, cfg: EstimatorConfig) -> float:
    return float(w.sum()) / (sample.n * cfg.bandwidth ** sample.d)


def _require_mass(sample: Sample, w: np.ndarray, cfg: EstimatorConfig) -> float:
    g = _mass(sample, w, cfg)
    if g < cfg.mass_floor(sample.n):
        raise NoMassError(f"local mass {g:.3e} below threshold {cfg.mass_floor(sample.n):.3e}")
    return g


def density_g(sample: Sample, x, cfg: EstimatorConfig) -> float:
    """Kernel density of the covariates at x; zero is a legal value."""
    return _mass(sample, _weights(sample, x, cfg), cfg)


def joint_density_f(sample: Sample, x, y: float, cfg: EstimatorConfig) -> float:
    """Kernel estimate of the joint density at (x, y)."""
    w = _weights(sample, x, cfg)
    wy = kernel_values(cfg.kernel_y, ((float(y) - sample.responses) / cfg.bandwidth)[:, None])
    return float(np.sum(w * wy)) / (sample.n * cfg.bandwidth ** (sample.d + 1))


def psi(sample: Sample, x, y: float, cfg: EstimatorConfig) -> float:
    """Smoothed joint mass below y: the CDF numerator, between 0 and g."""
    w = _weights(sample, x, cfg)
    k1 = integrated_kernel_values(cfg.kernel_y, (float(y) - sample.responses) / cfg.bandwidth)
    # sum of w * k1 so the saturated cases (k1 all 0 or all 1) are bitwise exact
    return float(np.sum(w * k1)) / (sample.n * cfg.bandwidth ** sample.d)


def cond_cdf(sample: Sample, x, y: float, cfg: EstimatorConfig) -> float:
    """Conditional CDF estimate at (x, y), in [0, 1] and nondecreasing in y."""
    w = _weights(sample, x, cfg)
    _require_mass(sample, w, cfg)
    return _cdf_from_weights(sample, w, float(y), cfg)


def _cdf_from_weights(sample: Sample, w: np.ndarray, y: float, cfg: EstimatorConfig) -> float:
    k1 = integrated_kernel_values(cfg.kernel_y, (y - sample.responses) / cfg.bandwidth)
    ratio = float(np.sum(w * k1)) / float(np.sum(w))
    return min(max(ratio, 0.0), 1.0)


def cond_density(sample: Sample, x, y: float, cfg: EstimatorConfig) -> float:
    """Conditional density estimate at (x, y); integrates to one in y."""
    w = _weights(sample, x, cfg)
    _require_mass(sample, w, cfg)
    return _density_from_weights(sample, w, float(y), cfg)


def _density_from_weights(sample: Sample, w: np.ndarray, y: float, cfg: EstimatorConfig) -> float:
    wy = kernel_values(cfg.kernel_y, ((y - sample.responses) / cfg.bandwidth)[:, None])
    return float(np.sum(w * wy)) / (float(np.sum(w)) * cfg.bandwidth)


_MAX_BISECT = 200


def cond_quantile(sample: Sample, x, p: float, cfg: EstimatorConfig) -> QuantileResult:
    """Invert the conditional CDF at level p by leftmost-root bisection.

    The bracket spans the responses extended by the response-kernel radius.
    Bisection keeps the invariant F(lo) < p <= F(hi) and returns hi, so on
    a flat stretch of the CDF at level p the left edge is found. Iteration
    stops once the bracket is positionally converged (1e-12 of its initial
    span) and the CDF residual is within root_tol.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {p}")
    w = _weights(sample, x, cfg)
    _require_mass(sample, w, cfg)

    h = cfg.bandwidth
    radius = bracket_radius(cfg.kernel_y, cfg.root_tol)
    y_min = float(sample.responses.min())
    y_max = float(sample.responses.max())

    lo = y_min - h * radius
    hi = y_max + h * radius
    f_lo = _cdf_from_weights(sample, w, lo, cfg)
    f_hi = _cdf_from_weights(sample, w, hi, cfg)
    if not (f_lo < p <= f_hi):
        # Only gaussian response tails can truncate past the level; widen once.
        lo = y_min - 2.0 * h * radius
        hi = y_max + 2.0 * h * radius
        f_lo = _cdf_from_weights(sample, w, lo, cfg)
        f_hi = _cdf_from_weights(sample, w, hi, cfg)
        if not (f_lo < p <= f_hi):
            raise BracketError(
                f"CDF values ({f_lo:.3e}, {f_hi:.3e}) at the bracket ends do not straddle p={p}"
            )

    span = hi - lo
    width_goal = 1e-12 * span
    iterations = 0
    for _ in range(_MAX_BISECT):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        iterations += 1
        f_mid = _cdf_from_weights(sample, w, mid, cfg)
        if f_mid >= p:
            hi = mid
            f_hi = f_mid
        else:
            lo = mid
        if hi - lo <= width_goal and abs(f_hi - p) <= cfg.root_tol:
            break

    return QuantileResult(value=hi, cdf_at_value=f_hi, bracket=(lo, hi), iterations=iterations)


def local_constant_quantile(sample: Sample, x, p: float, cfg: EstimatorConfig) -> float:
    """Check-loss minimizer: the weighted p-quantile of the responses.

    Returns the smallest response whose cumulative normalized covariate
    weight reaches p (leftmost minimizer on flat stretches of the
    objective).
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {p}")
    w = _weights(sample, x, cfg)
    total = float(w.sum())
    if total <= 0.0:
        raise NoMassError("all covariate-kernel weights are zero at the query point")
    order = np.argsort(sample.responses, kind="stable")
    cum = np.cumsum(w[order])
    k = int(np.searchsorted(cum, p * total, side="left"))
    k = min(k, sample.n - 1)
    return float(sample.responses[order[k]])


def plugin_sigma2(sample: Sample, x, y: float, cfg: EstimatorConfig) -> float:
    """Plug-in variance F(1-F)/g times the covariate-kernel L2 norm."""
    w = _weights(sample, x, cfg)
    g = _require_mass(sample, w, cfg)
    f_hat = _cdf_from_weights(sample, w, float(y), cfg)
    l2 = kernel_constants(cfg.kernel_x, cfg.kernel_y).l2_norm_K
    return f_hat * (1.0 - f_hat) / g * l2


def confidence_interval(sample: Sample, x, p: float, alpha: float, cfg: EstimatorConfig) -> IntervalResult:
    """Asymptotic interval for the conditional quantile at level p.

    Centered at the quantile estimate with half-width
    Q_{1-alpha/2} * sigma_hat / (sqrt(n h^d) * f_hat), where sigma_hat is
    the plug-in standard deviation and f_hat the conditional density at
    the quantile.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    q = cond_quantile(sample, x, p, cfg)
    w = _weights(sample, x, cfg)
    g = _require_mass(sample, w, cfg)
    f_val = _density_from_weights(sample, w, q.value, cfg)
    f_hat = _cdf_from_weights(sample, w, q.value, cfg)
    l2 = kernel_constants(cfg.kernel_x, cfg.kernel_y).l2_norm_K
    sigma = math.sqrt(f_hat * (1.0 - f_hat) / g * l2)
    quantile_z = 0.0 if alpha == 1.0 else norm_quantile(1.0 - alpha / 2.0)
    scale = math.sqrt(sample.n * cfg.bandwidth ** sample.d) * f_val
    if quantile_z == 0.0 or sigma == 0.0:
        half = 0.0
    else:
        if f_val <= 0.0:
            raise ZeroDensityError(
                f"conditional density underflowed to {f_val} at the level-{p} quantile"
            )
        half = quantile_z * sigma / scale
        if not math.isfinite(half):
            raise ZeroDensityError("interval half-width overflowed; conditional density too small")
    return IntervalResult(lower=q.value - half, upper=q.value + half, level=1.0 - alpha, kind="asymptotic")


def predictive_interval(sample: Sample, x, p1: float, p2: float, cfg: EstimatorConfig) -> IntervalResult:
    """Interval bounded by the level-p1 and level-p2 conditional quantiles."""
    if not 0.0 < p1 < p2 < 1.0:
        raise ValueError(f"need 0 < p1 < p2 < 1, got p1={p1}, p2={p2}")
    lo = cond_quantile(sample, x, p1, cfg).value
    hi = cond_quantile(sample, x, p2, cfg).value
    return IntervalResult(lower=lo, upper=hi, level=p2 - p1, kind="predictive")
