"""Lattice Gaussian random fields and the synthetic spatial response model.

Simulation follows the dense route: assemble the squared-exponential
covariance over all grid sites, factorize it once per (spec, region), and
map seeded standard normals through the factor. Factors and the local
dependency weights are cached per region, so repeated draws only pay for
the matrix-vector product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import FactorizationError

# Escalation rungs for the covariance diagonal, as multiples of the variance.
JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6)

MASK_SIDE = 21
MASK_TAIL = 15


@dataclass(frozen=True)
class GridRegion:
    """Rectangular integer lattice {1..n1} x {1..n2}, row-major site order."""

    n1: int
    n2: int

    def __post_init__(self) -> None:
        if not (isinstance(self.n1, int) and isinstance(self.n2, int)):
            raise ValueError("grid side lengths must be integers")
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError(f"grid side lengths must be positive, got {self.n1}x{self.n2}")

    @property
    def n_sites(self) -> int:
        return self.n1 * self.n2

    def sites(self) -> np.ndarray:
        """All sites as an (n1*n2, 2) int array, i varying slowest."""
        return _region_sites(self.n1, self.n2)

    def contains(self, site) -> bool:
        i, j = site
        return 1 <= i <= self.n1 and 1 <= j <= self.n2

    def site_index(self, site) -> int:
        """Row-major index of a site; raises if outside the region."""
        if not self.contains(site):
            raise ValueError(f"site {tuple(site)} lies outside region {self.n1}x{self.n2}")
        i, j = site
        return (int(i) - 1) * self.n2 + (int(j) - 1)


@lru_cache(maxsize=8)
def _region_sites(n1: int, n2: int) -> np.ndarray:
    ii, jj = np.meshgrid(np.arange(1, n1 + 1), np.arange(1, n2 + 1), indexing="ij")
    out = np.column_stack([ii.ravel(), jj.ravel()]).astype(np.int64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class GrfSpec:
    """Gaussian random field: mean and squared-exponential covariance.

    Covariance between sites at lag ``t`` is ``variance * exp(-(|t|/scale)^2)``.
    ``jitter`` is a base ridge added to the covariance diagonal before
    factorization; escalation beyond it is automatic.
    """

    mean: float
    variance: float
    scale: float
    jitter: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.variance) and self.variance > 0.0):
            raise ValueError(f"variance must be strictly positive, got {self.variance}")
        if not (math.isfinite(self.scale) and self.scale > 0.0):
            raise ValueError(f"scale must be strictly positive, got {self.scale}")
        if not (math.isfinite(self.jitter) and self.jitter >= 0.0):
            raise ValueError(f"jitter must be nonnegative, got {self.jitter}")
        if not math.isfinite(self.mean):
            raise ValueError("mean must be finite")


@dataclass(frozen=True)
class FieldOnGrid:
    """A scalar value per site of a region plus an observation flag per site."""

    region: GridRegion
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if values.shape != (self.region.n_sites,) or mask.shape != (self.region.n_sites,):
            raise ValueError("values and mask must have exactly one entry per site")
        values = values.copy()
        mask = mask.copy()
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    def value_at(self, site) -> float:
        return float(self.values[self.region.site_index(site)])

    def observed_at(self, site) -> bool:
        return bool(self.mask[self.region.site_index(site)])

    def value_grid(self) -> np.ndarray:
        return self.values.reshape(self.region.n1, self.region.n2)

    def mask_grid(self) -> np.ndarray:
        return self.mask.reshape(self.region.n1, self.region.n2)


def observation_mask(region: GridRegion, side: int = MASK_SIDE, tail: int = MASK_TAIL) -> np.ndarray:
    """Boolean per-site flag: a side x side block plus a partial extra row.

    Defaults reproduce the observed subset of the reference experiment: the
    21 x 21 block together with sites (22, j) for j <= 15.
    """
    if tail > side:
        raise ValueError(f"tail length {tail} exceeds block side {side}")
    if region.n1 < side + 1 or region.n2 < side:
        raise ValueError(
            f"region {region.n1}x{region.n2} too small for a {side + 1}x{side} observation mask"
        )
    sites = region.sites()
    i, j = sites[:, 0], sites[:, 1]
    return ((i <= side) & (j <= side)) | ((i == side + 1) & (j <= tail))


@lru_cache(maxsize=4)
def _pairwise_sq_dists(n1: int, n2: int) -> np.ndarray:
    s = _region_sites(n1, n2).astype(float)
    sq = np.sum(s * s, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (s @ s.T)
    np.maximum(d2, 0.0, out=d2)
    d2.setflags(write=False)
    return d2


def covariance_matrix(spec: GrfSpec, region: GridRegion) -> np.ndarray:
    """Dense covariance over all site pairs of the region (no jitter)."""
    d2 = _pairwise_sq_dists(region.n1, region.n2)
    return spec.variance * np.exp(-d2 / (spec.scale * spec.scale))


@lru_cache(maxsize=4)
def _cholesky_factor(variance: float, scale: float, jitter: float, n1: int, n2: int):
    spec = GrfSpec(0.0, variance, scale, jitter)
    region = GridRegion(n1, n2)
    sigma = covariance_matrix(spec, region)
    rungs = [jitter] + [variance * f for f in JITTER_LADDER if variance * f > jitter]
    for rung in rungs:
        try:
            L = np.linalg.cholesky(sigma + rung * np.eye(region.n_sites))
        except np.linalg.LinAlgError:
            continue
        L.setflags(write=False)
        return L, rung
    raise FactorizationError(
        f"covariance factorization failed for variance={variance}, scale={scale} "
        f"on a {n1}x{n2} grid after jitter ladder {rungs}"
    )


def simulate_grf(spec: GrfSpec, region: GridRegion, seed: int) -> FieldOnGrid:
    """One seeded draw of the field; identical inputs give identical output.

    The returned mask is all-True; observation masking is applied by callers.
    """
    L, _ = _cholesky_factor(spec.variance, spec.scale, spec.jitter, region.n1, region.n2)
    z = np.random.default_rng(int(seed)).standard_normal(region.n_sites)
    values = spec.mean + L @ z
    return FieldOnGrid(region, values, np.ones(region.n_sites, dtype=bool))


def factorization_jitter(spec: GrfSpec, region: GridRegion) -> float:
    """Diagonal ridge actually used when factorizing this covariance."""
    _, rung = _cholesky_factor(spec.variance, spec.scale, spec.jitter, region.n1, region.n2)
    return rung


@lru_cache(maxsize=4)
def local_weight_field(n1: int, n2: int) -> np.ndarray:
    """Dependency weight at every site: mean over the region of exp(-dist/2)."""
    d = np.sqrt(_pairwise_sq_dists(n1, n2))
    u = np.exp(-0.5 * d).mean(axis=1)
    u.setflags(write=False)
    return u


def local_weight(site, region: GridRegion) -> float:
    """Dependency weight of one site: (1/n) sum over sites j of exp(-|site-j|/2)."""
    region.site_index(site)  # membership check
    diffs = region.sites().astype(float) - np.asarray(site, dtype=float)
    return float(np.exp(-0.5 * np.sqrt(np.sum(diffs * diffs, axis=1))).mean())


def response_curve(x: np.ndarray) -> np.ndarray:
    """Noise-free response transform applied to the covariate field."""
    x = np.asarray(x, dtype=float)
    return np.sin(2.0 * x) + 2.0 * np.exp(-((16.0 * x) ** 2))


def simulate_model(
    region: GridRegion,
    seed_x: int,
    seed_z: int,
    spec_x: GrfSpec = GrfSpec(0.0, 5.0, 3.0),
    spec_z: GrfSpec = GrfSpec(0.0, 0.1, 5.0),
    mask_side: int = MASK_SIDE,
    mask_tail: int = MASK_TAIL,
) -> tuple[FieldOnGrid, FieldOnGrid]:
    """Draw the synthetic response field and its latent covariate field.

    The response at each site is the local dependency weight times the
    response curve of the covariate draw, plus an independent noise draw
    from its own seeded stream. Both returned fields carry the observation
    mask.
    """
    x = simulate_grf(spec_x, region, seed_x)
    z = simulate_grf(spec_z, region, seed_z)
    u = local_weight_field(region.n1, region.n2)
    xi = u * response_curve(x.values) + z.values
    mask = observation_mask(region, mask_side, mask_tail)
    return (
        FieldOnGrid(region, x.values, mask),
        FieldOnGrid(region, xi, mask),
    )
