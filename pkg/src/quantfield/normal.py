"""Standard-normal density, CDF, and quantile helpers.

The CDF goes through ``math.erfc`` and the quantile through
``statistics.NormalDist.inv_cdf`` (Wichura's AS241), both far inside the
accuracy the estimators need and stable from run to run.
"""

from __future__ import annotations

import math
import statistics

import numpy as np

_NORMAL = statistics.NormalDist()
_SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

_erfc_ufunc = np.frompyfunc(math.erfc, 1, 1)


def norm_pdf(x: float) -> float:
    return INV_SQRT_2PI * math.exp(-0.5 * x * x)


def norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / _SQRT2)


def norm_cdf_array(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return 0.5 * _erfc_ufunc(-x / _SQRT2).astype(float)


def norm_quantile(p: float) -> float:
    """Inverse standard-normal CDF for p in (0, 1); exact 0.0 at p = 0.5."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {p}")
    return _NORMAL.inv_cdf(p)
