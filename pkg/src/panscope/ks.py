"""Exact two-sample Kolmogorov-Smirnov statistics.

Statistics only, no p-values: downstream labeling thresholds the raw
statistic. ECDFs are right-continuous and evaluated at the merged sample
points, so ties between and within samples are handled exactly.

Sign convention for the one-sided variants follows the usual two-sample
toolkit convention: ``ks_less(a, b)`` is large when the ECDF of ``a``
runs *below* the ECDF of ``b`` (i.e. the values of ``a`` tend to be
larger), and ``ks_greater`` is the mirror image.
"""

import numpy as np

from .errors import EmptySampleError


def _sorted_sample(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64).ravel()
    if arr.size == 0:
        raise EmptySampleError(f"{name} sample is empty")
    return np.sort(arr)


def _ecdf_diffs(a, b) -> np.ndarray:
    """ECDF_a - ECDF_b evaluated at every merged sample point."""
    sa = _sorted_sample(a, "first")
    sb = _sorted_sample(b, "second")
    grid = np.concatenate([sa, sb])
    fa = np.searchsorted(sa, grid, side="right") / sa.size
    fb = np.searchsorted(sb, grid, side="right") / sb.size
    return fa - fb


def ks_two_sided(a, b) -> float:
    """sup_x |ECDF_a(x) - ECDF_b(x)|, exact, in [0, 1]."""
    return float(np.max(np.abs(_ecdf_diffs(a, b))))


def ks_less(a, b) -> float:
    """sup_x (ECDF_b(x) - ECDF_a(x)), clipped at 0.

    Large when ``a`` is stochastically greater than ``b``.
    """
    return float(max(0.0, np.max(-_ecdf_diffs(a, b))))


def ks_greater(a, b) -> float:
    """sup_x (ECDF_a(x) - ECDF_b(x)), clipped at 0.

    Large when ``a`` is stochastically less than ``b``.
    """
    return float(max(0.0, np.max(_ecdf_diffs(a, b))))
