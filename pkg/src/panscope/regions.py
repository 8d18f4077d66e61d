"""Five-region activation sampling for one neuron.

For every H x W activation map the top/bottom rows and left/right columns
(corners shared between a row and a column region) form the four border
samples; the (H-2) x (W-2) interior forms the centre. Samples are pooled
over the whole batch.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMapError, EmptySampleError

BORDERS = ("top", "bottom", "left", "right")


@dataclass(frozen=True)
class RegionSamples:
    """Pooled activation values per region for one neuron."""

    top: np.ndarray
    bottom: np.ndarray
    left: np.ndarray
    right: np.ndarray
    centre: np.ndarray

    def border(self, name: str) -> np.ndarray:
        if name not in BORDERS:
            raise KeyError(f"unknown border {name!r}")
        return getattr(self, name)


@dataclass(frozen=True)
class TruncatedCentre:
    """The k lowest / k highest centre values (order statistics).

    ``shortfall`` is set when the centre held fewer than k values and the
    whole centre had to be used.
    """

    low: np.ndarray
    high: np.ndarray
    k: int
    shortfall: bool


def extract_regions(maps) -> RegionSamples:
    """Split per-sample 2-D maps for one neuron into the five regions.

    ``maps``: array of shape (S, H, W) (or a single H x W map); H, W >= 3
    so the centre is non-empty.
    """
    arr = np.asarray(maps)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise DegenerateMapError(f"expected (samples, H, W) maps, got ndim={arr.ndim}")
    _, h, w = arr.shape
    if h < 3 or w < 3:
        raise DegenerateMapError(f"map {h}x{w} too small: need at least 3x3 for a centre")
    return RegionSamples(
        top=arr[:, 0, :].ravel(),
        bottom=arr[:, -1, :].ravel(),
        left=arr[:, :, 0].ravel(),
        right=arr[:, :, -1].ravel(),
        centre=arr[:, 1:-1, 1:-1].ravel(),
    )


def truncate_centre(centre, k: int) -> TruncatedCentre:
    """Keep the k smallest and k largest centre values.

    When the centre holds fewer than k values the whole centre is used for
    both ends and the shortfall flag is raised.
    """
    arr = np.asarray(centre).ravel()
    if arr.size == 0:
        raise EmptySampleError("centre sample is empty")
    if k < 1:
        raise EmptySampleError(f"truncation size must be >= 1, got {k}")
    eff = min(k, arr.size)
    ordered = np.sort(arr)
    return TruncatedCentre(
        low=ordered[:eff],
        high=ordered[arr.size - eff:],
        k=k,
        shortfall=arr.size < k,
    )


def histogram(samples, bin_count: int, value_range=None):
    """Uniform-bin histogram; returns (edges, counts).

    Default range is the sample min..max; counts sum to the number of
    samples inside the range.
    """
    arr = np.asarray(samples, dtype=np.float64).ravel()
    if arr.size == 0:
        raise EmptySampleError("cannot histogram an empty sample")
    if bin_count < 1:
        raise ValueError(f"bin_count must be >= 1, got {bin_count}")
    if value_range is not None:
        lo, hi = float(value_range[0]), float(value_range[1])
        if lo >= hi:
            raise ValueError(f"histogram range must satisfy lo < hi, got ({lo}, {hi})")
        counts, edges = np.histogram(arr, bins=bin_count, range=(lo, hi))
    else:
        counts, edges = np.histogram(arr, bins=bin_count)
    return edges, counts
