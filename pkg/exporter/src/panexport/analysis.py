"""Odds analysis over JSONL inference dumps.

Self-contained reimplementation of the aggregate odds arithmetic so the
exporter consumes the main toolkit only through its file formats.
"""

import numpy as np


def class_log_odds(probs_variant: np.ndarray, probs_original: np.ndarray) -> np.ndarray:
    """log of per-class summed-softmax ratios; nan where undefined."""
    sv = probs_variant.sum(axis=0)
    so = probs_original.sum(axis=0)
    out = np.full(sv.shape, np.nan)
    ok = so > 0
    out[ok] = np.log(sv[ok] / so[ok])
    return out


def log_odds_std(log_odds: np.ndarray) -> float:
    finite = log_odds[np.isfinite(log_odds)]
    return float(np.std(finite)) if finite.size else 0.0


def mode_count(values: np.ndarray, bins: int = 41, smooth: int = 3,
               min_rel_height: float = 0.2) -> int:
    """Histogram-mode heuristic: local maxima of a moving-average histogram.

    A bin counts as a mode when it beats its neighbours and reaches
    ``min_rel_height`` of the tallest bin; adjacent plateaus merge.
    """
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return 0
    counts, _ = np.histogram(finite, bins=bins)
    kernel = np.ones(smooth) / smooth
    smoothed = np.convolve(counts, kernel, mode="same")
    floor = smoothed.max() * min_rel_height
    modes = 0
    rising = True
    for i in range(1, len(smoothed)):
        if smoothed[i] > smoothed[i - 1]:
            rising = True
        elif smoothed[i] < smoothed[i - 1]:
            if rising and smoothed[i - 1] >= floor:
                modes += 1
            rising = False
    if rising and smoothed[-1] >= floor:
        modes += 1
    return modes


def top_divergence_disagreements(
    logits_original: np.ndarray, logits_variant: np.ndarray, fraction: float = 0.10
) -> tuple[int, int]:
    """(#prediction disagreements, prefix size) over the most divergent samples."""
    distances = np.abs(logits_original - logits_variant).sum(axis=1)
    order = np.argsort(-distances, kind="stable")
    take = max(1, int(np.floor(order.size * fraction)))
    prefix = order[:take]
    disagree = int(
        (logits_original[prefix].argmax(axis=1) != logits_variant[prefix].argmax(axis=1)).sum()
    )
    return disagree, take
