"""Rank histograms, smoothed KL divergence and the sigmoid-to-rank map."""

from __future__ import annotations

import numpy as np

from ..exceptions import ValidationError

N_BINS = 30
KL_EPS = 1e-10


def _edges(rank_max, bins):
    if rank_max < 1:
        raise ValidationError("rank_max must be >= 1")
    hi = rank_max if rank_max > 1 else 2.0
    return np.linspace(1.0, float(hi), bins + 1)


def histogram(ranks, rank_max, bins: int = N_BINS) -> np.ndarray:
    """Equal-width histogram of ``ranks`` over ``[1, rank_max]``, summing to 1."""
    ranks = np.asarray(ranks, dtype=float).ravel()
    if ranks.size == 0:
        raise ValidationError("cannot histogram an empty rank list")
    edges = _edges(rank_max, bins)
    counts, _ = np.histogram(np.clip(ranks, edges[0], edges[-1]), bins=edges)
    return counts / counts.sum()


def soft_histogram(ranks, rank_max, bins: int = N_BINS) -> np.ndarray:
    """Differentiable histogram: each rank splits its mass between the two
    nearest bin centres by linear interpolation (a triangular kernel one bin
    wide).  Ranks beyond the outer centres go wholly to the outer bins."""
    pos, lo, frac, _ = _soft_layout(ranks, rank_max, bins)
    h = np.bincount(lo, weights=1.0 - frac, minlength=bins)
    h += np.bincount(np.minimum(lo + 1, bins - 1), weights=frac, minlength=bins)
    return h / len(pos)


def soft_histogram_grad(ranks, rank_max, d_hist, bins: int = N_BINS) -> np.ndarray:
    """Gradient of ``d_hist . soft_histogram(ranks)`` with respect to ``ranks``."""
    pos, lo, frac, inside = _soft_layout(ranks, rank_max, bins)
    d_hist = np.asarray(d_hist, dtype=float)
    hi = np.minimum(lo + 1, bins - 1)
    edges = _edges(rank_max, bins)
    width = edges[1] - edges[0]
    return np.where(inside, (d_hist[hi] - d_hist[lo]) / width, 0.0) / len(pos)


def _soft_layout(ranks, rank_max, bins):
    ranks = np.asarray(ranks, dtype=float).ravel()
    if ranks.size == 0:
        raise ValidationError("cannot histogram an empty rank list")
    edges = _edges(rank_max, bins)
    width = edges[1] - edges[0]
    pos = (ranks - (edges[0] + width / 2)) / width
    inside = (pos > 0) & (pos < bins - 1)
    pos_c = np.clip(pos, 0.0, bins - 1)
    lo = np.minimum(np.floor(pos_c).astype(np.int64), bins - 2 if bins > 1 else 0)
    frac = pos_c - lo
    return pos_c, lo, frac, inside


def _smooth(h, eps):
    h = np.asarray(h, dtype=float) + eps
    return h / h.sum()


def kl_div(p, q, eps: float = KL_EPS) -> float:
    """``sum p log(p/q)`` after adding ``eps`` to every bin and renormalising."""
    ps, qs = _smooth(p, eps), _smooth(q, eps)
    return float(np.sum(ps * np.log(ps / qs)))


def kl_div_grad(p, q, eps: float = KL_EPS) -> np.ndarray:
    """Gradient of :func:`kl_div` with respect to the raw ``p``."""
    p = np.asarray(p, dtype=float)
    total = (p + eps).sum()
    ps, qs = _smooth(p, eps), _smooth(q, eps)
    g = np.log(ps / qs) + 1.0
    return (g - ps @ g) / total


def rank_transform(y, rank_max):
    """Map sigmoid outputs in ``(0, 1)`` onto ranks in ``(1, rank_max)``."""
    return 1.0 + np.asarray(y, dtype=float) * (rank_max - 1)
