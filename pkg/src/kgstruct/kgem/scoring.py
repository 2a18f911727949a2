"""TransE, DistMult and ComplEx scoring functions with analytic gradients.

All functions operate row-wise on ``(..., width)`` arrays and broadcast, so
the same code scores a training batch or one query against every entity.
ComplEx rows store ``[real | imaginary]`` halves.
"""

import numpy as np


class ScoringFunction:
    name = ""

    def width(self, dim: int) -> int:
        return dim

    def score(self, es, ep, eo):
        raise NotImplementedError

    def grad(self, es, ep, eo, dscore):
        """Gradients of ``sum(dscore * score)`` w.r.t. ``es``, ``ep``, ``eo``."""
        raise NotImplementedError


class TransE(ScoringFunction):
    name = "TransE"

    def __init__(self, p_norm: int = 2):
        if p_norm not in (1, 2):
            raise ValueError("TransE p-norm must be 1 or 2")
        self.p_norm = p_norm

    def score(self, es, ep, eo):
        diff = es + ep - eo
        if self.p_norm == 1:
            return -np.abs(diff).sum(axis=-1)
        return -np.sqrt((diff * diff).sum(axis=-1))

    def grad(self, es, ep, eo, dscore):
        diff = es + ep - eo
        if self.p_norm == 1:
            g = -np.sign(diff)
        else:
            norm = np.sqrt((diff * diff).sum(axis=-1, keepdims=True))
            g = -np.divide(diff, norm, out=np.zeros_like(diff), where=norm > 0)
        g = g * np.asarray(dscore)[..., None]
        return g, g, -g


class DistMult(ScoringFunction):
    name = "DistMult"

    def score(self, es, ep, eo):
        return (es * ep * eo).sum(axis=-1)

    def grad(self, es, ep, eo, dscore):
        d = np.asarray(dscore)[..., None]
        return d * ep * eo, d * es * eo, d * es * ep


class ComplEx(ScoringFunction):
    """``Re(<e_s, e_p, conj(e_o)>)``."""

    name = "ComplEx"

    def width(self, dim: int) -> int:
        return 2 * dim

    @staticmethod
    def _split(x):
        k = x.shape[-1] // 2
        return x[..., :k], x[..., k:]

    def score(self, es, ep, eo):
        sr, si = self._split(es)
        pr, pi = self._split(ep)
        orr, oi = self._split(eo)
        return (sr * pr * orr + si * pr * oi + sr * pi * oi - si * pi * orr).sum(axis=-1)

    def grad(self, es, ep, eo, dscore):
        sr, si = self._split(es)
        pr, pi = self._split(ep)
        orr, oi = self._split(eo)
        d = np.asarray(dscore)[..., None]
        g_s = np.concatenate([pr * orr + pi * oi, pr * oi - pi * orr], axis=-1)
        g_p = np.concatenate([sr * orr + si * oi, sr * oi - si * orr], axis=-1)
        g_o = np.concatenate([sr * pr - si * pi, si * pr + sr * pi], axis=-1)
        return d * g_s, d * g_p, d * g_o


SCORING_KINDS = ("TransE", "DistMult", "ComplEx")


def make_scoring(kind: str, p_norm: int = 2) -> ScoringFunction:
    if kind == "TransE":
        return TransE(p_norm)
    if kind == "DistMult":
        return DistMult()
    if kind == "ComplEx":
        return ComplEx()
    raise ValueError(f"unknown scoring function {kind!r}; expected one of {SCORING_KINDS}")
