"""Negative samplers: basic, Bernoulli and pseudo-typed corruption.

Corruptions are not filtered against known triples, so a sampled negative may
coincide with a true triple (or with its own positive).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..graph import GraphIndex

logger = logging.getLogger(__name__)

SAMPLER_KINDS = ("basic", "bernoulli", "pseudo-typed")


@dataclass(frozen=True)
class NegativeBatch:
    """``triples[i, k]`` is the k-th corruption of positive ``i``."""

    triples: np.ndarray
    corrupt_subject: np.ndarray
    fallbacks: int = 0


class NegativeSampler:
    def __init__(self, kind: str, index: GraphIndex):
        if kind not in SAMPLER_KINDS:
            raise ValueError(f"unknown sampler {kind!r}; expected one of {SAMPLER_KINDS}")
        self.kind = kind
        self.n_entities = index.n_entities
        if kind == "bernoulli":
            tph, hpt = index.bernoulli_stats()
            total = tph + hpt
            self.subject_prob = np.divide(tph, total, out=np.full_like(tph, 0.5), where=total > 0)
        if kind == "pseudo-typed":
            self._pools = {
                True: _Pools(index.subject_candidates),
                False: _Pools(index.object_candidates),
            }

    def sample(self, positives: np.ndarray, npp: int, rng: np.random.Generator) -> NegativeBatch:
        positives = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
        b = len(positives)
        preds = np.broadcast_to(positives[:, 1:2], (b, npp))
        if self.kind == "bernoulli":
            corrupt_subject = rng.random((b, npp)) < self.subject_prob[preds]
        else:
            corrupt_subject = rng.random((b, npp)) < 0.5

        fallbacks = 0
        if self.kind == "pseudo-typed":
            u = rng.random((b, npp))
            replacement = np.empty((b, npp), dtype=np.int64)
            missing = np.zeros((b, npp), dtype=bool)
            for side in (True, False):
                sel = corrupt_subject == side
                rep, miss = self._pools[side].draw(preds[sel], u[sel])
                replacement[sel] = rep
                missing[sel] = miss
            fallbacks = int(missing.sum())
            if fallbacks:
                replacement[missing] = rng.integers(self.n_entities, size=fallbacks)
                logger.info("pseudo-typed sampler fell back to uniform for %d negatives", fallbacks)
        else:
            replacement = rng.integers(self.n_entities, size=(b, npp))

        triples = np.repeat(positives[:, None, :], npp, axis=1)
        triples[..., 0] = np.where(corrupt_subject, replacement, triples[..., 0])
        triples[..., 2] = np.where(corrupt_subject, triples[..., 2], replacement)
        return NegativeBatch(triples, corrupt_subject, fallbacks)


class _Pools:
    """Candidate entities per predicate, flattened for vectorised draws."""

    def __init__(self, candidates):
        sizes = np.array([len(c) for c in candidates], dtype=np.int64)
        self.sizes = sizes
        self.offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        self.flat = np.concatenate(list(candidates) + [np.zeros(0, np.int64)]).astype(np.int64)

    def draw(self, preds, u):
        # predicates beyond the candidate table are treated as unseen
        known = preds < len(self.sizes)
        size = np.where(known, self.sizes[np.minimum(preds, len(self.sizes) - 1)], 0)
        missing = size == 0
        pick = self.offsets[np.minimum(preds, len(self.sizes) - 1)] + np.floor(u * size).astype(np.int64)
        pick = np.where(missing, 0, pick)
        out = self.flat[pick] if len(self.flat) else np.zeros(len(pick), dtype=np.int64)
        return out, missing


def sample_negatives(index, positives, npp, kind, rng) -> NegativeBatch:
    return NegativeSampler(kind, index).sample(positives, npp, rng)
