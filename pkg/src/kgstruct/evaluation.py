"""Rank-based link-prediction evaluation for any triple scorer.

A *scorer* is any callable mapping an ``(n, 3)`` int array of triples to an
``(n,)`` array of plausibility scores, higher meaning more plausible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple

import numpy as np

from .exceptions import UnknownIdError, ValidationError

Scorer = Callable[[np.ndarray], np.ndarray]

TIE_POLICIES = ("realistic", "optimistic", "pessimistic")
HITS_AT = (1, 3, 5, 10)


class LpQuery(NamedTuple):
    known: int
    predicate: int
    side: str  # slot being predicted: "subject" or "object"
    answer: int

    def completions(self, candidates: np.ndarray) -> np.ndarray:
        out = np.empty((len(candidates), 3), dtype=np.int64)
        out[:, 1] = self.predicate
        if self.side == "object":
            out[:, 0] = self.known
            out[:, 2] = candidates
        else:
            out[:, 0] = candidates
            out[:, 2] = self.known
        return out

    @property
    def triple(self) -> tuple[int, int, int]:
        if self.side == "object":
            return self.known, self.predicate, self.answer
        return self.answer, self.predicate, self.known


class RankRecord(NamedTuple):
    query: LpQuery
    rank: int
    candidates: int


def make_queries(triples) -> list[LpQuery]:
    """Object then subject query for every triple; duplicates are kept."""
    queries = []
    for s, p, o in np.asarray(triples, dtype=np.int64).reshape(-1, 3).tolist():
        queries.append(LpQuery(s, p, "object", o))
        queries.append(LpQuery(o, p, "subject", s))
    return queries


class FilterIndex:
    """Known-true completions for every ``(s, p, ?)`` and ``(?, p, o)``."""

    def __init__(self, *triple_sets):
        tails: dict[tuple[int, int], set] = {}
        heads: dict[tuple[int, int], set] = {}
        for triples in triple_sets:
            for s, p, o in np.asarray(triples, dtype=np.int64).reshape(-1, 3).tolist():
                tails.setdefault((s, p), set()).add(o)
                heads.setdefault((p, o), set()).add(s)
        self._tails = {k: np.fromiter(v, dtype=np.int64) for k, v in tails.items()}
        self._heads = {k: np.fromiter(v, dtype=np.int64) for k, v in heads.items()}

    @classmethod
    def from_kg(cls, kg) -> "FilterIndex":
        return cls(kg.train, kg.valid, kg.test)

    def known_answers(self, query: LpQuery) -> np.ndarray:
        empty = np.zeros(0, dtype=np.int64)
        if query.side == "object":
            return self._tails.get((query.known, query.predicate), empty)
        return self._heads.get((query.predicate, query.known), empty)


def _rank_from_scores(scores, answer, drop, tie_policy) -> tuple[int, int]:
    keep = np.ones(len(scores), dtype=bool)
    keep[drop] = False
    keep[answer] = True
    target = scores[answer]
    better = int(np.count_nonzero((scores > target) & keep))
    ties = int(np.count_nonzero((scores == target) & keep))
    optimistic = better + 1
    pessimistic = better + max(ties, 1)
    if tie_policy == "optimistic":
        rank = optimistic
    elif tie_policy == "pessimistic":
        rank = pessimistic
    elif tie_policy == "realistic":
        rank = (optimistic + pessimistic + 1) // 2
    else:
        raise ValueError(f"unknown tie policy {tie_policy!r}; expected one of {TIE_POLICIES}")
    return rank, int(keep.sum())


def rank_query(
    scorer: Scorer,
    query: LpQuery,
    n_entities: int,
    filter_index: FilterIndex | None = None,
    tie_policy: str = "realistic",
) -> RankRecord:
    """Rank of the query's answer among all ``n_entities`` completions.

    With a filter index, other known-true completions are removed from the
    candidate list before ranking.
    """
    if not 0 <= query.answer < n_entities:
        raise UnknownIdError(f"answer id {query.answer} outside vocabulary")
    candidates = np.arange(n_entities)
    scores = np.asarray(scorer(query.completions(candidates)), dtype=float)
    drop = filter_index.known_answers(query) if filter_index is not None else np.zeros(0, np.int64)
    rank, count = _rank_from_scores(scores, query.answer, drop, tie_policy)
    return RankRecord(query, rank, count)


@dataclass
class EvalReport:
    mr: float
    mrr: float
    hits: dict
    ranks: np.ndarray = field(repr=False)
    n_queries: int = 0

    def as_row(self) -> dict:
        row = {"mr": self.mr, "mrr": self.mrr}
        row.update({f"hits@{k}": v for k, v in self.hits.items()})
        row["n_queries"] = self.n_queries
        return row


def report_from_ranks(ranks: Iterable[int], hits_at=HITS_AT) -> EvalReport:
    ranks = np.asarray(list(ranks) if not isinstance(ranks, np.ndarray) else ranks, dtype=float)
    if ranks.size == 0:
        raise ValidationError("cannot summarise an empty rank list")
    if ranks.min() < 1:
        raise ValidationError("ranks are 1-indexed")
    return EvalReport(
        mr=float(ranks.mean()),
        mrr=float((1.0 / ranks).mean()),
        hits={k: float((ranks <= k).mean()) for k in hits_at},
        ranks=ranks.astype(np.int64),
        n_queries=int(ranks.size),
    )


def rank_queries(
    scorer: Scorer,
    queries: list[LpQuery],
    n_entities: int,
    filter_index: FilterIndex | None = None,
    tie_policy: str = "realistic",
    chunk: int = 64,
) -> np.ndarray:
    """Ranks for many queries, scoring ``chunk`` queries per scorer call."""
    ranks = np.empty(len(queries), dtype=np.int64)
    candidates = np.arange(n_entities)
    for start in range(0, len(queries), chunk):
        block = queries[start:start + chunk]
        triples = np.concatenate([q.completions(candidates) for q in block])
        scores = np.asarray(scorer(triples), dtype=float).reshape(len(block), n_entities)
        for i, q in enumerate(block):
            if not 0 <= q.answer < n_entities:
                raise UnknownIdError(f"answer id {q.answer} outside vocabulary")
            drop = filter_index.known_answers(q) if filter_index is not None else np.zeros(0, np.int64)
            ranks[start + i], _ = _rank_from_scores(scores[i], q.answer, drop, tie_policy)
    return ranks


def evaluate(
    scorer: Scorer,
    triples,
    n_entities: int,
    filter_index: FilterIndex | None = None,
    tie_policy: str = "realistic",
) -> EvalReport:
    """MR, MRR and Hits@K over the two queries of every triple."""
    queries = make_queries(triples)
    if not queries:
        raise ValidationError("no triples to evaluate")
    return report_from_ranks(rank_queries(scorer, queries, n_entities, filter_index, tie_policy))
