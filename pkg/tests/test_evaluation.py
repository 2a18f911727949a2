from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgstruct.evaluation import (
    TIE_POLICIES, FilterIndex, LpQuery, evaluate, make_queries, rank_queries, rank_query,
    report_from_ranks,
)
from kgstruct.exceptions import UnknownIdError, ValidationError


def oracle_rank(scores, answer, removed, policy):
    """Position of the answer in a sorted candidate list, ties broken per policy."""
    pool = [e for e in range(len(scores)) if e == answer or e not in set(removed)]
    first = sorted(pool, key=lambda e: (-scores[e], e != answer)).index(answer) + 1
    last = sorted(pool, key=lambda e: (-scores[e], e == answer)).index(answer) + 1
    if policy == "optimistic":
        return first
    if policy == "pessimistic":
        return last
    mean = Fraction(first + last, 2)
    return int(mean) + (1 if mean - int(mean) >= Fraction(1, 2) else 0)


def table_scorer(table):
    """Scorer reading a dense (s, p, o) score table."""
    return lambda t: table[t[:, 0], t[:, 1], t[:, 2]]


def test_make_queries_object_then_subject():
    qs = make_queries([[0, 1, 2]])
    assert qs == [LpQuery(0, 1, "object", 2), LpQuery(2, 1, "subject", 0)]
    assert [q.triple for q in qs] == [(0, 1, 2), (0, 1, 2)]


def test_gandalf_filtering(example_kg):
    g, enemy, saruman = example_kg.triple_ids("Gandalf", "Enemy-Of", "Saruman")
    sauron = example_kg.entities.id("Sauron")

    def scorer(t):
        out = np.zeros(len(t))
        out[t[:, 2] == sauron] = 2.0
        out[t[:, 2] == saruman] = 1.0
        return out

    q = LpQuery(g, enemy, "object", saruman)
    filt = FilterIndex.from_kg(example_kg)
    assert rank_query(scorer, q, example_kg.n_entities, filt).rank == 1
    assert rank_query(scorer, q, example_kg.n_entities, None).rank == 2


@pytest.mark.parametrize("n", [1, 2, 5, 8])
def test_constant_scorer_ties(n):
    q = LpQuery(0, 0, "object", 0)
    const = lambda t: np.zeros(len(t))
    ranks = {p: rank_query(const, q, n, tie_policy=p).rank for p in TIE_POLICIES}
    assert ranks["optimistic"] == 1
    assert ranks["pessimistic"] == n
    assert ranks["realistic"] == (n + 2) // 2  # (1+n)/2 rounded half up


def test_unknown_policy_and_answer():
    q = LpQuery(0, 0, "object", 0)
    with pytest.raises(ValueError):
        rank_query(lambda t: np.zeros(len(t)), q, 3, tie_policy="fair")
    with pytest.raises(UnknownIdError):
        rank_query(lambda t: np.zeros(len(t)), LpQuery(0, 0, "object", 9), 3)


def test_subject_side_query_filters_heads():
    filt = FilterIndex([[1, 0, 2], [3, 0, 2]])
    q = LpQuery(2, 0, "subject", 1)
    assert set(filt.known_answers(q).tolist()) == {1, 3}
    scores = lambda t: (t[:, 0] == 3) * 5.0 + (t[:, 0] == 1) * 1.0
    assert rank_query(scores, q, 5, filt).rank == 1
    assert rank_query(scores, q, 5).rank == 2


def test_report_formulas():
    rep = report_from_ranks([1, 2, 4, 10, 11])
    assert rep.mr == pytest.approx(28 / 5, abs=1e-12)
    assert rep.mrr == pytest.approx((1 + 1 / 2 + 1 / 4 + 1 / 10 + 1 / 11) / 5, abs=1e-12)
    assert rep.hits == {1: 0.2, 3: 0.4, 5: 0.6, 10: 0.8}
    assert rep.as_row()["n_queries"] == 5


def test_report_rejects_bad_ranks():
    with pytest.raises(ValidationError):
        report_from_ranks([])
    with pytest.raises(ValidationError):
        report_from_ranks([0, 1])


def test_perfect_scorer_mrr_one(tiny_kg):
    truth = {tuple(t) for t in tiny_kg.all_triples().tolist()}
    scorer = lambda t: np.array([float(tuple(r) in truth) for r in t.tolist()])
    rep = evaluate(scorer, tiny_kg.test, tiny_kg.n_entities, FilterIndex.from_kg(tiny_kg))
    assert rep.mrr == 1.0 and rep.mr == 1.0


@settings(max_examples=150, deadline=None)
@given(st.integers(2, 12), st.data())
def test_rank_matches_oracle(n, data):
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    # few distinct values so ties are common
    table = rng.integers(0, 4, size=(n, 2, n)).astype(float)
    truth = rng.integers(0, [n, 2, n], size=(data.draw(st.integers(1, 15)), 3))
    filt = FilterIndex(truth)
    scorer = table_scorer(table)
    queries = make_queries(truth)
    for policy in TIE_POLICIES:
        batch = rank_queries(scorer, queries, n, filt, policy, chunk=3)
        for q, r in zip(queries, batch):
            scores = table[q.known, q.predicate, :] if q.side == "object" else table[:, q.predicate, q.known]
            expect = oracle_rank(scores.tolist(), q.answer, filt.known_answers(q).tolist(), policy)
            assert r == expect == rank_query(scorer, q, n, filt, policy).rank


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 50), min_size=1, max_size=40))
def test_metric_bounds(ranks):
    rep = report_from_ranks(ranks)
    assert 0 < rep.mrr <= 1
    assert rep.mr >= 1
    hits = [rep.hits[k] for k in sorted(rep.hits)]
    assert hits == sorted(hits)
    assert 1 / rep.mr <= rep.mrr + 1e-12  # harmonic mean never exceeds arithmetic mean
