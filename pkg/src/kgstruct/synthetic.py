"""Synthetic graphs with a planted structural rule.

Endpoints are drawn with probability proportional to a heavy-tailed entity
weight, so true links concentrate among high-degree nodes while uniform
corruptions do not.  A structural scorer can learn that rule; a random
scorer cannot.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ValidationError
from .graph import KnowledgeGraph, Vocabulary
from .rng import make_rng


def planted_kg(
    n_entities: int = 300,
    n_predicates: int = 8,
    n_triples: int = 4000,
    valid_frac: float = 0.1,
    test_frac: float = 0.1,
    skew: float = 1.2,
    fresh_test_pairs: bool = False,
    seed: int = 0,
    name: str | None = None,
) -> KnowledgeGraph:
    """Generate a KG whose links favour high-weight entities.

    Entity weights follow a Zipf-like law ``rank ** -skew`` over a random
    permutation of ids.  Predicates are Zipf-distributed too.  Duplicate and
    self-loop draws are discarded, so the graph may hold slightly fewer than
    ``n_triples`` triples.

    With ``fresh_test_pairs`` the split is made per ordered ``(s, o)`` pair, so
    no valid or test triple shares its subject-object pair with a train
    triple.
    """
    if n_entities < 2 or n_predicates < 1 or n_triples < 1:
        raise ValidationError("need >= 2 entities, >= 1 predicate and >= 1 triple")
    if valid_frac < 0 or test_frac < 0 or valid_frac + test_frac >= 1:
        raise ValidationError("valid_frac and test_frac must be >= 0 and sum to < 1")
    rng = make_rng(seed, "planted-kg")
    weights = np.arange(1, n_entities + 1, dtype=float) ** -skew
    weights = weights[rng.permutation(n_entities)]
    weights /= weights.sum()
    pred_w = np.arange(1, n_predicates + 1, dtype=float) ** -1.0
    pred_w /= pred_w.sum()

    draws = int(n_triples * 1.5) + 16
    s = rng.choice(n_entities, size=draws, p=weights)
    o = rng.choice(n_entities, size=draws, p=weights)
    p = rng.choice(n_predicates, size=draws, p=pred_w)
    triples = np.column_stack([s, p, o])[s != o]
    _, first = np.unique(triples, axis=0, return_index=True)
    triples = triples[np.sort(first)][:n_triples]

    if fresh_test_pairs:
        pair_ids = triples[:, 0] * n_entities + triples[:, 2]
        pairs = np.unique(pair_ids)
        pairs = pairs[rng.permutation(len(pairs))]
        n_valid = int(round(valid_frac * len(pairs)))
        n_test = int(round(test_frac * len(pairs)))
        role = dict.fromkeys(pairs[:n_valid].tolist(), 1)
        role.update(dict.fromkeys(pairs[n_valid:n_valid + n_test].tolist(), 2))
        assign = np.array([role.get(k, 0) for k in pair_ids.tolist()])
    else:
        assign = np.zeros(len(triples), dtype=int)
        order = rng.permutation(len(triples))
        n_valid = int(round(valid_frac * len(triples)))
        n_test = int(round(test_frac * len(triples)))
        assign[order[:n_valid]] = 1
        assign[order[n_valid:n_valid + n_test]] = 2

    entities = Vocabulary(f"e{i}" for i in range(n_entities))
    predicates = Vocabulary(f"r{i}" for i in range(n_predicates))
    return KnowledgeGraph(
        entities, predicates,
        train=triples[assign == 0], valid=triples[assign == 1], test=triples[assign == 2],
        name=name or f"planted-{seed}",
    )
