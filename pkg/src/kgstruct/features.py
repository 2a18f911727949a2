"""The 22 frequency-based structural features of a triple.

Six fine-grained features describe the triple itself; sixteen coarse-grained
features summarise the one-hop neighbourhood of each endpoint.  Everything is
computed from a :class:`~kgstruct.graph.GraphIndex` over the training split,
so held-out triples are described without leaking themselves into the counts.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import ValidationError
from .graph import GraphIndex

FINE_FEATURES = ("s_deg", "o_deg", "p_freq", "sp_cofreq", "op_cofreq", "so_cofreq")

# (subject name, object name) for each coarse statistic, in table order.
COARSE_PAIRS = (
    ("s_min_deg_nbr", "o_min_deg_nbr"),
    ("s_max_deg_nbr", "o_max_deg_nbr"),
    ("s_mean_deg_nbr", "o_mean_deg_nbr"),
    ("s_num_nbrs", "o_num_nbrs"),
    ("s_min_freq_rel", "o_min_freq_rel"),
    ("s_max_freq_rel", "o_max_freq_rel"),
    ("s_mean_freq_rel", "o_mean_freq_rel"),
    ("s_num_rels", "o_num_rels"),
)

COARSE_FEATURES = (
    "s_min_deg_nbr", "s_max_deg_nbr", "s_mean_deg_nbr",
    "o_min_deg_nbr", "o_max_deg_nbr", "o_mean_deg_nbr",
    "s_num_nbrs", "o_num_nbrs",
    "s_min_freq_rel", "s_max_freq_rel", "s_mean_freq_rel",
    "o_min_freq_rel", "o_max_freq_rel", "o_mean_freq_rel",
    "s_num_rels", "o_num_rels",
)

FEATURE_NAMES = FINE_FEATURES + COARSE_FEATURES

# Columns of the per-entity neighbourhood table.
_SIDE_STATS = (
    "min_deg_nbr", "max_deg_nbr", "mean_deg_nbr", "num_nbrs",
    "min_freq_rel", "max_freq_rel", "mean_freq_rel", "num_rels",
)
_COARSE_LAYOUT = [
    (name[0], _SIDE_STATS.index(name[2:])) for name in COARSE_FEATURES
]


def neighbourhood_table(index: GraphIndex) -> np.ndarray:
    """Per-entity ``(n_entities, 8)`` neighbourhood statistics.

    Neighbours are distinct nodes over both edge directions, each contributing
    its global train degree once; relations are distinct incident predicates
    with their global frequency.  Isolated entities get a row of zeros.
    """
    cached = getattr(index, "_nbr_table", None)
    if cached is not None:
        return cached
    table = np.zeros((index.n_entities, len(_SIDE_STATS)))
    for e, incident in enumerate(index.neighbor_map):
        if not incident:
            continue
        nodes = np.fromiter({n for n, _, _ in incident}, dtype=np.int64)
        rels = np.fromiter({r for _, r, _ in incident}, dtype=np.int64)
        deg = index.degree[nodes]
        freq = index.pred_freq[rels]
        table[e] = (
            deg.min(), deg.max(), deg.sum() / len(deg), len(deg),
            freq.min(), freq.max(), freq.sum() / len(freq), len(freq),
        )
    table.setflags(write=False)
    index._nbr_table = table
    return table


def _as_triples(triples) -> np.ndarray:
    arr = np.asarray(triples, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr.reshape(1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValidationError(f"expected (n, 3) triples, got shape {arr.shape}")
    return arr


def fine_features(index: GraphIndex, triples) -> np.ndarray:
    t = _as_triples(triples)
    s, p, o = t.T
    out = np.column_stack([
        index.entity_degree(s),
        index.entity_degree(o),
        index.predicate_frequency(p),
        index.cofreq_sp(s, p),
        index.cofreq_op(o, p),
        index.cofreq_so(s, o),
    ]).astype(np.float64)
    return out


def coarse_features(index: GraphIndex, triples) -> np.ndarray:
    t = _as_triples(triples)
    index._check_entities(t[:, 0], t[:, 2])
    index._check_predicates(t[:, 1])
    table = neighbourhood_table(index)
    sides = {"s": table[t[:, 0]], "o": table[t[:, 2]]}
    return np.column_stack([sides[side][:, col] for side, col in _COARSE_LAYOUT])


def featurize(index: GraphIndex, triples) -> np.ndarray:
    """``(n, 22)`` feature matrix in :data:`FEATURE_NAMES` order.

    A single ``(s, p, o)`` gives a ``(1, 22)`` matrix.
    """
    return np.hstack([fine_features(index, triples), coarse_features(index, triples)])


def as_dict(vector, names: Iterable[str] = FEATURE_NAMES) -> dict[str, float]:
    vector = np.asarray(vector, dtype=float).ravel()
    names = list(names)
    if len(names) != len(vector):
        raise ValidationError(f"{len(names)} names for a {len(vector)}-vector")
    return dict(zip(names, vector.tolist()))


class AblationMask(frozenset):
    """Set of feature names to drop."""

    def __new__(cls, names: Iterable[str] = (), universe: Iterable[str] = FEATURE_NAMES):
        names = frozenset(names)
        unknown = names - set(universe)
        if unknown:
            raise ValidationError(f"unknown feature names in mask: {sorted(unknown)}")
        return super().__new__(cls, names)

    def kept(self, names: Iterable[str] = FEATURE_NAMES) -> list[str]:
        return [n for n in names if n not in self]

    def keep_indices(self, names: Iterable[str] = FEATURE_NAMES) -> np.ndarray:
        return np.array([i for i, n in enumerate(names) if n not in self], dtype=np.int64)

    def __repr__(self):
        return f"AblationMask({sorted(self)})"


def mask(vectors, ablation: AblationMask | Iterable[str], names=FEATURE_NAMES) -> np.ndarray:
    """Drop the masked columns, keeping survivor order."""
    if not isinstance(ablation, AblationMask):
        ablation = AblationMask(ablation, universe=names)
    unknown = set(ablation) - set(names)
    if unknown:
        raise ValidationError(f"unknown feature names in mask: {sorted(unknown)}")
    vectors = np.asarray(vectors, dtype=float)
    return vectors[..., ablation.keep_indices(names)]


def ablation_suite() -> dict[str, AblationMask]:
    """The standard set of feature ablations, keyed by a short label."""
    suite = {
        "none": AblationMask(),
        "all_fine": AblationMask(FINE_FEATURES),
        "all_coarse": AblationMask(COARSE_FEATURES),
    }
    for name in FINE_FEATURES:
        suite[name] = AblationMask([name])
    for s_name, o_name in COARSE_PAIRS:
        suite["s/o_" + s_name[2:]] = AblationMask([s_name, o_name])
    return suite


class FeatureNormalizer(TransformerMixin, BaseEstimator):
    """Z-score scaler with the population standard deviation.

    Constant columns get a unit scale so they map to 0.
    """

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or len(X) < 2:
            raise ValidationError("need at least 2 feature vectors to fit a normalizer")
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.scale_ = np.where(std > 0, std, 1.0)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.n_features_in_:
            raise ValidationError(
                f"expected {self.n_features_in_} features, got {X.shape[-1]}"
            )
        return (X - self.mean_) / self.scale_

    @classmethod
    def from_arrays(cls, mean, scale) -> "FeatureNormalizer":
        norm = cls()
        norm.mean_ = np.asarray(mean, dtype=np.float64)
        norm.scale_ = np.asarray(scale, dtype=np.float64)
        norm.n_features_in_ = len(norm.mean_)
        return norm


def fit_normalizer(vectors) -> FeatureNormalizer:
    return FeatureNormalizer().fit(vectors)


class StructuralFeaturizer(TransformerMixin, BaseEstimator):
    """Transformer from triple id arrays to structural feature matrices.

    ``fit`` takes the training triples and builds the index; ``transform``
    featurises any triples (training or held-out) against that index.

    Parameters
    ----------
    n_entities, n_predicates : int
        Vocabulary sizes of the graph the triples come from.
    ablation : iterable of str, optional
        Feature names to drop from the output.
    """

    def __init__(self, n_entities=None, n_predicates=None, ablation=()):
        self.n_entities = n_entities
        self.n_predicates = n_predicates
        self.ablation = ablation

    def fit(self, X, y=None):
        X = _as_triples(X)
        n_e = self.n_entities if self.n_entities is not None else int(X[:, [0, 2]].max()) + 1
        n_p = self.n_predicates if self.n_predicates is not None else int(X[:, 1].max()) + 1
        self.index_ = GraphIndex(X, n_e, n_p)
        self.mask_ = AblationMask(self.ablation)
        self.feature_names_out_ = self.mask_.kept()
        self.n_features_in_ = 3
        return self

    def transform(self, X):
        check_is_fitted(self, "index_")
        return mask(featurize(self.index_, X), self.mask_)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "index_")
        return np.array(self.feature_names_out_, dtype=object)
