"""Knowledge-graph loading, vocabularies and train-split statistics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import ParseError, SplitOverlapError, UnknownIdError

logger = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")


class Vocabulary:
    """Label <-> dense id bijection, ids assigned in first-appearance order."""

    def __init__(self, labels: Iterable[str] = ()):
        self._labels: list[str] = []
        self._ids: dict[str, int] = {}
        for label in labels:
            self.add(label)

    def add(self, label: str) -> int:
        idx = self._ids.get(label)
        if idx is None:
            idx = len(self._labels)
            self._ids[label] = idx
            self._labels.append(label)
        return idx

    def id(self, label: str) -> int:
        try:
            return self._ids[label]
        except KeyError:
            raise UnknownIdError(f"unknown label {label!r}") from None

    def label(self, idx: int) -> str:
        if not 0 <= idx < len(self._labels):
            raise UnknownIdError(f"id {idx} outside vocabulary of size {len(self)}")
        return self._labels[idx]

    @property
    def labels(self) -> list[str]:
        return list(self._labels)

    def __contains__(self, label: str) -> bool:
        return label in self._ids

    def __len__(self) -> int:
        return len(self._labels)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._labels == other._labels

    def __repr__(self) -> str:
        return f"Vocabulary(size={len(self)})"


@dataclass(frozen=True)
class KnowledgeGraph:
    """Interned triples partitioned into train/valid/test.

    Each split is an ``(n, 3)`` int64 array of ``(subject, predicate, object)``
    ids.  ``duplicates_dropped`` records, per split, how many repeated lines
    were discarded while loading.
    """

    entities: Vocabulary
    predicates: Vocabulary
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    name: str = "kg"
    duplicates_dropped: dict = field(default_factory=dict)

    def __post_init__(self):
        for split in SPLITS:
            arr = np.asarray(getattr(self, split), dtype=np.int64).reshape(-1, 3)
            arr.setflags(write=False)
            object.__setattr__(self, split, arr)
        _check_ids(self)
        _check_disjoint(self)

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_predicates(self) -> int:
        return len(self.predicates)

    def split(self, name: str) -> np.ndarray:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}; expected one of {SPLITS}")
        return getattr(self, name)

    def all_triples(self) -> np.ndarray:
        return np.concatenate([self.train, self.valid, self.test])

    def triple_ids(self, s: str, p: str, o: str) -> tuple[int, int, int]:
        return self.entities.id(s), self.predicates.id(p), self.entities.id(o)

    def __repr__(self) -> str:
        return (
            f"KnowledgeGraph(name={self.name!r}, entities={self.n_entities}, "
            f"predicates={self.n_predicates}, train={len(self.train)}, "
            f"valid={len(self.valid)}, test={len(self.test)})"
        )


def _check_ids(kg: KnowledgeGraph) -> None:
    for split in SPLITS:
        arr = getattr(kg, split)
        if len(arr) == 0:
            continue
        if arr.min() < 0:
            raise UnknownIdError(f"negative id in {split} split")
        if max(arr[:, 0].max(), arr[:, 2].max()) >= kg.n_entities:
            raise UnknownIdError(f"entity id out of range in {split} split")
        if arr[:, 1].max() >= kg.n_predicates:
            raise UnknownIdError(f"predicate id out of range in {split} split")


def _check_disjoint(kg: KnowledgeGraph) -> None:
    seen: dict[tuple, str] = {}
    for split in SPLITS:
        for row in map(tuple, getattr(kg, split).tolist()):
            other = seen.get(row)
            if other is not None and other != split:
                s, p, o = row
                raise SplitOverlapError(
                    f"triple ({kg.entities.label(s)}, {kg.predicates.label(p)}, "
                    f"{kg.entities.label(o)}) appears in both {other} and {split}"
                )
            seen[row] = split


def _read_triples(path: Path) -> list[tuple[str, str, str]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}",
                    path=str(path),
                    lineno=lineno,
                )
            rows.append((parts[0], parts[1], parts[2]))
    return rows


def from_labeled(
    train: Sequence[tuple[str, str, str]],
    valid: Sequence[tuple[str, str, str]] = (),
    test: Sequence[tuple[str, str, str]] = (),
    name: str = "kg",
) -> KnowledgeGraph:
    """Intern labelled triples; duplicates within a split are dropped."""
    entities, predicates = Vocabulary(), Vocabulary()
    arrays, dropped = {}, {}
    for split, rows in zip(SPLITS, (train, valid, test)):
        seen = set()
        ids = []
        for s, p, o in rows:
            t = (entities.add(s), predicates.add(p), entities.add(o))
            if t in seen:
                continue
            seen.add(t)
            ids.append(t)
        dropped[split] = len(rows) - len(ids)
        if dropped[split]:
            logger.warning("dropped %d duplicate triples from %s split", dropped[split], split)
        arrays[split] = np.array(ids, dtype=np.int64).reshape(-1, 3)
    return KnowledgeGraph(entities, predicates, name=name, duplicates_dropped=dropped, **arrays)


def load_kg(
    train_path: str | Path,
    valid_path: str | Path | None = None,
    test_path: str | Path | None = None,
    name: str | None = None,
) -> KnowledgeGraph:
    """Load a KG from tab-separated ``subject predicate object`` files.

    Missing valid/test paths give empty splits.
    """
    train_path = Path(train_path)
    rows = [_read_triples(train_path)]
    for path in (valid_path, test_path):
        rows.append(_read_triples(Path(path)) if path is not None else [])
    return from_labeled(*rows, name=name or train_path.parent.name)


def load_dataset_dir(directory: str | Path, name: str | None = None) -> KnowledgeGraph:
    """Load ``train.txt`` / ``valid.txt`` / ``test.txt`` from a directory."""
    directory = Path(directory)
    if not (directory / "train.txt").is_file():
        raise FileNotFoundError(f"{directory} has no train.txt")
    optional = [directory / f"{s}.txt" for s in ("valid", "test")]
    return load_kg(
        directory / "train.txt",
        *(p if p.is_file() else None for p in optional),
        name=name or directory.name,
    )


class GraphIndex:
    """Frequency and adjacency statistics of a training split.

    Only the triples passed in are counted, so building from
    ``kg.train`` keeps valid/test content out of every statistic.
    A self-loop ``(a, r, a)`` adds 2 to ``degree[a]``.

    Co-frequency lookups are vectorised: keys are packed into int64 and
    looked up in sorted arrays.
    """

    def __init__(self, triples: np.ndarray, n_entities: int, n_predicates: int):
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        self.n_entities = int(n_entities)
        self.n_predicates = int(n_predicates)
        self.n_triples = len(triples)
        s, p, o = triples.T
        self.degree = (
            np.bincount(s, minlength=n_entities) + np.bincount(o, minlength=n_entities)
        ).astype(np.int64)
        self.pred_freq = np.bincount(p, minlength=n_predicates).astype(np.int64)
        self._sp = _CountTable(s * n_predicates + p)
        self._op = _CountTable(o * n_predicates + p)
        self._so = _CountTable(s * n_entities + o)

        self.subject_candidates = [np.unique(s[p == r]) for r in range(n_predicates)]
        self.object_candidates = [np.unique(o[p == r]) for r in range(n_predicates)]

        nbrs: list[set] = [set() for _ in range(n_entities)]
        for si, pi, oi in triples.tolist():
            nbrs[si].add((oi, pi, "out"))
            nbrs[oi].add((si, pi, "in"))
        self.neighbor_map = [frozenset(n) for n in nbrs]
        for arr in (self.degree, self.pred_freq):
            arr.setflags(write=False)

    @classmethod
    def from_kg(cls, kg: KnowledgeGraph) -> "GraphIndex":
        return cls(kg.train, kg.n_entities, kg.n_predicates)

    def _check_entities(self, *ids):
        for arr in ids:
            arr = np.asarray(arr)
            if arr.size and (arr.min() < 0 or arr.max() >= self.n_entities):
                raise UnknownIdError("entity id outside vocabulary")

    def _check_predicates(self, arr):
        arr = np.asarray(arr)
        if arr.size and (arr.min() < 0 or arr.max() >= self.n_predicates):
            raise UnknownIdError("predicate id outside vocabulary")

    def entity_degree(self, e):
        self._check_entities(e)
        return self.degree[e]

    def predicate_frequency(self, p):
        self._check_predicates(p)
        return self.pred_freq[p]

    def cofreq_sp(self, s, p):
        self._check_entities(s)
        self._check_predicates(p)
        return self._sp.lookup(np.asarray(s) * self.n_predicates + np.asarray(p))

    def cofreq_op(self, o, p):
        self._check_entities(o)
        self._check_predicates(p)
        return self._op.lookup(np.asarray(o) * self.n_predicates + np.asarray(p))

    def cofreq_so(self, s, o):
        """Count of train triples with ``s`` as subject and ``o`` as object."""
        self._check_entities(s, o)
        return self._so.lookup(np.asarray(s) * self.n_entities + np.asarray(o))

    def neighbors(self, e: int) -> frozenset:
        """Set of ``(neighbour, predicate, direction)`` incident on ``e``."""
        self._check_entities(e)
        return self.neighbor_map[e]

    def bernoulli_stats(self) -> tuple[np.ndarray, np.ndarray]:
        """Mean tails-per-head and heads-per-tail for every predicate."""
        tph = np.zeros(self.n_predicates)
        hpt = np.zeros(self.n_predicates)
        sp_keys, sp_counts = self._sp.keys, self._sp.counts
        op_keys, op_counts = self._op.keys, self._op.counts
        sp_pred = sp_keys % self.n_predicates
        op_pred = op_keys % self.n_predicates
        for r in range(self.n_predicates):
            heads = sp_counts[sp_pred == r]
            tails = op_counts[op_pred == r]
            if len(heads):
                tph[r] = heads.mean()
            if len(tails):
                hpt[r] = tails.mean()
        return tph, hpt


class _CountTable:
    def __init__(self, keys: np.ndarray):
        self.keys, self.counts = np.unique(keys, return_counts=True)

    def lookup(self, query) -> np.ndarray:
        query = np.asarray(query, dtype=np.int64)
        if len(self.keys) == 0:
            return np.zeros(query.shape, dtype=np.int64)
        pos = np.searchsorted(self.keys, query)
        pos = np.minimum(pos, len(self.keys) - 1)
        return np.where(self.keys[pos] == query, self.counts[pos], 0)


def build_index(kg: KnowledgeGraph) -> GraphIndex:
    return GraphIndex.from_kg(kg)
