"""Per-combination experiment records: query features joined with KGEM ranks."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from ..evaluation import make_queries
from ..exceptions import ValidationError
from ..features import FEATURE_NAMES, featurize
from ..graph import GraphIndex, KnowledgeGraph
from ..kgem.model import KgemConfig

SCHEMA_VERSION = 1
SIDES = ("subject", "object")


class KgemRun(NamedTuple):
    """Ranks one trained KGEM assigned to a split's queries, in query order."""

    config: KgemConfig
    ranks: np.ndarray | None
    seed: int = 0


@dataclass(frozen=True, eq=False)
class ExperimentRecord:
    """One KGEM run on one graph.

    ``features[i]`` describes the ground-truth triple of query ``i``,
    ``sides[i]`` is 1 when the object was predicted and 0 for the subject,
    and ``ranks[i]`` is the filtered rank the KGEM gave the answer.
    """

    kg_name: str
    config: KgemConfig
    seed: int
    features: np.ndarray
    sides: np.ndarray
    ranks: np.ndarray
    rank_max: int
    mrr: float

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        sides = np.asarray(self.sides, dtype=np.int8)
        ranks = np.asarray(self.ranks, dtype=np.int64)
        if feats.ndim != 2 or feats.shape[1] != len(FEATURE_NAMES):
            raise ValidationError(f"features must be (n, {len(FEATURE_NAMES)}), got {feats.shape}")
        if not (len(feats) == len(sides) == len(ranks)) or len(ranks) == 0:
            raise ValidationError("features, sides and ranks must be non-empty and aligned")
        if ranks.min() < 1 or ranks.max() > self.rank_max:
            raise ValidationError(f"ranks must lie in [1, {self.rank_max}]")
        if not set(np.unique(sides).tolist()) <= {0, 1}:
            raise ValidationError("sides must be 0 (subject) or 1 (object)")
        if abs(float(np.mean(1.0 / ranks)) - self.mrr) > 1e-9:
            raise ValidationError("stored MRR does not match the ranks")
        for name, arr in (("features", feats), ("sides", sides), ("ranks", ranks)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def combo_key(self) -> tuple:
        return self.config.combo_key()

    @property
    def n_queries(self) -> int:
        return len(self.ranks)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "kg": self.kg_name,
            "config": self.config.to_dict(),
            "seed": int(self.seed),
            "rank_max": int(self.rank_max),
            "mrr": float(self.mrr),
            "feature_names": list(FEATURE_NAMES),
            "sides": [SIDES[s] for s in self.sides.tolist()],
            "ranks": self.ranks.tolist(),
            "features": self.features.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentRecord":
        if data.get("schema") != SCHEMA_VERSION:
            raise ValidationError(f"unsupported record schema {data.get('schema')!r}")
        if data.get("feature_names", list(FEATURE_NAMES)) != list(FEATURE_NAMES):
            raise ValidationError("record feature names do not match this build")
        return cls(
            kg_name=data["kg"],
            config=KgemConfig.from_dict(data["config"]),
            seed=data["seed"],
            features=np.array(data["features"], dtype=np.float64),
            sides=np.array([SIDES.index(s) for s in data["sides"]], dtype=np.int8),
            ranks=np.array(data["ranks"], dtype=np.int64),
            rank_max=data["rank_max"],
            mrr=data["mrr"],
        )


def query_features(kg: KnowledgeGraph, split: str = "valid", index: GraphIndex | None = None):
    """Features and side flags of every query of ``split``, in evaluation order."""
    index = index or GraphIndex.from_kg(kg)
    queries = make_queries(kg.split(split))
    if not queries:
        raise ValidationError(f"{split} split is empty")
    triples = np.array([q.triple for q in queries], dtype=np.int64)
    sides = np.array([1 if q.side == "object" else 0 for q in queries], dtype=np.int8)
    return featurize(index, triples), sides


def build_records(kg: KnowledgeGraph, runs: Iterable[KgemRun], split: str = "valid") -> list[ExperimentRecord]:
    features, sides = query_features(kg, split)
    records = []
    for run in runs:
        if run.ranks is None:
            raise ValidationError(f"missing ranks for combo {run.config.combo_key()}")
        ranks = np.asarray(run.ranks, dtype=np.int64)
        if len(ranks) != len(sides):
            raise ValidationError(
                f"combo {run.config.combo_key()} has {len(ranks)} ranks for {len(sides)} queries"
            )
        records.append(ExperimentRecord(
            kg_name=kg.name, config=run.config, seed=run.seed, features=features,
            sides=sides, ranks=ranks, rank_max=kg.n_entities,
            mrr=float(np.mean(1.0 / ranks)),
        ))
    return records


def write_records(path, records: Iterable[ExperimentRecord], append: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a" if append else "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), separators=(",", ":")) + "\n")
    return path


def read_records(path) -> list[ExperimentRecord]:
    """Load every record from a JSON-lines file or a directory of them."""
    path = Path(path)
    files = sorted(path.glob("*.jsonl")) if path.is_dir() else [path]
    records = []
    for file in files:
        with open(file, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    records.append(ExperimentRecord.from_dict(json.loads(line)))
                except (KeyError, json.JSONDecodeError) as exc:
                    raise ValidationError(f"{file}:{lineno}: bad record ({exc})") from exc
    return records
