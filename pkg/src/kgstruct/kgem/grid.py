"""Run many KGEM configurations on one graph, optionally in parallel."""

from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed

from ..evaluation import FilterIndex, make_queries, rank_queries, report_from_ranks
from ..graph import KnowledgeGraph
from .model import KGEModel, KgemConfig

logger = logging.getLogger(__name__)


def combo_seed(seed: int, index: int) -> int:
    """Seed of the ``index``-th combination of a grid run."""
    digest = hashlib.sha256(f"grid:{int(seed)}:{int(index)}".encode()).digest()
    return int.from_bytes(digest[:4], "little") & 0x7FFFFFFF


@dataclass
class GridResult:
    index: int
    config: KgemConfig
    ranks: np.ndarray
    metrics: dict
    seconds: float


def run_one(kg: KnowledgeGraph, config: KgemConfig, index: int = 0, split: str = "valid",
            tie_policy: str = "realistic") -> GridResult:
    start = time.perf_counter()
    model = KGEModel.from_config(config).fit(kg)
    queries = make_queries(kg.split(split))
    ranks = rank_queries(model.decision_function, queries, kg.n_entities,
                         FilterIndex.from_kg(kg), tie_policy)
    report = report_from_ranks(ranks)
    seconds = time.perf_counter() - start
    logger.info("combo %d %s MRR %.4f (%.1fs)", index, config.combo_key(), report.mrr, seconds)
    return GridResult(index, config, ranks, report.as_row(), seconds)


def run_grid(kg: KnowledgeGraph, configs: Sequence[KgemConfig], seed: int = 0, n_jobs: int = 1,
             split: str = "valid", tie_policy: str = "realistic") -> list[GridResult]:
    """Train and evaluate every config; results come back in input order.

    Each combination trains with its own seed from :func:`combo_seed`, so
    results do not depend on ``n_jobs`` or on execution order.
    """
    seeded = [replace(c, seed=combo_seed(seed, i)) for i, c in enumerate(configs)]
    jobs = (delayed(run_one)(kg, c, i, split, tie_policy) for i, c in enumerate(seeded))
    return list(Parallel(n_jobs=n_jobs)(jobs))
