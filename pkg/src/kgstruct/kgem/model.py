"""KGEM configuration, estimator and training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..evaluation import FilterIndex, evaluate
from ..exceptions import TrainingDivergedError, ValidationError
from ..graph import GraphIndex, KnowledgeGraph
from ..optim import Adam
from ..rng import make_rng
from .losses import LOSS_KINDS, batch_loss
from .sampling import SAMPLER_KINDS, NegativeSampler
from .scoring import SCORING_KINDS, make_scoring

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KgemConfig:
    scoring: str = "ComplEx"
    dim: int = 50
    loss: str = "BCEL"
    margin: float | None = None
    sampler: str = "bernoulli"
    npp: int = 25
    lr: float = 1e-2
    reg: float = 1e-2
    p_norm: int = 2
    batch_size: int = 128
    epochs: int = 100
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.scoring not in SCORING_KINDS:
            raise ValidationError(f"scoring must be one of {SCORING_KINDS}, got {self.scoring!r}")
        if self.loss not in LOSS_KINDS:
            raise ValidationError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")
        if self.sampler not in SAMPLER_KINDS:
            raise ValidationError(f"sampler must be one of {SAMPLER_KINDS}, got {self.sampler!r}")
        if (self.loss == "MRL") != (self.margin is not None):
            raise ValidationError("margin is required for MRL and only for MRL")
        if self.margin is not None and self.margin < 0:
            raise ValidationError("margin must be >= 0")
        for name in ("dim", "npp", "batch_size", "epochs"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if self.lr < 0 or self.reg < 0:
            raise ValidationError("lr and reg must be non-negative")
        if self.p_norm not in (1, 2):
            raise ValidationError("p_norm must be 1 or 2")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "KgemConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValidationError(f"unknown KGEM config keys: {sorted(unknown)}")
        return cls(**data)

    def combo_key(self) -> tuple:
        """Identity of the hyperparameter combination, ignoring seed and epochs."""
        return (self.scoring, self.dim, self.loss, self.margin, self.sampler,
                self.npp, self.lr, self.reg, self.p_norm, self.batch_size)


def regularize(rows, coef) -> float:
    """Unweighted L3 penalty ``coef * sum ||v||_3^3`` over embedding rows."""
    return coef * float((np.abs(np.asarray(rows, dtype=float)) ** 3).sum())


def _scatter_rows(n_rows, rows, values):
    """Sum ``values`` into an ``(n_rows, width)`` array by row index."""
    order = np.argsort(rows, kind="stable")
    rows = rows[order]
    starts = np.flatnonzero(np.r_[True, rows[1:] != rows[:-1]])
    out = np.zeros((n_rows, values.shape[1]))
    out[rows[starts]] = np.add.reduceat(values[order], starts, axis=0)
    return out


class KGEModel(BaseEstimator):
    """Embedding model trained by negative sampling and Adam.

    ``fit`` takes a :class:`~kgstruct.graph.KnowledgeGraph` and trains on its
    train split only.  ``decision_function`` scores triples; ``score``
    returns the filtered validation (or test) MRR.

    Parameters mirror :class:`KgemConfig`.  ``eval_every`` > 0 records the
    validation MRR every that many epochs in ``validation_history_``.
    """

    def __init__(self, scoring="ComplEx", dim=50, loss="BCEL", margin=None,
                 sampler="bernoulli", npp=25, lr=1e-2, reg=1e-2, p_norm=2,
                 batch_size=128, epochs=100, seed=0, eval_every=0):
        self.scoring = scoring
        self.dim = dim
        self.loss = loss
        self.margin = margin
        self.sampler = sampler
        self.npp = npp
        self.lr = lr
        self.reg = reg
        self.p_norm = p_norm
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.eval_every = eval_every

    @classmethod
    def from_config(cls, config: KgemConfig, **kwargs) -> "KGEModel":
        return cls(**config.to_dict(), **kwargs)

    @property
    def config(self) -> KgemConfig:
        params = self.get_params()
        params.pop("eval_every")
        return KgemConfig(**params)

    def init_embeddings(self, n_entities: int, n_predicates: int):
        scoring = make_scoring(self.scoring, self.p_norm)
        width = scoring.width(self.dim)
        bound = 0.5 / math.sqrt(self.dim)
        rng = make_rng(self.seed, "kgem-init")
        self.entity_embeddings_ = rng.uniform(-bound, bound, size=(n_entities, width))
        self.predicate_embeddings_ = rng.uniform(-bound, bound, size=(n_predicates, width))
        self.scoring_ = scoring
        return self

    def fit(self, kg: KnowledgeGraph, y=None):
        config = self.config
        if len(kg.train) == 0:
            raise ValidationError("training split is empty")
        self.init_embeddings(kg.n_entities, kg.n_predicates)
        self.n_entities_ = kg.n_entities
        index = GraphIndex.from_kg(kg)
        sampler = NegativeSampler(config.sampler, index)
        rng = make_rng(config.seed, "kgem-train")
        E, P = self.entity_embeddings_, self.predicate_embeddings_
        optimizer = Adam([E, P], lr=config.lr)
        self.optimizer_ = optimizer
        train = kg.train
        filt = FilterIndex.from_kg(kg) if self.eval_every else None
        self.loss_history_ = []
        self.validation_history_ = []
        for epoch in range(config.epochs):
            order = rng.permutation(len(train))
            total, batches = 0.0, 0
            for start in range(0, len(train), config.batch_size):
                pos = train[order[start:start + config.batch_size]]
                neg = sampler.sample(pos, config.npp, rng).triples
                value, gE, gP = self._batch_gradients(pos, neg, config)
                if not np.isfinite(value):
                    raise TrainingDivergedError(
                        f"non-finite loss {value} at epoch {epoch}, batch {batches}"
                    )
                optimizer.step([gE, gP])
                total += value
                batches += 1
            self.loss_history_.append(total / batches)
            if self.eval_every and (epoch + 1) % self.eval_every == 0 and len(kg.valid):
                mrr = evaluate(self.decision_function, kg.valid, kg.n_entities, filt).mrr
                self.validation_history_.append((epoch + 1, mrr))
                logger.info("epoch %d loss %.4f valid MRR %.4f", epoch + 1, total / batches, mrr)
        return self

    def _batch_gradients(self, pos, neg, config):
        E, P = self.entity_embeddings_, self.predicate_embeddings_
        f = self.scoring_
        b, n = neg.shape[:2]
        flat_neg = neg.reshape(-1, 3)
        all_t = np.concatenate([pos, flat_neg])
        es, ep, eo = E[all_t[:, 0]], P[all_t[:, 1]], E[all_t[:, 2]]
        scores = f.score(es, ep, eo)
        value, dpos, dneg = batch_loss(config.loss, scores[:b], scores[b:].reshape(b, n), config.margin)
        dscore = np.concatenate([dpos, dneg.ravel()])
        gs, gp, go = f.grad(es, ep, eo, dscore)
        gE = _scatter_rows(len(E), np.concatenate([all_t[:, 0], all_t[:, 2]]), np.concatenate([gs, go]))
        gP = _scatter_rows(len(P), all_t[:, 1], gp)
        if config.reg > 0:
            # mean of |x|^3 over every gathered coordinate, so the penalty
            # stays on the scale of the mean-reduced losses; summed per
            # distinct row, weighted by how often the batch gathers it
            coef = config.reg / (3 * es.size)
            for table, grad, ids in ((E, gE, all_t[:, [0, 2]].ravel()), (P, gP, all_t[:, 1])):
                count = np.bincount(ids, minlength=len(table)).astype(float)
                used = np.flatnonzero(count)
                rows = table[used]
                w = coef * count[used]
                value += float(w @ (np.abs(rows) ** 3).sum(axis=1))
                grad[used] += 3.0 * w[:, None] * rows * np.abs(rows)
        return value, gE, gP

    def batch_loss(self, pos, neg) -> float:
        """Loss (including the penalty) of one positive/negative batch."""
        check_is_fitted(self, "entity_embeddings_")
        return self._batch_gradients(np.asarray(pos), np.asarray(neg), self.config)[0]

    def decision_function(self, triples) -> np.ndarray:
        check_is_fitted(self, "entity_embeddings_")
        t = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        E, P = self.entity_embeddings_, self.predicate_embeddings_
        return self.scoring_.score(E[t[:, 0]], P[t[:, 1]], E[t[:, 2]])

    def evaluate(self, kg: KnowledgeGraph, split: str = "valid", tie_policy: str = "realistic"):
        return evaluate(self.decision_function, kg.split(split), kg.n_entities,
                        FilterIndex.from_kg(kg), tie_policy)

    def score(self, kg: KnowledgeGraph, y=None, split: str = "valid") -> float:
        return self.evaluate(kg, split).mrr


def train_kgem(kg: KnowledgeGraph, config: KgemConfig, **kwargs) -> KGEModel:
    return KGEModel.from_config(config, **kwargs).fit(kg)


GRID = {
    "dim": (50, 100, 250),
    "sampler": ("basic", "bernoulli", "pseudo-typed"),
    "npp": (5, 25, 125),
    "lr": (1e-2, 1e-4, 1e-6),
    "reg": (1e-2, 1e-4, 1e-6),
}
LOSS_MARGINS = {"MRL": (0.5, 1.0, 2.0), "BCEL": (None,), "CEL": (None,)}


def enumerate_grid(scoring: str | None = None, base: KgemConfig | None = None, **overrides) -> list[KgemConfig]:
    """Cartesian product of the hyperparameter grid.

    Passing a sequence for any grid axis (``loss``, ``margin``, ``dim``,
    ``sampler``, ``npp``, ``lr``, ``reg``) restricts that axis; ``margin``
    only applies to MRL.
    """
    base = base or KgemConfig()
    scoring = scoring or base.scoring
    axes = dict(GRID)
    losses = tuple(overrides.pop("loss", LOSS_KINDS))
    margins = overrides.pop("margin", None)
    for key, values in overrides.items():
        if key not in axes:
            raise ValidationError(f"{key!r} is not a grid axis")
        axes[key] = tuple(values)
    configs = []
    for loss in losses:
        loss_margins = tuple(margins) if (margins is not None and loss == "MRL") else LOSS_MARGINS[loss]
        for margin in loss_margins:
            for dim in axes["dim"]:
                for sampler in axes["sampler"]:
                    for npp in axes["npp"]:
                        for lr in axes["lr"]:
                            for reg in axes["reg"]:
                                configs.append(replace(
                                    base, scoring=scoring,
                                    loss=loss, margin=margin, dim=dim, sampler=sampler,
                                    npp=npp, lr=lr, reg=reg,
                                ))
    return configs
