"""Embedding-free link prediction from structural features.

A triple is scored by a small dense network applied to its z-scored
structural feature vector.  No parameter is tied to an entity or predicate,
so a model trained on one graph can be evaluated on, or finetuned to, any
other graph.
"""

from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .evaluation import FilterIndex, evaluate
from .exceptions import TrainingDivergedError, ValidationError
from .features import (
    FEATURE_NAMES,
    AblationMask,
    FeatureNormalizer,
    StructuralFeaturizer,
    featurize,
    mask,
)
from .graph import GraphIndex, KnowledgeGraph
from .kgem.losses import margin_ranking
from .kgem.sampling import NegativeSampler
from .nn import MLP
from .optim import Adam
from .rng import make_rng

logger = logging.getLogger(__name__)


def twigi_scorer(network: MLP, index: GraphIndex, normalizer: FeatureNormalizer,
                 ablation=AblationMask()):
    """Scorer closure for :func:`~kgstruct.evaluation.evaluate`.

    Candidate triples are featurised on the fly against ``index``, so only the
    triples the index was built from can influence any score.
    """
    ablation = ablation if isinstance(ablation, AblationMask) else AblationMask(ablation)

    def score(triples):
        X = normalizer.transform(mask(featurize(index, triples), ablation))
        return network.predict(X).ravel()

    return score


class TwigI(BaseEstimator):
    """Structural link predictor trained with a pairwise margin loss.

    Parameters
    ----------
    npp : int
        Uniform (basic) corruptions per positive.
    lr : float
        Adam learning rate.  ``0`` leaves the network unchanged.
    batch_size : int
    margin : float
        Margin of the ranking loss.
    epochs : int
        Passes over the training triples in :meth:`fit`.
    hidden : tuple of int
        Hidden layer widths.
    dropout : float
        Inverted-dropout probability after each hidden layer (training only).
    ablation : iterable of str
        Feature names the model never sees.
    seed : int
    eval_every : int
        If > 0, record validation MRR every that many epochs.
    """

    def __init__(self, npp=30, lr=5e-3, batch_size=128, margin=0.1, epochs=20,
                 hidden=(24, 8), dropout=0.01, ablation=(), seed=0, eval_every=0):
        self.npp = npp
        self.lr = lr
        self.batch_size = batch_size
        self.margin = margin
        self.epochs = epochs
        self.hidden = hidden
        self.dropout = dropout
        self.ablation = ablation
        self.seed = seed
        self.eval_every = eval_every

    def _check_params(self):
        if int(self.npp) < 1 or int(self.batch_size) < 1:
            raise ValidationError("npp and batch_size must be >= 1")
        if int(self.epochs) < 0:
            raise ValidationError("epochs must be >= 0")
        if self.lr < 0:
            raise ValidationError("lr must be >= 0")
        if self.margin < 0:
            raise ValidationError("margin must be >= 0")

    @property
    def feature_names_(self) -> list[str]:
        return AblationMask(self.ablation).kept(FEATURE_NAMES)

    def init_network(self, n_inputs: int | None = None) -> "TwigI":
        n_inputs = len(self.feature_names_) if n_inputs is None else int(n_inputs)
        if n_inputs <= 0:
            raise ValidationError("input dimension must be positive")
        self.network_ = MLP([n_inputs, *self.hidden, 1], hidden="relu", output="sigmoid",
                            dropout=self.dropout, rng=make_rng(self.seed, "twigi-init"))
        self.stages_ = 0
        return self

    def attach(self, kg: KnowledgeGraph) -> "TwigI":
        """Index ``kg``'s training split and fit a fresh normalizer on it."""
        if len(kg.train) < 2:
            raise ValidationError("need at least 2 training triples")
        self.featurizer_ = StructuralFeaturizer(kg.n_entities, kg.n_predicates,
                                                self.ablation).fit(kg.train)
        self.normalizer_ = FeatureNormalizer().fit(self.featurizer_.transform(kg.train))
        self.kg_name_ = kg.name
        return self

    def fit(self, kg: KnowledgeGraph, y=None):
        self._check_params()
        self.init_network()
        self.loss_history_ = []
        self.validation_history_ = []
        return self._train_on(kg, self.epochs, self.lr)

    def finetune(self, kg: KnowledgeGraph, epochs=None, lr=None, npp=None, batch_size=None):
        """Continue training the current weights on another graph.

        The new graph gets its own index and normalizer, and Adam starts from
        a fresh state.  Hyperparameters not given keep their current values.
        """
        check_is_fitted(self, "network_")
        if self.network_.n_inputs != len(self.feature_names_):
            raise ValidationError("network input width does not match the feature list")
        if lr is not None:
            self.lr = lr
        if npp is not None:
            self.npp = npp
        if batch_size is not None:
            self.batch_size = batch_size
        self._check_params()
        return self._train_on(kg, self.epochs if epochs is None else epochs, self.lr)

    def _train_on(self, kg, epochs, lr):
        self.attach(kg)
        self.stages_ += 1
        rng = make_rng(self.seed, f"twigi-train-{self.stages_}")
        sampler = NegativeSampler("basic", self.featurizer_.index_)
        optimizer = Adam(self.network_.params, lr=lr)
        filt = FilterIndex.from_kg(kg) if self.eval_every and len(kg.valid) else None
        train = kg.train
        for epoch in range(int(epochs)):
            order = rng.permutation(len(train))
            total, batches = 0.0, 0
            for start in range(0, len(train), self.batch_size):
                pos = train[order[start:start + self.batch_size]]
                neg = sampler.sample(pos, self.npp, rng).triples.reshape(-1, 3)
                value, grads = self._batch_gradients(pos, neg, rng)
                if not np.isfinite(value):
                    raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
                optimizer.step(grads)
                total += value
                batches += 1
            self.loss_history_.append(total / batches)
            if filt is not None and (epoch + 1) % self.eval_every == 0:
                mrr = evaluate(self.decision_function, kg.valid, kg.n_entities, filt).mrr
                self.validation_history_.append((epoch + 1, mrr))
                logger.info("epoch %d loss %.5f valid MRR %.4f", epoch + 1, total / batches, mrr)
        return self

    def _features(self, triples):
        return self.normalizer_.transform(self.featurizer_.transform(triples))

    def _batch_gradients(self, pos, neg, rng=None):
        """Loss and parameter gradients for one batch.

        ``neg`` holds ``npp`` rows per positive, grouped by positive.  With
        ``rng=None`` dropout is off, which is what gradient checks use.
        """
        b = len(pos)
        X = np.vstack([self._features(pos), self._features(neg)])
        out, cache = self.network_.forward(X, training=rng is not None, rng=rng)
        scores = out.ravel()
        value, dpos, dneg = margin_ranking(scores[:b], scores[b:].reshape(b, -1), self.margin)
        d_out = np.concatenate([dpos, dneg.ravel()])[:, None]
        grads, _ = self.network_.backward(cache, d_out)
        return float(value), grads

    def batch_loss(self, pos, neg) -> float:
        return self._batch_gradients(np.asarray(pos), np.asarray(neg).reshape(-1, 3))[0]

    def decision_function(self, triples) -> np.ndarray:
        check_is_fitted(self, "featurizer_", msg="%(name)s has no graph attached; call attach(kg) or fit first")
        return self.network_.predict(self._features(triples)).ravel()

    def scorer_for(self, kg: KnowledgeGraph):
        """Scorer featurising against ``kg``'s train split with a matching normalizer."""
        check_is_fitted(self, "network_")
        featurizer = StructuralFeaturizer(kg.n_entities, kg.n_predicates, self.ablation).fit(kg.train)
        normalizer = FeatureNormalizer().fit(featurizer.transform(kg.train))
        return twigi_scorer(self.network_, featurizer.index_, normalizer, featurizer.mask_)

    def evaluate(self, kg: KnowledgeGraph, split="valid", tie_policy="realistic"):
        """Filtered ranking on ``split``, featurising against the model's attached graph."""
        return evaluate(self.decision_function, kg.split(split), kg.n_entities,
                        FilterIndex.from_kg(kg), tie_policy)

    def score(self, kg: KnowledgeGraph, y=None, split="valid") -> float:
        return self.evaluate(kg, split).mrr


def random_scorer(seed: int = 0):
    """Scorer returning i.i.d. uniform noise, the baseline for learned scorers."""
    rng = make_rng(seed, "random-scorer")

    def score(triples):
        return rng.random(len(np.asarray(triples).reshape(-1, 3)))

    return score
