"""Simulator network: structure and hyperparameters in, per-query ranks out."""

from __future__ import annotations

import logging
import math
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..exceptions import TrainingDivergedError, ValidationError
from ..features import FeatureNormalizer
from ..kgem.losses import LOSS_KINDS
from ..kgem.model import KgemConfig
from ..kgem.sampling import SAMPLER_KINDS
from ..kgem.scoring import SCORING_KINDS
from ..nn import MLP
from ..optim import Adam
from ..rng import make_rng
from .histogram import (
    N_BINS,
    histogram,
    kl_div,
    kl_div_grad,
    rank_transform,
    soft_histogram,
    soft_histogram_grad,
)
from .protocols import r2
from .records import ExperimentRecord

logger = logging.getLogger(__name__)

_LOG_FLOOR = 1e-12


class HyperEncoder:
    """Fixed-layout encoding of a :class:`KgemConfig`.

    Numeric slots are ``log10(lr)``, ``log10(reg)``, ``npp``, ``dim`` and the
    margin (0 when the loss has none), z-scored with statistics from
    :meth:`fit`.  Categorical groups are one-hot: loss, sampler and, in
    cross-KGEM mode, the scoring function.
    """

    NUMERIC = ("log10_lr", "log10_reg", "npp", "dim", "margin")

    def __init__(self, cross_kgem: bool = False):
        self.cross_kgem = cross_kgem
        self.groups = [("loss", LOSS_KINDS), ("sampler", SAMPLER_KINDS)]
        if cross_kgem:
            self.groups.append(("scoring", SCORING_KINDS))

    @property
    def slot_names(self) -> list[str]:
        names = list(self.NUMERIC)
        for group, values in self.groups:
            names.extend(f"{group}={v}" for v in values)
        return names

    @property
    def width(self) -> int:
        return len(self.slot_names)

    @staticmethod
    def _numeric(config: KgemConfig) -> list[float]:
        return [
            math.log10(max(config.lr, _LOG_FLOOR)),
            math.log10(max(config.reg, _LOG_FLOOR)),
            float(config.npp),
            float(config.dim),
            float(config.margin or 0.0),
        ]

    def fit(self, configs: Sequence[KgemConfig]) -> "HyperEncoder":
        raw = np.array([self._numeric(c) for c in configs])
        if len(raw) == 0:
            raise ValidationError("need at least one config to fit the encoder")
        self.mean_ = raw.mean(axis=0)
        std = raw.std(axis=0)
        self.scale_ = np.where(std > 0, std, 1.0)
        return self

    def transform(self, configs: Sequence[KgemConfig]) -> np.ndarray:
        out = np.zeros((len(configs), self.width))
        k = len(self.NUMERIC)
        for i, c in enumerate(configs):
            out[i, :k] = (np.array(self._numeric(c)) - self.mean_) / self.scale_
            offset = k
            for group, values in self.groups:
                value = getattr(c, group)
                if value not in values:
                    raise ValidationError(f"unknown {group} {value!r}")
                out[i, offset + values.index(value)] = 1.0
                offset += len(values)
        return out

    def get_state(self) -> dict:
        return {"cross_kgem": self.cross_kgem, "mean": self.mean_.tolist(),
                "scale": self.scale_.tolist(), "slots": self.slot_names}

    @classmethod
    def from_state(cls, state: dict) -> "HyperEncoder":
        enc = cls(state["cross_kgem"])
        if state["slots"] != enc.slot_names:
            raise ValidationError("hyperparameter slot layout does not match this build")
        enc.mean_ = np.array(state["mean"])
        enc.scale_ = np.array(state["scale"])
        return enc


class TwigNet:
    """Two branches merged by a trunk ending in one sigmoid unit.

    The structure branch sees each query's normalised features plus its side
    flag; the hyperparameter branch sees the combination's encoding once and
    its output is shared by every query of that combination.
    """

    def __init__(self, n_struct, n_hyper, struct_widths=(16, 8), hyper_widths=(16, 8),
                 trunk_widths=(8,), seed=0):
        self.struct = MLP([n_struct, *struct_widths], hidden="relu", output="relu",
                          rng=make_rng(seed, "twig-struct"))
        self.hyper = MLP([n_hyper, *hyper_widths], hidden="relu", output="relu",
                         rng=make_rng(seed, "twig-hyper"))
        merged = struct_widths[-1] + hyper_widths[-1]
        self.trunk = MLP([merged, *trunk_widths, 1], hidden="relu", output="sigmoid",
                         rng=make_rng(seed, "twig-trunk"))
        if len(self.trunk.weights) < 2:
            raise ValidationError("the trunk needs at least two layers")
        self._split = struct_widths[-1]

    @property
    def params(self) -> list[np.ndarray]:
        return self.struct.params + self.hyper.params + self.trunk.params

    @property
    def final_params(self) -> list[np.ndarray]:
        """Weights and biases of the last two trunk layers."""
        return self.trunk.params[-4:]

    @property
    def frozen_params(self) -> list[np.ndarray]:
        """Everything phase 2 must leave untouched."""
        final = {id(p) for p in self.final_params}
        return [p for p in self.params if id(p) not in final]

    def forward(self, X_struct, x_hyper):
        hs, cs = self.struct.forward(X_struct)
        hh, ch = self.hyper.forward(np.asarray(x_hyper, dtype=float).reshape(1, -1))
        merged = np.hstack([hs, np.broadcast_to(hh, (len(hs), hh.shape[1]))])
        y, ct = self.trunk.forward(merged)
        return y.ravel(), (cs, ch, ct)

    def backward(self, cache, dy):
        cs, ch, ct = cache
        g_trunk, d_merged = self.trunk.backward(ct, np.asarray(dy, dtype=float)[:, None])
        g_struct, _ = self.struct.backward(cs, d_merged[:, :self._split])
        g_hyper, _ = self.hyper.backward(ch, d_merged[:, self._split:].sum(axis=0, keepdims=True))
        return g_struct + g_hyper + g_trunk

    def get_state(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params]

    def set_state(self, arrays) -> None:
        arrays = list(arrays)
        params = self.params
        if len(arrays) != len(params):
            raise ValidationError("parameter count does not match the network")
        for dst, src in zip(params, arrays):
            if np.shape(src) != dst.shape:
                raise ValidationError(f"shape {np.shape(src)} does not match {dst.shape}")
            dst[...] = src


def twig_loss(y, rank_max, true_hist, true_mrr, kl_coef=1.0, mse_coef=0.0, bins=N_BINS):
    """Combined histogram-KL and MRR-MSE loss of one combination.

    ``y`` holds the sigmoid outputs for every query of the combination.
    Returns the loss and its gradient with respect to ``y``.
    """
    y = np.asarray(y, dtype=float)
    ranks = rank_transform(y, rank_max)
    pred_hist = soft_histogram(ranks, rank_max, bins)
    kl = kl_div(pred_hist, true_hist)
    pred_mrr = float(np.mean(1.0 / ranks))
    err = pred_mrr - true_mrr
    value = kl_coef * kl + mse_coef * err * err
    d_ranks = soft_histogram_grad(ranks, rank_max, kl_coef * kl_div_grad(pred_hist, true_hist), bins)
    d_ranks += mse_coef * 2.0 * err * (-1.0 / ranks ** 2) / len(ranks)
    return value, d_ranks * (rank_max - 1)


class TwigModel(BaseEstimator):
    """KGEM simulator trained on :class:`ExperimentRecord` lists.

    ``fit`` runs two phases: every layer with the KL loss alone, then only
    the final two trunk layers with the KL plus weighted MRR error.  Each
    optimisation step uses all queries of one record.
    """

    def __init__(self, phase1_epochs=5, phase2_epochs=10, kl_coef=1.0, mse_coef_phase1=0.0,
                 mse_coef_phase2=10.0, lr=5e-3, bins=N_BINS, struct_widths=(16, 8),
                 hyper_widths=(16, 8), trunk_widths=(8,), cross_kgem=False, seed=0):
        self.phase1_epochs = phase1_epochs
        self.phase2_epochs = phase2_epochs
        self.kl_coef = kl_coef
        self.mse_coef_phase1 = mse_coef_phase1
        self.mse_coef_phase2 = mse_coef_phase2
        self.lr = lr
        self.bins = bins
        self.struct_widths = struct_widths
        self.hyper_widths = hyper_widths
        self.trunk_widths = trunk_widths
        self.cross_kgem = cross_kgem
        self.seed = seed

    def init_model(self, records: Sequence[ExperimentRecord]) -> "TwigModel":
        if len({r.combo_key for r in records}) < 2:
            raise ValidationError("training needs records from at least 2 hyperparameter combos")
        self.normalizer_ = FeatureNormalizer().fit(np.vstack([r.features for r in records]))
        self.encoder_ = HyperEncoder(self.cross_kgem).fit([r.config for r in records])
        self.loss_history_ = {"phase1": [], "phase2": []}
        self.net_ = TwigNet(self.normalizer_.n_features_in_ + 1, self.encoder_.width,
                            tuple(self.struct_widths), tuple(self.hyper_widths),
                            tuple(self.trunk_widths), self.seed)
        return self

    def _inputs(self, features, sides, config):
        X = np.column_stack([self.normalizer_.transform(features), np.asarray(sides, dtype=float)])
        return X, self.encoder_.transform([config])[0]

    def record_loss(self, record: ExperimentRecord, mse_coef: float):
        """Loss of one record and gradients for every network parameter."""
        X, h = self._inputs(record.features, record.sides, record.config)
        y, cache = self.net_.forward(X, h)
        true_hist = histogram(record.ranks, record.rank_max, self.bins)
        value, dy = twig_loss(y, record.rank_max, true_hist, record.mrr,
                              self.kl_coef, mse_coef, self.bins)
        return value, self.net_.backward(cache, dy)

    def fit(self, records: Sequence[ExperimentRecord], y=None):
        records = list(records)
        self.init_model(records)
        self.train_phase(records, 1)
        self.train_phase(records, 2)
        return self

    def train_phase(self, records: Sequence[ExperimentRecord], phase: int) -> "TwigModel":
        """Run one training phase on an initialised model.

        Phase 1 updates every parameter with the phase-1 MSE weight; phase 2
        updates only :attr:`TwigNet.final_params`, each with a fresh Adam.
        """
        check_is_fitted(self, "net_")
        if not hasattr(self, "loss_history_"):
            self.loss_history_ = {"phase1": [], "phase2": []}
        records = list(records)
        if phase == 1:
            self._run_phase(records, self.net_.params, self.phase1_epochs, self.mse_coef_phase1, "phase1")
        elif phase == 2:
            self._run_phase(records, self.net_.final_params, self.phase2_epochs, self.mse_coef_phase2, "phase2")
        else:
            raise ValidationError(f"phase must be 1 or 2, got {phase}")
        return self

    def _run_phase(self, records, params, epochs, mse_coef, label):
        rng = make_rng(self.seed, f"twig-{label}")
        optimizer = Adam(params, lr=self.lr)
        wanted = {id(p) for p in params}
        picks = [i for i, p in enumerate(self.net_.params) if id(p) in wanted]
        for epoch in range(int(epochs)):
            total = 0.0
            for i in rng.permutation(len(records)):
                value, grads = self.record_loss(records[i], mse_coef)
                if not np.isfinite(value):
                    raise TrainingDivergedError(f"non-finite TWIG loss in {label}, epoch {epoch}")
                optimizer.step([grads[j] for j in picks])
                total += value
            self.loss_history_[label].append(total / len(records))
            logger.info("%s epoch %d loss %.5f", label, epoch + 1, total / len(records))

    def predict_ranks(self, features, sides, config: KgemConfig, rank_max: int) -> np.ndarray:
        check_is_fitted(self, "net_")
        features = np.asarray(features, dtype=float)
        if features.ndim != 2 or features.shape[1] != self.normalizer_.n_features_in_:
            raise ValidationError("feature width does not match the model")
        X, h = self._inputs(features, sides, config)
        return rank_transform(self.net_.forward(X, h)[0], rank_max)

    def predict_mrr(self, record: ExperimentRecord) -> float:
        ranks = self.predict_ranks(record.features, record.sides, record.config, record.rank_max)
        return float(np.mean(1.0 / ranks))

    def predict(self, records: Sequence[ExperimentRecord]) -> np.ndarray:
        return np.array([self.predict_mrr(r) for r in records])

    def score(self, records: Sequence[ExperimentRecord], y=None) -> float:
        return r2(self.predict(records), [r.mrr for r in records])


def train_twig(records, **params) -> TwigModel:
    return TwigModel(**params).fit(records)


def predict_mrr(model: TwigModel, record: ExperimentRecord) -> float:
    return model.predict_mrr(record)
