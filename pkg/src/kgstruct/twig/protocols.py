"""Train/test protocols over experiment records, R² and signal summaries."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..exceptions import ValidationError
from ..rng import make_rng
from .histogram import histogram, kl_div

MODES = ("holdout", "zero-shot", "few-shot")


def r2(predicted, actual) -> float:
    """Coefficient of determination ``1 - SS_res / SS_tot``."""
    predicted = np.asarray(predicted, dtype=float).ravel()
    actual = np.asarray(actual, dtype=float).ravel()
    if len(actual) < 2 or len(predicted) != len(actual):
        raise ValidationError("r2 needs at least 2 aligned points")
    ss_tot = float(((actual - actual.mean()) ** 2).sum())
    if ss_tot == 0:
        raise ValidationError("r2 is undefined when the actual values have zero variance")
    return 1.0 - float(((actual - predicted) ** 2).sum()) / ss_tot


def _check_pct(pct):
    if not 0 <= pct < 100:
        raise ValidationError(f"pct must be in [0, 100), got {pct}")


def _combo_order(keys, seed, label):
    keys = sorted(set(keys), key=repr)
    perm = make_rng(seed, label).permutation(len(keys))
    return [keys[i] for i in perm]


def split_protocols(records: Sequence, mode: str = "holdout", kg: str | None = None,
                    pct: float = 10.0, seed: int = 0):
    """Split records into ``(train, test)``.

    ``holdout``: ``floor(pct% of combos)`` are held out for every graph.
    ``zero-shot``: every record of graph ``kg`` is held out.
    ``few-shot``: as zero-shot, but ``floor(pct%)`` of ``kg``'s combos move
    back to train.
    """
    records = list(records)
    _check_pct(pct)
    if mode == "holdout":
        order = _combo_order((r.combo_key for r in records), seed, "holdout")
        held = set(order[:math.floor(len(order) * pct / 100)])
        test = [r for r in records if r.combo_key in held]
        train = [r for r in records if r.combo_key not in held]
    elif mode in ("zero-shot", "few-shot"):
        if kg is None:
            raise ValidationError(f"{mode} needs the name of the held-out graph")
        if not any(r.kg_name == kg for r in records):
            raise ValidationError(f"no records for graph {kg!r}")
        train = [r for r in records if r.kg_name != kg]
        test = [r for r in records if r.kg_name == kg]
        if mode == "few-shot":
            order = _combo_order((r.combo_key for r in test), seed, f"few-shot:{kg}")
            shown = set(order[:math.floor(len(order) * pct / 100)])
            train += [r for r in test if r.combo_key in shown]
            test = [r for r in test if r.combo_key not in shown]
    else:
        raise ValidationError(f"unknown mode {mode!r}; expected one of {MODES}")
    return train, test


def per_kg_r2(model, records: Sequence) -> dict[str, dict]:
    """R² of predicted vs true MRR per graph, plus the scatter points."""
    out = {}
    for name in sorted({r.kg_name for r in records}):
        group = [r for r in records if r.kg_name == name]
        pred = model.predict(group)
        true = np.array([r.mrr for r in group])
        try:
            score = r2(pred, true)
        except ValidationError:
            score = float("nan")
        out[name] = {"r2": score, "n": len(group), "predicted": pred.tolist(), "actual": true.tolist()}
    return out


def mrr_correlations(records: Sequence) -> dict[str, float]:
    """Pearson correlation of each numeric hyperparameter with MRR.

    Learning rate and regulariser weight are taken on a log10 scale.
    Constant hyperparameters get NaN.
    """
    mrr = np.array([r.mrr for r in records])
    values = {
        "lr": [math.log10(r.config.lr) if r.config.lr > 0 else -12 for r in records],
        "reg": [math.log10(r.config.reg) if r.config.reg > 0 else -12 for r in records],
        "npp": [r.config.npp for r in records],
        "dim": [r.config.dim for r in records],
    }
    out = {}
    for name, xs in values.items():
        xs = np.asarray(xs, dtype=float)
        if xs.std() == 0 or mrr.std() == 0:
            out[name] = float("nan")
        else:
            out[name] = float(np.corrcoef(xs, mrr)[0, 1])
    return out


def rank_kl_matrix(records: Sequence) -> np.ndarray:
    """Pairwise KL divergence between the records' rank histograms."""
    hists = [histogram(r.ranks, r.rank_max) for r in records]
    n = len(hists)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                out[i, j] = kl_div(hists[i], hists[j])
    return out
