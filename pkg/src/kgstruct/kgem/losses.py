"""Pointwise, pairwise and setwise losses over positive/negative scores.

The batched functions take ``pos`` of shape ``(B,)`` and ``neg`` of shape
``(B, n)`` and return ``(value, dpos, dneg)``.
"""

import numpy as np

LOSS_KINDS = ("MRL", "BCEL", "CEL")


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


def bce(pos, neg):
    """Mean binary cross-entropy over every positive and negative score."""
    pos = np.asarray(pos, dtype=float)
    neg = np.asarray(neg, dtype=float)
    n = pos.size + neg.size
    value = (_softplus(-pos).sum() + _softplus(neg).sum()) / n
    return value, (_sigmoid(pos) - 1.0) / n, _sigmoid(neg) / n


def margin_ranking(pos, neg, margin):
    """Mean of ``max(0, margin + neg - pos)`` over every (positive, negative) pair."""
    pos = np.asarray(pos, dtype=float)
    neg = np.asarray(neg, dtype=float)
    viol = margin + neg - pos[:, None]
    active = (viol > 0).astype(float) / neg.size
    return np.maximum(viol, 0.0).sum() / neg.size, -active.sum(axis=1), active


def cross_entropy(pos, neg):
    """Mean negative log-softmax of each positive among itself and its negatives."""
    pos = np.asarray(pos, dtype=float)
    neg = np.asarray(neg, dtype=float)
    logits = np.concatenate([pos[:, None], neg], axis=1)
    top = logits.max(axis=1, keepdims=True)
    lse = top[:, 0] + np.log(np.exp(logits - top).sum(axis=1))
    probs = np.exp(logits - lse[:, None])
    b = len(pos)
    value = (lse - pos).sum() / b
    return value, (probs[:, 0] - 1.0) / b, probs[:, 1:] / b


def batch_loss(kind, pos, neg, margin=None):
    if kind == "BCEL":
        return bce(pos, neg)
    if kind == "MRL":
        return margin_ranking(pos, neg, margin)
    if kind == "CEL":
        return cross_entropy(pos, neg)
    raise ValueError(f"unknown loss {kind!r}; expected one of {LOSS_KINDS}")


def loss_bcel(score, flag):
    """Binary cross-entropy of one score against a 0/1 flag."""
    return float(flag * _softplus(-score) + (1 - flag) * _softplus(score))


def loss_mrl(score_pos, score_neg, margin):
    return float(max(0.0, margin + score_neg - score_pos))


def loss_cel(score_pos, scores_neg):
    value, _, _ = cross_entropy(np.array([score_pos]), np.asarray(scores_neg, float)[None, :])
    return float(value)
