"""Simulating KGEM link-prediction results from structure and hyperparameters."""

from .histogram import (
    KL_EPS,
    N_BINS,
    histogram,
    kl_div,
    kl_div_grad,
    rank_transform,
    soft_histogram,
    soft_histogram_grad,
)
from .model import HyperEncoder, TwigModel, TwigNet, predict_mrr, train_twig, twig_loss
from .protocols import MODES, mrr_correlations, per_kg_r2, r2, rank_kl_matrix, split_protocols
from .records import (
    SCHEMA_VERSION,
    ExperimentRecord,
    KgemRun,
    build_records,
    query_features,
    read_records,
    write_records,
)

__all__ = [
    "KL_EPS", "N_BINS", "histogram", "kl_div", "kl_div_grad", "rank_transform",
    "soft_histogram", "soft_histogram_grad",
    "HyperEncoder", "TwigModel", "TwigNet", "predict_mrr", "train_twig", "twig_loss",
    "MODES", "mrr_correlations", "per_kg_r2", "r2", "rank_kl_matrix", "split_protocols",
    "SCHEMA_VERSION", "ExperimentRecord", "KgemRun", "build_records", "query_features",
    "read_records", "write_records",
]
