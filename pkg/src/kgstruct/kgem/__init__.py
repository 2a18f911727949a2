from .grid import GridResult, combo_seed, run_grid, run_one
from .losses import LOSS_KINDS, bce, cross_entropy, loss_bcel, loss_cel, loss_mrl, margin_ranking
from .model import GRID, KGEModel, KgemConfig, enumerate_grid, regularize, train_kgem
from .sampling import SAMPLER_KINDS, NegativeBatch, NegativeSampler, sample_negatives
from .scoring import SCORING_KINDS, ComplEx, DistMult, TransE, make_scoring

__all__ = [
    "LOSS_KINDS", "SAMPLER_KINDS", "SCORING_KINDS", "GRID",
    "KGEModel", "KgemConfig", "enumerate_grid", "train_kgem", "regularize",
    "NegativeBatch", "NegativeSampler", "sample_negatives",
    "ComplEx", "DistMult", "TransE", "make_scoring",
    "GridResult", "combo_seed", "run_grid", "run_one",
    "bce", "cross_entropy", "margin_ranking", "loss_bcel", "loss_cel", "loss_mrl",
]
