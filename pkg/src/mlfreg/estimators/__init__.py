"""Probabilistic joint estimators p(y|x) for multi-label data."""

from .base import JointEstimator, UnsupportedOperation, log_joint, sample
from .br import BrModel, BrTrainer, br_train
from .cbm import CbmModel, CbmTrainer, cbm_train_em
from .crf import CrfModel, CrfObjective, CrfTrainer, crf_support_distribution, crf_train, label_pairs
from .pcc import PccModel, PccTrainer, pcc_map_beam, pcc_train

__all__ = [
    "BrModel", "BrTrainer", "CbmModel", "CbmTrainer", "CrfModel", "CrfObjective", "CrfTrainer", "JointEstimator",
    "PccModel", "PccTrainer", "UnsupportedOperation", "br_train", "cbm_train_em", "crf_support_distribution",
    "crf_train", "label_pairs", "log_joint", "pcc_map_beam", "pcc_train", "sample",
]
