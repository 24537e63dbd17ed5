"""Robust pseudo-label selection for self-training logistic regression."""

from .criteria import SelectionResult, ThresholdConfig, UtilityTensor, build_tensor
from .dataset import Dataset, SplitState, generate_binomial, load_csv, make_split
from .evidence import PriorSpec, laplace_evidence, ppp_approx, ppp_exact
from .glm import LogisticGLM, ModelSpec, fit
from .selftrain import LoopConfig, SelfTrainingPLS

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "LogisticGLM",
    "LoopConfig",
    "ModelSpec",
    "PriorSpec",
    "SelectionResult",
    "SelfTrainingPLS",
    "SplitState",
    "ThresholdConfig",
    "UtilityTensor",
    "build_tensor",
    "fit",
    "generate_binomial",
    "laplace_evidence",
    "load_csv",
    "make_split",
    "ppp_approx",
    "ppp_exact",
]
