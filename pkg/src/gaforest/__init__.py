"""Soft decision forest heads for adversarial training, with conditioning diagnostics."""
from . import _backend
from .datasets import DatasetSpec, generate, ring_mixture
from .errors import (ContractError, DegenerateMatrixError, DivergenceError, DomainError,
                     GaforestError, NonFiniteError, ShapeError, SpecError)
from .evaluation import adjusted_loss, kl_to_mixture, mode_coverage, tournament
from .forest import (HardForest, SoftForest, SoftTree, forest_forward, forest_probability,
                     hard_forest_fit, hard_forest_predict, leaf_blend, soft_decision, tree_output)
from .linalg import SingularSpectrum, condition_number, raw_condition, singular_values
from .networks import ModelSpec, Network, build, load_preset
from .tensor import Graph, Tensor, set_debug
from .training import TrainConfig, TrainRun, train_classifier, train_gan

BACKEND = _backend.NAME
__version__ = "0.1.0"
