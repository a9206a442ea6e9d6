"""Training-free, hardware-aware architecture search driven by NN-Degree."""

from .exceptions import (DataError, DomainError, FitError, FlashError, InfeasibleError,
                         ModelStateError, SpaceTooLargeError)
from .hardware import (DEFAULT_HW, AreaModel, CostModels, EnergyModel, HardwareFeatures, HwConfig,
                       LatencyModel, area, feature_matrix, features, tile_count, tile_requirements,
                       total_tiles)
from .predictor import AccuracyModel, AccuracyPredictor, AccuracySample, fit_accuracy, predict_accuracy
from .search import (Constraints, Evaluation, Objective, SearchResult, brute_force_search, evaluate,
                     evaluate_many, hierarchical_search, shgo_minimize, training_free_search)
from .space import (DEFAULT_SPEC, ArchConfig, LayerDescriptor, SpaceSpec, iter_space, realize_layers,
                    sample_uniform, search_space_size, validate)
from .topology import NNDegreeTransformer, degree_array, nn_degree, oracle_degree

__version__ = "0.1.0"

__all__ = [
    "AccuracyModel", "AccuracyPredictor", "AccuracySample", "ArchConfig", "AreaModel", "Constraints",
    "CostModels", "DEFAULT_HW", "DEFAULT_SPEC", "DataError", "DomainError", "EnergyModel", "Evaluation",
    "FitError", "FlashError", "HardwareFeatures", "HwConfig", "InfeasibleError", "LatencyModel",
    "LayerDescriptor", "ModelStateError", "NNDegreeTransformer", "Objective", "SearchResult",
    "SpaceSpec", "SpaceTooLargeError", "area", "brute_force_search", "degree_array", "evaluate",
    "evaluate_many", "feature_matrix", "features", "fit_accuracy", "hierarchical_search",
    "iter_space", "nn_degree", "oracle_degree", "predict_accuracy", "realize_layers",
    "sample_uniform", "search_space_size", "shgo_minimize", "tile_count", "tile_requirements",
    "total_tiles", "training_free_search", "validate",
]
