"""Graph neural network discharge forecasting on river gauge networks."""

from .adjacency import AdjacencyType, EdgeOrientation, build_adjacency, normalize_augmented
from .dataset import NodeSignal, NormalizationParams, SampleSet, extract_samples, make_splits, zscore_normalize
from .estimator import DischargeForecaster, SignalScaler
from .evaluation import NseReport, weighted_nse
from .exceptions import ConfigError, DataError, DomainError, IntegrityError, NumericError, RiverGNNError
from .models import Architecture, Model, ModelConfig, build_model, forward
from .river_graph import EdgeAttrs, RiverGraph, filter_gauges, inverse_dfs, rewire_remove
from .training import TrainConfig, TrainHistory, train

__version__ = "0.1.0"

__all__ = [
    "AdjacencyType", "Architecture", "ConfigError", "DataError", "DischargeForecaster", "DomainError", "EdgeAttrs",
    "EdgeOrientation", "IntegrityError", "Model", "ModelConfig", "NodeSignal", "NormalizationParams", "NseReport",
    "NumericError", "RiverGNNError", "RiverGraph", "SampleSet", "SignalScaler", "TrainConfig", "TrainHistory",
    "build_adjacency", "build_model", "extract_samples", "filter_gauges", "forward", "inverse_dfs", "make_splits",
    "normalize_augmented", "rewire_remove", "train", "weighted_nse", "zscore_normalize",
]
