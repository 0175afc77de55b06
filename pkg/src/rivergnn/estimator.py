"""scikit-learn style wrappers around the normaliser and the graph forecaster."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from ._rng import substream
from .dataset import ArraySamples, NodeSignal, NormalizationParams, SampleSet, zscore_normalize
from .evaluation import weighted_nse
from .exceptions import ConfigError, DomainError
from .models import ModelConfig, build_model
from .river_graph import RiverGraph
from .training import TrainConfig, predict, train


def _check_signal(X) -> np.ndarray:
    X = check_array(X, allow_nd=True, dtype=np.float64, ensure_all_finite=True)
    if X.ndim != 3:
        raise DomainError(f"expected a signal of shape (gauges, time, channels), got {X.shape}")
    return X


class SignalScaler(BaseEstimator, TransformerMixin):
    """Per gauge and channel standard score of a (gauges, time, channels) array."""

    def fit(self, X, y=None):
        X = _check_signal(X)
        _, params = zscore_normalize(NodeSignal(X, _hours(X.shape[1]), tuple(range(X.shape[0]))))
        self.mean_, self.scale_ = params.mu, params.sigma
        return self

    def transform(self, X):
        check_is_fitted(self, ["mean_", "scale_"])
        X = _check_signal(X)
        return (X - self.mean_[:, None, :]) / self.scale_[:, None, :]

    def inverse_transform(self, X):
        check_is_fitted(self, ["mean_", "scale_"])
        X = _check_signal(X)
        return X * self.scale_[:, None, :] + self.mean_[:, None, :]

    @property
    def params_(self) -> NormalizationParams:
        check_is_fitted(self, ["mean_", "scale_"])
        return NormalizationParams(self.mean_, self.scale_)


def _hours(T: int) -> np.ndarray:
    return np.datetime64("2000-01-01T00", "h") + np.arange(T) * np.timedelta64(1, "h")


class DischargeForecaster(BaseEstimator, RegressorMixin):
    """Graph network forecaster trained with the relevancy-weighted loss.

    ``X`` holds normalised windows of shape (S, n, W, C) and ``y`` normalised
    discharge targets of shape (S, n); a :class:`~rivergnn.dataset.SampleSet`
    may be passed as ``X`` instead (with ``y=None``) to avoid materialising
    windows. ``normalization`` supplies the statistics behind the relevancy
    score and the weighted NSE used by :meth:`score`.
    """

    def __init__(
        self,
        graph: RiverGraph | None = None,
        normalization: NormalizationParams | None = None,
        architecture: str = "GCNII",
        network_depth: int = 19,
        latent_space_dim: int = 128,
        adjacency_type: str = "binary",
        edge_direction: str = "bidirected",
        epochs: int = 100,
        batch_size: int = 64,
        learning_rate: float = 1e-4,
        regularisation_strength: float = 1e-5,
        holdout_fraction: float = 0.2,
        gcnii_alpha: float = 0.1,
        gcnii_lambda: float = 0.5,
        gat_heads: int = 1,
        random_state: int = 0,
    ):
        self.graph = graph
        self.normalization = normalization
        self.architecture = architecture
        self.network_depth = network_depth
        self.latent_space_dim = latent_space_dim
        self.adjacency_type = adjacency_type
        self.edge_direction = edge_direction
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.regularisation_strength = regularisation_strength
        self.holdout_fraction = holdout_fraction
        self.gcnii_alpha = gcnii_alpha
        self.gcnii_lambda = gcnii_lambda
        self.gat_heads = gat_heads
        self.random_state = random_state

    def _samples(self, X, y):
        if isinstance(X, (SampleSet, ArraySamples)):
            if y is not None:
                raise DomainError("pass targets inside the sample set, not as y")
            return X
        X = check_array(X, allow_nd=True, dtype=np.float64, ensure_all_finite=True)
        if y is None:
            y = np.zeros(X.shape[:2])
        y = check_array(y, dtype=np.float64, ensure_all_finite=True)
        return ArraySamples(X, y)

    def _check_ready(self):
        if self.graph is None:
            raise ConfigError("DischargeForecaster needs a graph")
        if self.normalization is None:
            raise ConfigError("DischargeForecaster needs normalization parameters")

    def model_config(self, W: int, C: int) -> ModelConfig:
        return ModelConfig(
            arch=self.architecture,
            N=self.network_depth,
            d=self.latent_space_dim,
            W=W,
            C=C,
            adjacency=self.adjacency_type,
            orientation=self.edge_direction,
            gcnii_alpha=self.gcnii_alpha,
            gcnii_lambda=self.gcnii_lambda,
            gat_heads=self.gat_heads,
        )

    def fit(self, X, y=None):
        self._check_ready()
        samples = self._samples(X, y)
        if len(samples) == 0:
            raise DomainError("empty training set")
        _, n, W, C = samples.windows(np.arange(1)).shape
        if n != self.graph.n:
            raise DomainError(f"windows have {n} gauges but the graph has {self.graph.n}")
        config = self.model_config(W, C)
        model = build_model(config, self.graph, substream(self.random_state, "init"))
        train_config = TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr=self.learning_rate,
            weight_decay=self.regularisation_strength,
            holdout_fraction=self.holdout_fraction,
            seed=self.random_state,
        )
        self.model_, self.history_ = train(model, samples, self.normalization, train_config)
        self.n_gauges_ = n
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        return predict(self.model_, self._samples(X, None))

    def score(self, X, y=None, sample_weight=None) -> float:
        """Summary weighted NSE on ``(X, y)``."""
        check_is_fitted(self, "model_")
        if sample_weight is not None:
            raise DomainError("sample weights come from the relevancy score")
        samples = self._samples(X, y)
        preds = predict(self.model_, samples)
        report = weighted_nse(preds, samples.targets(), samples.windows()[..., 0], self.normalization)
        return report.summary
