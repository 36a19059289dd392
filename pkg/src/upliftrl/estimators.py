"""Scikit-learn style wrappers around the policy trainer and baselines.

These estimators take flat arrays (features, response, logged action,
logging propensity), build the internal logged dataset, and expose the
usual fit/predict/get_params surface so pipelines and model-selection
tooling can drive them.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array

from .data import Dataset, split_dataset
from .errors import ValidationError
from .metrics import PolicyAssignment, sn_umg
from .policy import forward, greedy_actions, init_policy
from .trainer import TrainConfig, evaluate_split, train, train_sma


def _logged_arrays(X, y, action, propensity):
    X = check_array(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    action = np.asarray(action, dtype=np.int64).ravel()
    propensity = np.asarray(propensity, dtype=float).ravel()
    n = X.shape[0]
    if not (y.shape[0] == action.shape[0] == propensity.shape[0] == n):
        raise ValidationError("X, y, action and propensity must have equal lengths")
    return X, y, action, propensity


class UpliftPolicyGradient(BaseEstimator):
    """Policy learned by gradient ascent on logged uplift rewards.

    Parameters mirror the training configuration; ``n_buckets`` switches to
    probability-bucket training for single-action datasets (the policy's
    outputs then represent offer-probability buckets rather than actions).
    """

    def __init__(
        self,
        hidden_size: int = 512,
        num_epochs: int = 2000,
        batches_per_episode: int = 10,
        batch_size: int = 10_000,
        learning_rate: float = 0.1,
        patience: int = 1000,
        eval_every: int = 10,
        n_buckets: Optional[int] = None,
        split_fractions: tuple = (0.6, 0.2, 0.2),
        seed: int = 0,
    ):
        self.hidden_size = hidden_size
        self.num_epochs = num_epochs
        self.batches_per_episode = batches_per_episode
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.patience = patience
        self.eval_every = eval_every
        self.n_buckets = n_buckets
        self.split_fractions = split_fractions
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            num_epochs=self.num_epochs,
            batches_per_episode=self.batches_per_episode,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            patience=self.patience,
            eval_every=self.eval_every,
            seed=self.seed,
        )

    def fit(self, X, y, *, action, propensity, num_actions: Optional[int] = None):
        X, y, action, propensity = _logged_arrays(X, y, action, propensity)
        k = int(action.max(initial=0)) if num_actions is None else num_actions
        ds = Dataset(
            features=X, actions=action, propensities=propensity,
            responses=y[:, None], num_actions=k,
        )
        ds = split_dataset(ds, self.split_fractions, seed=self.seed)
        outputs = (self.n_buckets or k + 1) - 1
        net = init_policy(ds.feature_dim, outputs, h=self.hidden_size, seed=self.seed)
        result = train(net, ds, self._config(), n_buckets=self.n_buckets)
        self.net_, self.trace_ = result.best, result.trace
        self.validation_score_ = evaluate_split(
            self.net_, ds, "validation", self.n_buckets
        ).sn_umg
        self.num_actions_ = k
        return self

    def predict_proba(self, X) -> np.ndarray:
        """Policy output probabilities (over actions, or buckets)."""
        self._check_fitted()
        return forward(self.net_, check_array(X, dtype=float))

    def predict(self, X) -> np.ndarray:
        """Greedy action (or bucket) per row."""
        self._check_fitted()
        return greedy_actions(self.net_, check_array(X, dtype=float))

    def score(self, X, y, *, action, propensity) -> float:
        """Self-normalized uplift estimate of the greedy policy on held-out logs."""
        self._check_fitted()
        X, y, action, propensity = _logged_arrays(X, y, action, propensity)
        ds = Dataset(
            features=X, actions=action, propensities=propensity,
            responses=y[:, None], num_actions=self.num_actions_,
        )
        if self.n_buckets is None:
            assignment = PolicyAssignment(actions=greedy_actions(self.net_, X))
        else:
            probs = forward(self.net_, X)
            scores = probs @ ((np.arange(self.n_buckets) + 0.5) / self.n_buckets)
            assignment = PolicyAssignment(actions=(scores >= 0.5).astype(np.int64))
        return sn_umg(ds, assignment).sn_umg

    def _check_fitted(self):
        if not hasattr(self, "net_"):
            raise ValidationError("estimator is not fitted; call fit first")


class SeparateModelUplift(BaseEstimator):
    """Per-action response regressors; the policy is their argmax.

    ``learner`` is 'linear' or 'mlp'. Propensities are accepted for API
    symmetry but unused: the separate-model approach regresses observed
    responses directly.
    """

    def __init__(
        self,
        learner: str = "linear",
        split_fractions: tuple = (0.6, 0.2, 0.2),
        seed: int = 0,
    ):
        self.learner = learner
        self.split_fractions = split_fractions
        self.seed = seed

    def fit(self, X, y, *, action, propensity=None, num_actions: Optional[int] = None):
        if propensity is None:
            propensity = np.ones(np.asarray(y).shape[0])
        X, y, action, propensity = _logged_arrays(X, y, action, propensity)
        k = int(action.max(initial=0)) if num_actions is None else num_actions
        ds = Dataset(
            features=X, actions=action, propensities=propensity,
            responses=y[:, None], num_actions=k,
        )
        ds = split_dataset(ds, self.split_fractions, seed=self.seed)
        self.policy_ = train_sma(ds, TrainConfig(seed=self.seed), kind=self.learner)
        self.num_actions_ = k
        return self

    def predict_response(self, X) -> np.ndarray:
        """Predicted response per action arm, shape (n, K+1)."""
        self._check_fitted()
        return self.policy_.predictions(check_array(X, dtype=float))

    def predict(self, X) -> np.ndarray:
        """Argmax-response action per row (ties to the lowest index)."""
        self._check_fitted()
        return self.policy_.actions(check_array(X, dtype=float))

    def _check_fitted(self):
        if not hasattr(self, "policy_"):
            raise ValidationError("estimator is not fitted; call fit first")
