"""Policy-gradient training loop on logged data, plus separate-model baselines.

Each episode draws M batches uniformly with replacement from the training
split, samples actions from the current policy, scores every batch with the
self-normalized estimator (giving the batch value V_m and per-action control
baselines), and then applies one gradient-ascent step per batch using
advantage-style Q-values: importance-weighted response minus the action's
control baseline, plus the batch value centered on the cross-batch mean.

Samples whose logged action neither matches the sampled action nor is the
control arm contribute nothing to the update.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Dataset, LoggedSample
from .errors import DegenerateEvaluationError, ValidationError
from .metrics import PolicyAssignment, sn_umg
from .policy import (
    Gradient,
    PolicyNet,
    apply_update,
    forward,
    greedy_actions,
    sample_actions,
    weighted_grad_sum,
    with_normalization,
)
from .rng import substream


@dataclass(frozen=True)
class TrainConfig:
    num_epochs: int = 2000
    batches_per_episode: int = 10  # M
    batch_size: int = 10_000
    learning_rate: float = 0.1
    patience: int = 1000  # episodes without validation improvement
    eval_every: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.batches_per_episode < 2:
            raise ValidationError("batches_per_episode must be >= 2 (cross-batch mean)")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be > 0")
        if self.patience < 1:
            raise ValidationError("patience must be >= 1")
        if self.num_epochs < 1 or self.eval_every < 1:
            raise ValidationError("num_epochs and eval_every must be >= 1")


# Desk-scale overrides for laptop runs; estimator tolerances in the test
# suite account for the smaller batches.
DESK_SCALE = dict(batches_per_episode=5, batch_size=2000, eval_every=10)


@dataclass
class EpisodeStats:
    episode: int
    v_per_batch: np.ndarray  # (M,) batch values under sampled actions
    v_bar: float  # mean of v_per_batch
    baselines: np.ndarray  # (K+1,) cross-batch mean control baselines
    matched_fraction: float
    grad_norm: float
    validation_sn_umg: Optional[float] = None


def sample_batches(
    train_indices: np.ndarray, m: int, bs: int, rng: np.random.Generator
) -> np.ndarray:
    """M batches of bs indices, uniform with replacement, independent."""
    train_indices = np.asarray(train_indices)
    if train_indices.size == 0:
        raise ValidationError("training split is empty")
    return train_indices[rng.integers(0, train_indices.size, (m, bs))]


def reward(sample: LoggedSample, chosen: int) -> Optional[float]:
    """Importance-weighted per-sample reward; None when not contributing.

    Positive response weight when the logged action matches the chosen one;
    negative control response weight when a control-logged sample gets a
    real action proposed; all other combinations are excluded.
    """
    y = float(sample.responses[0])
    if sample.action == chosen:
        return y / sample.propensity
    if sample.action == 0 and chosen > 0:
        return -y / sample.propensity
    return None


def q_value(
    sample: LoggedSample,
    chosen: int,
    baselines: np.ndarray,
    v_m: float,
    v_bar: float,
) -> Optional[float]:
    """Advantage-style value: baseline-corrected reward plus centered batch value."""
    y = float(sample.responses[0])
    if sample.action == chosen:
        return (y - baselines[chosen]) / sample.propensity + (v_m - v_bar)
    if sample.action == 0 and chosen > 0:
        return (baselines[chosen] - y) / sample.propensity + (v_m - v_bar)
    return None


def _batch_q_values(
    logged: np.ndarray,
    props: np.ndarray,
    y: np.ndarray,
    chosen: np.ndarray,
    baselines: np.ndarray,
    v_m: float,
    v_bar: float,
):
    """Vectorized q_value over a batch: (contributing mask, q array)."""
    matched = logged == chosen
    mismatch = (logged == 0) & (chosen > 0)
    base = baselines[chosen]
    q = np.zeros_like(y)
    q[matched] = (y[matched] - base[matched]) / props[matched]
    q[mismatch] = (base[mismatch] - y[mismatch]) / props[mismatch]
    contributing = matched | mismatch
    q[contributing] += v_m - v_bar
    return contributing, q, matched


def _realize(chosen: np.ndarray, n_buckets: Optional[int], rng) -> np.ndarray:
    """Map policy outputs to dataset actions.

    Direct training: identity. Bucket training on a single-action dataset:
    bucket a offers the real action with probability (a + 0.5) / n.
    """
    if n_buckets is None:
        return chosen
    offer_prob = (chosen + 0.5) / n_buckets
    return (rng.random(chosen.shape[0]) < offer_prob).astype(np.int64)


def train_episode(
    net: PolicyNet,
    ds: Dataset,
    cfg: TrainConfig,
    rng_batch: np.random.Generator,
    rng_action: np.random.Generator,
    episode: int = 0,
    n_buckets: Optional[int] = None,
) -> tuple[PolicyNet, EpisodeStats]:
    """One outer-loop iteration; returns the updated net and its stats."""
    if net.input_dim != ds.feature_dim:
        raise ValidationError("net input dimension does not match the dataset")
    if n_buckets is None and net.num_outputs != ds.num_actions + 1:
        raise ValidationError("net output count does not match the dataset's K+1")
    if n_buckets is not None and ds.num_actions != 1:
        raise ValidationError("bucket training requires a single-action dataset")

    m, bs = cfg.batches_per_episode, cfg.batch_size
    batches = sample_batches(ds.indices("train"), m, bs, rng_batch)

    chosen_all = np.empty((m, bs), dtype=np.int64)
    realized_all = np.empty((m, bs), dtype=np.int64)
    v = np.empty(m)
    n_arms = ds.num_actions + 1
    per_batch_baselines = np.empty((m, n_arms))
    matched_total = 0
    for j in range(m):
        sub = ds.subset(batches[j])
        chosen, _ = sample_actions(net, sub.features, rng_action)
        realized = _realize(chosen, n_buckets, rng_action)
        try:
            rep = sn_umg(sub, PolicyAssignment(actions=realized))
        except DegenerateEvaluationError as exc:
            raise DegenerateEvaluationError(
                f"episode {episode}, batch {j}: {exc} "
                "(batch size too small for the logging mix)"
            ) from exc
        chosen_all[j] = chosen
        realized_all[j] = realized
        v[j] = rep.sn_umg
        per_batch_baselines[j] = rep.conditional_nature
        matched_total += rep.matched_count
    v_bar = float(v.mean())
    baselines = per_batch_baselines.mean(axis=0)

    total_update = Gradient(
        w1=np.zeros_like(net.w1), b1=np.zeros_like(net.b1),
        w2=np.zeros_like(net.w2), b2=np.zeros_like(net.b2),
    )
    for j in range(m):
        idx = batches[j]
        contributing, q, _ = _batch_q_values(
            ds.actions[idx], ds.propensities[idx], ds.responses[idx, 0],
            realized_all[j], baselines, float(v[j]), v_bar,
        )
        if not contributing.any():
            continue
        grad = weighted_grad_sum(
            net,
            ds.features[idx][contributing],
            chosen_all[j][contributing],
            q[contributing],
        )
        net = apply_update(net, grad, cfg.learning_rate)
        total_update.w1 += grad.w1
        total_update.b1 += grad.b1
        total_update.w2 += grad.w2
        total_update.b2 += grad.b2

    stats = EpisodeStats(
        episode=episode,
        v_per_batch=v,
        v_bar=v_bar,
        baselines=baselines,
        matched_fraction=matched_total / (m * bs),
        grad_norm=total_update.norm(),
    )
    return net, stats


def greedy_assignment(
    net: PolicyNet, ds: Dataset, n_buckets: Optional[int] = None
) -> PolicyAssignment:
    """Deterministic evaluation assignment for a snapshot.

    Direct policies act by argmax. Bucket policies offer the real action
    when their expected offer probability reaches 0.5.
    """
    probs = forward(net, ds.features)
    if n_buckets is None:
        return PolicyAssignment(actions=np.argmax(probs, axis=1), probabilities=probs)
    scores = probs @ ((np.arange(n_buckets) + 0.5) / n_buckets)
    return PolicyAssignment(actions=(scores >= 0.5).astype(np.int64), probabilities=probs)


def evaluate_split(
    net: PolicyNet, ds: Dataset, split_name: str, n_buckets: Optional[int] = None
):
    """Self-normalized score of the greedy policy on one split."""
    sub = ds.subset(ds.indices(split_name))
    return sn_umg(sub, greedy_assignment(net, sub, n_buckets))


@dataclass
class TrainResult:
    best: PolicyNet  # best-validation snapshot
    last: PolicyNet  # parameters after the final episode
    trace: list[EpisodeStats]


def train(
    net: PolicyNet,
    ds: Dataset,
    cfg: TrainConfig,
    n_buckets: Optional[int] = None,
) -> TrainResult:
    """Run episodes with early stopping on the validation split.

    Returns the best-validation snapshot, the final parameters, and the
    per-episode trace. The net's feature standardization is fit on the
    training split first.
    """
    net = with_normalization(net, ds.features[ds.indices("train")])
    rng_batch = substream(cfg.seed, "batch")
    rng_action = substream(cfg.seed, "action")

    best_net = net
    best_score = -np.inf
    last_improvement = 0
    trace: list[EpisodeStats] = []
    for episode in range(1, cfg.num_epochs + 1):
        net, stats = train_episode(
            net, ds, cfg, rng_batch, rng_action, episode=episode, n_buckets=n_buckets
        )
        if episode % cfg.eval_every == 0:
            score = evaluate_split(net, ds, "validation", n_buckets).sn_umg
            stats.validation_sn_umg = score
            if score > best_score:
                best_score = score
                best_net = net
                last_improvement = episode
        trace.append(stats)
        if episode - last_improvement >= cfg.patience:
            break
    if not np.isfinite(best_score):
        best_net = net
    return TrainResult(best=best_net, last=net, trace=trace)


def write_trace_csv(trace: list[EpisodeStats], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["episode", "v_bar", "validation_sn_umg", "grad_norm", "matched_fraction"]
        )
        for s in trace:
            writer.writerow([
                s.episode,
                repr(s.v_bar),
                "" if s.validation_sn_umg is None else repr(s.validation_sn_umg),
                repr(s.grad_norm),
                repr(s.matched_fraction),
            ])


# ---------------------------------------------------------------------------
# Separate-model baselines: one response regressor per action arm, policy
# is the argmax of predicted responses (ties to the lowest action index).
# ---------------------------------------------------------------------------


@dataclass
class SMAPolicy:
    kind: str
    models: list  # per-action regressors, index = action
    norm_mean: np.ndarray
    norm_std: np.ndarray

    def predictions(self, X: np.ndarray) -> np.ndarray:
        Xn = (np.asarray(X, dtype=float) - self.norm_mean) / self.norm_std
        return np.column_stack([m.predict(Xn) for m in self.models])

    def actions(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predictions(X), axis=1)


class _LinearRegressorGD:
    """Least-squares linear model fit by full-batch gradient descent."""

    def __init__(self, lr: float = 0.1, iters: int = 500):
        self.lr = lr
        self.iters = iters
        self.w = None
        self.b = 0.0

    def fit(self, X, y):
        n, d = X.shape
        self.w = np.zeros(d)
        self.b = float(y.mean())
        lr = self.lr
        prev = np.inf
        for _ in range(self.iters):
            resid = X @ self.w + self.b - y
            loss = float(resid @ resid) / n
            if loss > prev:
                lr *= 0.5
            prev = loss
            self.w -= lr * 2.0 / n * (X.T @ resid)
            self.b -= lr * 2.0 / n * float(resid.sum())
        return self

    def predict(self, X):
        return X @ self.w + self.b


class _MLPRegressorGD:
    """One-hidden-layer rectifier network with a linear output head.

    Same body shape as the policy network; trained on squared loss with
    minibatch gradient descent.
    """

    def __init__(self, hidden: int = 64, lr: float = 0.01, epochs: int = 30,
                 batch_size: int = 256, seed: int = 0):
        self.hidden = hidden
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    def fit(self, X, y):
        n, d = X.shape
        rng = substream(self.seed, "sma-mlp")
        lim1 = np.sqrt(6.0 / (d + self.hidden))
        lim2 = np.sqrt(6.0 / (self.hidden + 1))
        self.w1 = rng.uniform(-lim1, lim1, (d, self.hidden))
        self.b1 = np.zeros(self.hidden)
        self.w2 = rng.uniform(-lim2, lim2, self.hidden)
        self.b2 = float(y.mean())
        for _ in range(self.epochs):
            order = rng.permutation(n)
            for lo in range(0, n, self.batch_size):
                idx = order[lo:lo + self.batch_size]
                xb, yb = X[idx], y[idx]
                z1 = xb @ self.w1 + self.b1
                h = np.maximum(z1, 0.0)
                pred = h @ self.w2 + self.b2
                d_out = 2.0 * (pred - yb) / idx.size
                g_w2 = h.T @ d_out
                g_b2 = float(d_out.sum())
                d_h = np.outer(d_out, self.w2) * (z1 > 0.0)
                self.w1 -= self.lr * (xb.T @ d_h)
                self.b1 -= self.lr * d_h.sum(axis=0)
                self.w2 -= self.lr * g_w2
                self.b2 -= self.lr * g_b2
        return self

    def predict(self, X):
        h = np.maximum(X @ self.w1 + self.b1, 0.0)
        return h @ self.w2 + self.b2


def train_sma(ds: Dataset, cfg: TrainConfig, kind: str = "linear") -> SMAPolicy:
    """Fit one regressor per action on that arm's training samples."""
    if kind not in ("linear", "mlp"):
        raise ValidationError(f"unknown separate-model learner {kind!r}")
    if ds.num_responses != 1:
        raise ValidationError("separate models need a single response")
    train_idx = ds.indices("train")
    X = ds.features[train_idx]
    y = ds.responses[train_idx, 0]
    a = ds.actions[train_idx]
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0.0] = 1.0
    Xn = (X - mean) / std

    models = []
    for action in range(ds.num_actions + 1):
        mask = a == action
        if not mask.any():
            raise ValidationError(f"no training samples logged with action {action}")
        if kind == "linear":
            model = _LinearRegressorGD()
        else:
            model = _MLPRegressorGD(seed=cfg.seed + action)
        models.append(model.fit(Xn[mask], y[mask]))
    return SMAPolicy(kind=kind, models=models, norm_mean=mean, norm_std=std)
