"""Unbiased offline uplift estimators and Qini evaluation.

The headline quantity is the difference between an importance-weighted
average response under the candidate policy's chosen actions (treated
term) and an importance-weighted average control response (control term).
The plain estimator divides both sums by N; the self-normalized variant
divides each sum by the realized sum of its importance weights, trading
exact unbiasedness for lower variance.

Per-action conditional control averages are also exposed: the trainer
uses them as action-dependent baselines.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Dataset, LoggedSample
from .errors import (
    DegenerateEvaluationError,
    UnsupportedConfigurationError,
    ValidationError,
)
from .rng import substream


@dataclass(frozen=True)
class PolicyAssignment:
    """A candidate policy realized on a dataset: one action per sample.

    ``probabilities`` (N x (K+1), rows summing to 1) is only needed for
    Qini scoring via :func:`policy_to_scores`.
    """

    actions: np.ndarray
    probabilities: Optional[np.ndarray] = None

    def __post_init__(self):
        a = np.asarray(self.actions, dtype=np.int64)
        if a.ndim != 1:
            raise ValidationError("assignment actions must be a vector")
        if a.min(initial=0) < 0:
            raise ValidationError("assignment actions must be nonnegative")
        object.__setattr__(self, "actions", a)
        if self.probabilities is not None:
            pr = np.asarray(self.probabilities, dtype=float)
            if pr.ndim != 2 or pr.shape[0] != a.shape[0]:
                raise ValidationError("probabilities must be an N x (K+1) matrix")
            if pr.min() < 0 or np.abs(pr.sum(axis=1) - 1.0).max() > 1e-9:
                raise ValidationError("probability rows must be nonnegative and sum to 1")
            object.__setattr__(self, "probabilities", pr)


@dataclass(frozen=True)
class EvalReport:
    """Evaluation of one policy on one dataset.

    ``umg`` is exactly ``treated_term - control_term``; ``conditional_nature``
    holds the per-action control averages for the estimator that produced
    the report. Bootstrap dispersion fields are filled on request.
    """

    umg: float
    sn_umg: float
    treated_term: float
    control_term: float
    conditional_nature: np.ndarray  # (K+1,)
    matched_count: int
    umg_std: Optional[float] = None
    sn_umg_std: Optional[float] = None

    def to_json(self) -> str:
        doc = {
            "umg": self.umg,
            "sn_umg": self.sn_umg,
            "treated_term": self.treated_term,
            "control_term": self.control_term,
            "conditional_nature": np.asarray(self.conditional_nature).tolist(),
            "matched_count": int(self.matched_count),
            "umg_std": self.umg_std,
            "sn_umg_std": self.sn_umg_std,
        }
        return json.dumps(doc, indent=2)


@dataclass(frozen=True)
class QiniResult:
    """Incremental-gain curve over targeted fractions plus its coefficient."""

    curve: np.ndarray  # (n+1, 2): (fraction treated-first, incremental gain)
    coefficient: float

    def to_json(self) -> str:
        return json.dumps(
            {"coefficient": self.coefficient, "curve": self.curve.tolist()}, indent=2
        )

    def write_curve_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["fraction", "gain"])
            writer.writerows([repr(float(f)), repr(float(g))] for f, g in self.curve)


def z_treated(sample: LoggedSample, chosen: int) -> float:
    """Importance-weighted response if the logged action matches ``chosen``."""
    if sample.action != chosen:
        return 0.0
    return float(sample.responses[0]) / sample.propensity


def z_control(sample: LoggedSample) -> float:
    """Importance-weighted response if the logged action is the control arm."""
    if sample.action != 0:
        return 0.0
    return float(sample.responses[0]) / sample.propensity


def _check_inputs(ds: Dataset, pi: PolicyAssignment) -> np.ndarray:
    if ds.num_responses != 1:
        raise UnsupportedConfigurationError(
            "estimators need a single response; use combine_responses first"
        )
    if pi.actions.shape[0] != len(ds):
        raise ValidationError(
            f"assignment length {pi.actions.shape[0]} != dataset size {len(ds)}"
        )
    if pi.actions.max(initial=0) > ds.num_actions:
        raise ValidationError("assignment uses an action above the dataset's K")
    return ds.responses[:, 0]


def _weights(ds: Dataset, cap: Optional[float]) -> np.ndarray:
    w = 1.0 / ds.propensities
    if cap is not None:
        # Diagnostics only: capping breaks unbiasedness.
        w = np.minimum(w, cap)
    return w


def umg(ds: Dataset, pi: PolicyAssignment, weight_cap: Optional[float] = None) -> EvalReport:
    """Plain (unbiased) estimator: 1/N-normalized treated and control sums."""
    y = _check_inputs(ds, pi)
    n = len(ds)
    w = _weights(ds, weight_cap)
    matched = pi.actions == ds.actions
    is_control = ds.actions == 0
    zt = np.where(matched, y * w, 0.0)
    zc = np.where(is_control, y * w, 0.0)
    treated_term = float(zt.sum() / n)
    control_term = float(zc.sum() / n)
    conditional = np.array([
        float(zc[pi.actions == a].mean()) if (pi.actions == a).any() else 0.0
        for a in range(ds.num_actions + 1)
    ])
    sn = _sn_terms(y, w, matched, is_control, require=False)
    return EvalReport(
        umg=treated_term - control_term,
        sn_umg=sn,
        treated_term=treated_term,
        control_term=control_term,
        conditional_nature=conditional,
        matched_count=int(matched.sum()),
    )


def _sn_terms(y, w, matched, is_control, require: bool):
    den_t = float(w[matched].sum())
    den_c = float(w[is_control].sum())
    if den_t == 0.0 or den_c == 0.0:
        if require:
            which = "treated" if den_t == 0.0 else "control"
            raise DegenerateEvaluationError(
                f"self-normalized {which} term has no contributing samples"
            )
        return float("nan")
    return float((y[matched] * w[matched]).sum() / den_t
                 - (y[is_control] * w[is_control]).sum() / den_c)


def sn_umg(ds: Dataset, pi: PolicyAssignment, weight_cap: Optional[float] = None) -> EvalReport:
    """Self-normalized estimator: each sum divided by its realized weight mass.

    ``conditional_nature`` here is the self-normalized control average within
    each group of samples sharing the policy's chosen action (0 for groups
    with no control sample).
    """
    y = _check_inputs(ds, pi)
    n = len(ds)
    w = _weights(ds, weight_cap)
    matched = pi.actions == ds.actions
    is_control = ds.actions == 0
    sn = _sn_terms(y, w, matched, is_control, require=True)
    zt = np.where(matched, y * w, 0.0)
    zc = np.where(is_control, y * w, 0.0)
    conditional = np.empty(ds.num_actions + 1)
    for a in range(ds.num_actions + 1):
        group = pi.actions == a
        den = float(w[group & is_control].sum())
        conditional[a] = float(zc[group].sum() / den) if den > 0 else 0.0
    return EvalReport(
        umg=float(zt.sum() / n) - float(zc.sum() / n),
        sn_umg=sn,
        treated_term=float(zt.sum() / n),
        control_term=float(zc.sum() / n),
        conditional_nature=conditional,
        matched_count=int(matched.sum()),
    )


def bootstrap_dispersion(
    ds: Dataset, pi: PolicyAssignment, n_boot: int = 200, seed: int = 0
) -> tuple[float, float]:
    """Bootstrap standard deviations of (umg, sn_umg) under resampling."""
    rng = substream(seed, "bootstrap")
    n = len(ds)
    umgs, sns = np.empty(n_boot), np.empty(n_boot)
    for b in range(n_boot):
        idx = rng.integers(0, n, n)
        rep = umg(ds.subset(idx), PolicyAssignment(actions=pi.actions[idx]))
        umgs[b] = rep.umg
        sns[b] = rep.sn_umg
    return float(np.std(umgs, ddof=1)), float(np.nanstd(sns, ddof=1))


def qini_curve(ds: Dataset, scores: np.ndarray) -> QiniResult:
    """Incremental-gain curve for a single-action, binary-response dataset.

    Samples are ranked by descending score (ties broken by original index).
    After targeting the top t samples the gain is the treated positives in
    the prefix minus the control positives scaled to the treated count.
    The coefficient is the area between the curve and the straight line to
    its endpoint, divided by N.
    """
    if ds.num_actions != 1:
        raise UnsupportedConfigurationError("qini_curve requires exactly one action (K=1)")
    if ds.num_responses != 1:
        raise UnsupportedConfigurationError("qini_curve requires a single response")
    y = ds.responses[:, 0]
    if not np.isin(y, (0.0, 1.0)).all():
        raise UnsupportedConfigurationError("qini_curve requires a binary 0/1 response")
    scores = np.asarray(scores, dtype=float)
    if scores.shape != (len(ds),):
        raise ValidationError("scores length must equal dataset size")

    order = np.argsort(-scores, kind="stable")
    treated = (ds.actions[order] == 1).astype(float)
    yo = y[order]
    n_t = np.cumsum(treated)
    n_c = np.cumsum(1.0 - treated)
    y_t = np.cumsum(yo * treated)
    y_c = np.cumsum(yo * (1.0 - treated))
    # Before the first control sample the correction ratio is undefined;
    # carry gain 0 there.
    correction = np.divide(y_c * n_t, n_c, out=np.zeros_like(n_c), where=n_c > 0)
    gains = np.where(n_c > 0, y_t - correction, 0.0)

    n = len(ds)
    fracs = np.arange(n + 1) / n
    curve = np.column_stack([fracs, np.concatenate([[0.0], gains])])
    area = float(np.trapezoid(curve[:, 1], curve[:, 0]))
    random_area = float(gains[-1]) / 2.0
    return QiniResult(curve=curve, coefficient=(area - random_area) / n)


def policy_to_scores(pi: PolicyAssignment, n_buckets: int) -> np.ndarray:
    """Expected offer probability when actions are probability buckets.

    Bucket a stands for offering the single real action with a probability
    in [a/n, (a+1)/n); its midpoint (a + 0.5)/n weights the policy's bucket
    probabilities.
    """
    if pi.probabilities is None:
        raise ValidationError("policy_to_scores needs assignment probabilities")
    if pi.probabilities.shape[1] != n_buckets:
        raise ValidationError(
            f"expected {n_buckets} bucket probabilities, got {pi.probabilities.shape[1]}"
        )
    midpoints = (np.arange(n_buckets) + 0.5) / n_buckets
    return pi.probabilities @ midpoints
