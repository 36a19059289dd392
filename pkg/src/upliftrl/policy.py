"""Softmax policy network: one hidden rectifier layer, exact gradients.

The network maps a standardized feature vector through ``w1``/``b1``, a
rectifier, then ``w2``/``b2`` and a softmax over K+1 actions. Gradients of
log-probabilities are computed by hand (no autodiff dependency) and are
verified against finite differences in the test suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import FormatError, IOFailure, NumericalError, ValidationError
from .rng import substream

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class PolicyNet:
    """Parameters of the policy, plus the feature standardization."""

    w1: np.ndarray  # (D, H)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (H, K+1)
    b2: np.ndarray  # (K+1,)
    norm_mean: np.ndarray  # (D,)
    norm_std: np.ndarray  # (D,), strictly positive

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.w1.shape[1]

    @property
    def num_outputs(self) -> int:
        return self.w2.shape[1]


@dataclass
class Gradient:
    """Parameter-shaped gradient container."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate(
            [self.w1.ravel(), self.b1.ravel(), self.w2.ravel(), self.b2.ravel()]
        )

    def norm(self) -> float:
        return float(np.linalg.norm(self.flat()))


def init_policy(d: int, k: int, h: int = 512, seed: int = 0) -> PolicyNet:
    """Glorot-uniform weights, zero biases, identity standardization."""
    if d < 1 or h < 1 or k < 1:
        raise ValidationError("need d >= 1, h >= 1, k >= 1")
    rng = substream(seed, "policy-init")
    lim1 = np.sqrt(6.0 / (d + h))
    lim2 = np.sqrt(6.0 / (h + k + 1))
    return PolicyNet(
        w1=rng.uniform(-lim1, lim1, (d, h)),
        b1=np.zeros(h),
        w2=rng.uniform(-lim2, lim2, (h, k + 1)),
        b2=np.zeros(k + 1),
        norm_mean=np.zeros(d),
        norm_std=np.ones(d),
    )


def with_normalization(net: PolicyNet, features: np.ndarray) -> PolicyNet:
    """Return a copy standardizing by the given (training) features.

    Zero-variance features get std 1 so they pass through centered.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise ValidationError("normalization features must be (N, D)")
    std = X.std(axis=0)
    std[std == 0.0] = 1.0
    return replace(net, norm_mean=X.mean(axis=0), norm_std=std)


def _as_batch(net: PolicyNet, x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != net.input_dim:
        raise ValidationError(f"expected {net.input_dim} features, got {x.shape[1]}")
    return x, single


def _forward_parts(net: PolicyNet, xb: np.ndarray):
    xn = (xb - net.norm_mean) / net.norm_std
    z1 = xn @ net.w1 + net.b1
    h = np.maximum(z1, 0.0)
    logits = h @ net.w2 + net.b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    return xn, z1, h, probs


def forward(net: PolicyNet, x: np.ndarray) -> np.ndarray:
    """Action probabilities for one feature vector or a batch."""
    xb, single = _as_batch(net, x)
    probs = _forward_parts(net, xb)[3]
    if not np.isfinite(probs).all():
        raise NumericalError("non-finite policy output (exploded parameters?)")
    return probs[0] if single else probs


def sample_action(net: PolicyNet, x: np.ndarray, rng: np.random.Generator):
    """Draw an action from the policy; returns (action, its probability)."""
    probs = forward(net, x)
    a = int((probs.cumsum() < rng.random()).sum())
    return a, float(probs[a])


def sample_actions(net: PolicyNet, x: np.ndarray, rng: np.random.Generator):
    """Batch version of :func:`sample_action`: (actions, probabilities)."""
    probs = forward(net, np.atleast_2d(x))
    u = rng.random(probs.shape[0])
    a = (probs.cumsum(axis=1) < u[:, None]).sum(axis=1)
    # Guard against cumsum rounding pushing past the last index.
    a = np.minimum(a, probs.shape[1] - 1)
    return a, probs[np.arange(probs.shape[0]), a]


def greedy_actions(net: PolicyNet, x: np.ndarray) -> np.ndarray:
    """Argmax actions; ties resolve to the lowest index."""
    return np.argmax(forward(net, np.atleast_2d(x)), axis=1)


def log_prob_grad(net: PolicyNet, x: np.ndarray, a: int) -> Gradient:
    """Exact gradient of log pi(a | x) with respect to every parameter."""
    if not 0 <= a < net.num_outputs:
        raise ValidationError(f"action {a} out of [0, {net.num_outputs - 1}]")
    xb, _ = _as_batch(net, x)
    xn, z1, h, probs = _forward_parts(net, xb)
    d_logits = -probs
    d_logits[0, a] += 1.0
    return _backward(net, xn, z1, h, d_logits)


def weighted_grad_sum(
    net: PolicyNet, x: np.ndarray, actions: np.ndarray, coeffs: np.ndarray
) -> Gradient:
    """Sum_i coeffs[i] * grad log pi(actions[i] | x[i]), batched."""
    xb, _ = _as_batch(net, np.atleast_2d(x))
    xn, z1, h, probs = _forward_parts(net, xb)
    d_logits = -probs * coeffs[:, None]
    d_logits[np.arange(xb.shape[0]), actions] += coeffs
    return _backward(net, xn, z1, h, d_logits)


def _backward(net, xn, z1, h, d_logits) -> Gradient:
    g_w2 = h.T @ d_logits
    g_b2 = d_logits.sum(axis=0)
    d_h = d_logits @ net.w2.T
    d_z1 = d_h * (z1 > 0.0)
    return Gradient(w1=xn.T @ d_z1, b1=d_z1.sum(axis=0), w2=g_w2, b2=g_b2)


def apply_update(net: PolicyNet, grad: Gradient, step: float) -> PolicyNet:
    """Gradient-ascent step; raises on non-finite parameters."""
    new = replace(
        net,
        w1=net.w1 + step * grad.w1,
        b1=net.b1 + step * grad.b1,
        w2=net.w2 + step * grad.w2,
        b2=net.b2 + step * grad.b2,
    )
    for arr in (new.w1, new.b1, new.w2, new.b2):
        if not np.isfinite(arr).all():
            raise NumericalError("non-finite parameters after update")
    return new


def save_policy(net: PolicyNet, path) -> None:
    """Serialize to JSON; float lists round-trip at full precision."""
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "input_dim": net.input_dim,
        "hidden_size": net.hidden_size,
        "num_outputs": net.num_outputs,
        "normalization": {
            "mean": net.norm_mean.tolist(),
            "std": net.norm_std.tolist(),
        },
        "w1": net.w1.tolist(),
        "b1": net.b1.tolist(),
        "w2": net.w2.tolist(),
        "b2": net.b2.tolist(),
    }
    try:
        Path(path).write_text(json.dumps(doc), encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def load_policy(path) -> PolicyNet:
    path = Path(path)
    if not path.exists():
        raise IOFailure(f"no such file: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed model file {path}: {exc}") from exc
    version = doc.get("version")
    if version != MODEL_FORMAT_VERSION:
        raise FormatError(
            f"unsupported model format version {version!r} (expected {MODEL_FORMAT_VERSION})"
        )
    try:
        net = PolicyNet(
            w1=np.asarray(doc["w1"], dtype=float),
            b1=np.asarray(doc["b1"], dtype=float),
            w2=np.asarray(doc["w2"], dtype=float),
            b2=np.asarray(doc["b2"], dtype=float),
            norm_mean=np.asarray(doc["normalization"]["mean"], dtype=float),
            norm_std=np.asarray(doc["normalization"]["std"], dtype=float),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed model file {path}: missing/bad field {exc}") from exc
    d, h, k1 = doc.get("input_dim"), doc.get("hidden_size"), doc.get("num_outputs")
    if (net.w1.shape != (d, h) or net.b1.shape != (h,)
            or net.w2.shape != (h, k1) or net.b2.shape != (k1,)
            or net.norm_mean.shape != (d,) or net.norm_std.shape != (d,)):
        raise FormatError(f"malformed model file {path}: inconsistent shapes")
    if (net.norm_std <= 0).any():
        raise FormatError(f"malformed model file {path}: field normalization.std")
    return net
