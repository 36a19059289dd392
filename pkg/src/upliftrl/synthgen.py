"""Synthetic benchmark with known nature and uplift surfaces.

Responses are generated from an additive model: a nature surface common to
all arms (scaled by 5), a per-action uplift surface (zero for the control
arm), and Gaussian noise. Every surface is a sum of 50 exponential-decay
bumps; the surface parameters double as an oracle for the true uplift of
any (features, action) pair, which acceptance tests compare estimators
against.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is optional
    numba = None

from .data import Dataset
from .errors import FormatError, IOFailure, ValidationError
from .rng import substream

SURFACE_TERMS = 50
FEATURE_DIM = 50
NATURE_SCALE = 5.0

A_HIGH, B_HIGH, C_HIGH = 10.0, 0.1, 5.0


@dataclass(frozen=True)
class SurfaceParams:
    """Parameters of one bump-sum surface: amplitudes, decays, centers."""

    a: np.ndarray  # (50,) amplitudes in [0, 10]
    b: np.ndarray  # (50, 50) decay rates in [0, 0.1]
    c: np.ndarray  # (50, 50) centers in [0, 5]

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        c = np.asarray(self.c, dtype=float)
        shape = (SURFACE_TERMS, FEATURE_DIM)
        if a.shape != (SURFACE_TERMS,) or b.shape != shape or c.shape != shape:
            raise ValidationError("surface parameter shapes must be (50,), (50,50), (50,50)")
        for arr, hi, name in ((a, A_HIGH, "a"), (b, B_HIGH, "b"), (c, C_HIGH, "c")):
            if arr.min() < 0 or arr.max() > hi:
                raise ValidationError(f"surface parameter {name} outside [0, {hi}]")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)


@dataclass(frozen=True)
class GeneratorSpec:
    """Everything needed to generate the benchmark and query its oracle."""

    nature: SurfaceParams
    uplift_per_action: tuple[SurfaceParams, ...]  # actions 1..K
    noise_sigma: float = 0.8
    num_actions: int = 4
    feature_dim: int = FEATURE_DIM
    feature_low: float = 0.0
    feature_high: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be >= 0")
        if len(self.uplift_per_action) != self.num_actions:
            raise ValidationError(
                f"need {self.num_actions} uplift surfaces, got {len(self.uplift_per_action)}"
            )
        object.__setattr__(self, "uplift_per_action", tuple(self.uplift_per_action))


def _draw_surface(rng: np.random.Generator) -> SurfaceParams:
    # Fixed draw order (a, then b row-major, then c row-major) pins the
    # benchmark to the seed.
    return SurfaceParams(
        a=rng.uniform(0.0, A_HIGH, SURFACE_TERMS),
        b=rng.uniform(0.0, B_HIGH, (SURFACE_TERMS, FEATURE_DIM)),
        c=rng.uniform(0.0, C_HIGH, (SURFACE_TERMS, FEATURE_DIM)),
    )


def make_spec(seed: int, num_actions: int = 4, noise_sigma: float = 0.8) -> GeneratorSpec:
    """Draw surface parameters for the nature arm, then actions 1..K."""
    rng = substream(seed, "surfaces")
    nature = _draw_surface(rng)
    uplifts = tuple(_draw_surface(rng) for _ in range(num_actions))
    return GeneratorSpec(
        nature=nature,
        uplift_per_action=uplifts,
        noise_sigma=noise_sigma,
        num_actions=num_actions,
        seed=seed,
    )


if numba is not None:

    @numba.njit(parallel=True, cache=True)
    def _surface_kernel(x, a, b, c):  # pragma: no cover - exercised via eval_surface
        n = x.shape[0]
        out = np.empty(n)
        for s in numba.prange(n):
            total = 0.0
            for i in range(a.shape[0]):
                expo = 0.0
                for j in range(x.shape[1]):
                    expo += b[i, j] * abs(x[s, j] - c[i, j])
                total += a[i] * np.exp(-expo)
            out[s] = total
        return out

else:
    _surface_kernel = None


def eval_surface(p: SurfaceParams, x: np.ndarray) -> float | np.ndarray:
    """Evaluate the bump-sum surface at one point or a batch of points.

    Accepts a (50,) vector or an (n, 50) matrix; returns a scalar or (n,).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != FEATURE_DIM:
        raise ValidationError(f"expected {FEATURE_DIM} features, got {x.shape[1]}")
    # exponent[n, i] = sum_j b[i, j] * |x[n, j] - c[i, j]|
    if _surface_kernel is not None and x.shape[0] > 64:
        vals = _surface_kernel(
            np.ascontiguousarray(x), p.a, np.ascontiguousarray(p.b),
            np.ascontiguousarray(p.c),
        )
    else:
        # Loop over bump terms to keep temporaries at (n, 50).
        exponent = np.empty((x.shape[0], SURFACE_TERMS))
        for i in range(SURFACE_TERMS):
            exponent[:, i] = np.abs(x - p.c[i]) @ p.b[i]
        vals = np.exp(-exponent) @ p.a
    return float(vals[0]) if single else vals


def true_uplift(spec: GeneratorSpec, x: np.ndarray, a: int) -> float | np.ndarray:
    """Oracle uplift for action ``a``; identically 0 for the control arm."""
    if not 0 <= a <= spec.num_actions:
        raise ValidationError(f"action {a} out of [0, {spec.num_actions}]")
    if a == 0:
        x = np.asarray(x, dtype=float)
        return 0.0 if x.ndim == 1 else np.zeros(x.shape[0])
    return eval_surface(spec.uplift_per_action[a - 1], x)


def true_response(spec: GeneratorSpec, x: np.ndarray, a: int, noise: float | np.ndarray = 0.0):
    """Oracle response: scaled nature surface + action uplift + noise."""
    if not 0 <= a <= spec.num_actions:
        raise ValidationError(f"action {a} out of [0, {spec.num_actions}]")
    return NATURE_SCALE * eval_surface(spec.nature, x) + true_uplift(spec, x, a) + noise


def uplift_matrix(spec: GeneratorSpec, x: np.ndarray) -> np.ndarray:
    """True uplift of every action for a batch of points: (n, K+1)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    cols = [np.zeros(x.shape[0])]
    cols += [eval_surface(s, x) for s in spec.uplift_per_action]
    return np.column_stack(cols)


def oracle_actions(spec: GeneratorSpec, x: np.ndarray) -> np.ndarray:
    """Argmax-uplift action per point, ties to the lowest index."""
    return np.argmax(uplift_matrix(spec, x), axis=1)


def oracle_optimal_value(spec: GeneratorSpec, n_mc: int = 100_000, seed: int = 0) -> float:
    """Monte-Carlo estimate of the best achievable expected uplift."""
    rng = substream(seed, "oracle-mc")
    x = rng.uniform(spec.feature_low, spec.feature_high, (n_mc, spec.feature_dim))
    return float(uplift_matrix(spec, x).max(axis=1).mean())


def logging_uniform(x: np.ndarray, k: int, rng: np.random.Generator):
    """Uniform logging over {0..K}: every arm has propensity 1/(K+1)."""
    if k < 0:
        raise ValidationError("action count must be >= 0")
    a = int(rng.integers(0, k + 1))
    return a, 1.0 / (k + 1)


def logging_proportional(x: np.ndarray, rng: np.random.Generator):
    """Feature-proportional logging over actions 0..4.

    Action a is drawn with probability x[a] / sum(x[:5]); the first five
    feature coordinates map one-to-one to actions 0..4.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 5:
        raise ValidationError("proportional logging needs at least 5 features")
    head = x[:5]
    if (head < 0).any():
        raise ValidationError("proportional logging needs nonnegative leading features")
    total = head.sum()
    if total <= 0:
        raise ValidationError("degenerate input: first five features are all zero")
    probs = head / total
    a = int(rng.choice(5, p=probs))
    return a, float(probs[a])


def generate_dataset(
    spec: GeneratorSpec,
    n_total: int,
    logging: str = "uniform",
    seed: int | None = None,
) -> tuple[Dataset, GeneratorSpec]:
    """Draw a logged dataset of ``n_total`` samples plus its oracle spec.

    Features are uniform over the feature cube, actions follow the chosen
    logging policy ('uniform' or 'proportional'), responses come from the
    oracle with fresh Gaussian noise. Proportional logging requires K = 4.
    """
    if n_total < 1:
        raise ValidationError("sample count must be >= 1")
    if logging not in ("uniform", "proportional"):
        raise ValidationError(f"unknown logging policy {logging!r}")
    if logging == "proportional" and spec.num_actions != 4:
        raise ValidationError("proportional logging is defined for K = 4")
    seed = spec.seed if seed is None else seed
    k = spec.num_actions

    rng_x = substream(seed, "gen")
    rng_a = substream(seed, "logging")
    rng_eps = substream(seed, "noise")

    X = rng_x.uniform(spec.feature_low, spec.feature_high, (n_total, spec.feature_dim))
    if logging == "uniform":
        a = rng_a.integers(0, k + 1, n_total)
        p = np.full(n_total, 1.0 / (k + 1))
    else:
        head = X[:, :5]
        probs = head / head.sum(axis=1, keepdims=True)
        u = rng_a.random(n_total)
        a = (probs.cumsum(axis=1) < u[:, None]).sum(axis=1)
        p = probs[np.arange(n_total), a]

    noise = rng_eps.normal(0.0, spec.noise_sigma, n_total)
    lifts = uplift_matrix(spec, X)[np.arange(n_total), a]
    y = NATURE_SCALE * eval_surface(spec.nature, X) + lifts + noise
    ds = Dataset(
        features=X, actions=a, propensities=p, responses=y[:, None], num_actions=k
    )
    return ds, spec


def spec_to_json(spec: GeneratorSpec) -> str:
    doc = {
        "nature": _surface_doc(spec.nature),
        "uplift_per_action": [_surface_doc(s) for s in spec.uplift_per_action],
        "noise_sigma": spec.noise_sigma,
        "num_actions": spec.num_actions,
        "feature_dim": spec.feature_dim,
        "feature_low": spec.feature_low,
        "feature_high": spec.feature_high,
        "seed": spec.seed,
    }
    return json.dumps(doc)


def _surface_doc(s: SurfaceParams) -> dict:
    return {"a": s.a.tolist(), "b": s.b.tolist(), "c": s.c.tolist()}


def save_spec(spec: GeneratorSpec, path) -> None:
    try:
        Path(path).write_text(spec_to_json(spec), encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def load_spec(path) -> GeneratorSpec:
    path = Path(path)
    if not path.exists():
        raise IOFailure(f"no such file: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        return GeneratorSpec(
            nature=_surface_from_doc(doc["nature"]),
            uplift_per_action=tuple(
                _surface_from_doc(d) for d in doc["uplift_per_action"]
            ),
            noise_sigma=doc["noise_sigma"],
            num_actions=doc["num_actions"],
            feature_dim=doc["feature_dim"],
            feature_low=doc["feature_low"],
            feature_high=doc["feature_high"],
            seed=doc["seed"],
        )
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"malformed generator spec {path}: {exc}") from exc


def _surface_from_doc(d: dict) -> SurfaceParams:
    return SurfaceParams(
        a=np.asarray(d["a"]), b=np.asarray(d["b"]), c=np.asarray(d["c"])
    )
