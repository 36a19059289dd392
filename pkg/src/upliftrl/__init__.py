"""Offline uplift policy learning and evaluation from logged data."""

from .data import (
    CsvSchema,
    Dataset,
    LoggedSample,
    ResponseWeights,
    combine_responses,
    hillstrom_adapter,
    load_csv,
    split_dataset,
    write_csv,
)
from .estimators import SeparateModelUplift, UpliftPolicyGradient
from .metrics import (
    EvalReport,
    PolicyAssignment,
    QiniResult,
    policy_to_scores,
    qini_curve,
    sn_umg,
    umg,
)
from .policy import PolicyNet, forward, init_policy, load_policy, sample_action, save_policy
from .synthgen import (
    GeneratorSpec,
    SurfaceParams,
    eval_surface,
    generate_dataset,
    make_spec,
    true_response,
    true_uplift,
)
from .trainer import TrainConfig, TrainResult, evaluate_split, train, train_sma

__version__ = "0.1.0"

__all__ = [
    "CsvSchema", "Dataset", "LoggedSample", "ResponseWeights",
    "combine_responses", "hillstrom_adapter", "load_csv", "split_dataset",
    "write_csv", "SeparateModelUplift", "UpliftPolicyGradient", "EvalReport",
    "PolicyAssignment", "QiniResult", "policy_to_scores", "qini_curve",
    "sn_umg", "umg", "PolicyNet", "forward", "init_policy", "load_policy",
    "sample_action", "save_policy", "GeneratorSpec", "SurfaceParams",
    "eval_surface", "generate_dataset", "make_spec", "true_response",
    "true_uplift", "TrainConfig", "TrainResult", "evaluate_split", "train", "train_sma",
]
