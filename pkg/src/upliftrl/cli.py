"""Command-line entry point.

Subcommands: gen, train, eval, qini, convergence, sma, adapt-hillstrom.
Every run writes a ``run.json`` with the fully resolved configuration so
it can be reproduced from that file alone. Artifacts are plain CSV/JSON.

Exit codes: 0 success, 2 validation error, 3 I/O error, 4 numerical error.
"""

from __future__ import annotations

import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import data as data_mod
from . import synthgen
from .errors import IOFailure, NumericalError, ValidationError
from .metrics import (
    PolicyAssignment,
    bootstrap_dispersion,
    policy_to_scores,
    qini_curve,
    sn_umg,
    umg,
)
from .policy import forward, init_policy, load_policy, save_policy
from .rng import substream
from .trainer import (
    DESK_SCALE,
    TrainConfig,
    evaluate_split,
    greedy_assignment,
    train,
    train_sma,
    write_trace_csv,
)


def _write_run_json(out_dir: Path, command: str, params: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {"command": command, **params}
    (out_dir / "run.json").write_text(json.dumps(doc, indent=2), encoding="utf-8")


def _max_workers() -> int:
    raw = os.environ.get("UPLIFT_RL_THREADS")
    if raw is None:
        return max(1, os.cpu_count() or 1)
    return max(1, int(raw))


@click.group()
def cli():
    """Offline uplift policy learning and evaluation."""


@cli.command("gen")
@click.option("--n-per-arm", type=int, default=20_000, show_default=True)
@click.option("--actions", "k", type=int, default=4, show_default=True)
@click.option("--sigma", type=float, default=0.8, show_default=True)
@click.option("--logging", "logging_policy",
              type=click.Choice(["uniform", "proportional"]), default="uniform",
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def cmd_gen(n_per_arm, k, sigma, logging_policy, seed, out):
    """Generate a synthetic logged dataset plus its oracle spec."""
    if sigma < 0:
        raise ValidationError("--sigma must be >= 0")
    if n_per_arm < 1:
        raise ValidationError("--n-per-arm must be >= 1")
    spec = synthgen.make_spec(seed=seed, num_actions=k, noise_sigma=sigma)
    n_total = n_per_arm * (k + 1)
    ds, spec = synthgen.generate_dataset(spec, n_total, logging=logging_policy, seed=seed)
    _write_run_json(out, "gen", dict(
        n_per_arm=n_per_arm, actions=k, sigma=sigma, logging=logging_policy, seed=seed,
    ))
    data_mod.write_csv(ds, out / "dataset.csv")
    synthgen.save_spec(spec, out / "spec.json")
    click.echo(f"wrote {out / 'dataset.csv'} ({len(ds)} rows) and {out / 'spec.json'}")


def _load_split_dataset(path: Path, seed: int) -> data_mod.Dataset:
    ds = data_mod.load_csv(path)
    return data_mod.split_dataset(ds, seed=seed)


@cli.command("train")
@click.option("--data", type=click.Path(path_type=Path), required=True)
@click.option("--hidden", type=int, default=512, show_default=True)
@click.option("--epochs", type=int, default=2000, show_default=True)
@click.option("--batches", type=int, default=10, show_default=True)
@click.option("--batch-size", type=int, default=10_000, show_default=True)
@click.option("--lr", type=float, default=0.1, show_default=True)
@click.option("--patience", type=int, default=1000, show_default=True)
@click.option("--eval-every", type=int, default=10, show_default=True)
@click.option("--buckets", type=int, default=None,
              help="Probability-bucket training for single-action data.")
@click.option("--desk-scale", is_flag=True,
              help="Laptop-friendly batch settings (overrides batches/batch-size).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def cmd_train(data, hidden, epochs, batches, batch_size, lr, patience, eval_every,
              buckets, desk_scale, seed, out):
    """Train the policy on a logged dataset CSV."""
    if desk_scale:
        batches = DESK_SCALE["batches_per_episode"]
        batch_size = DESK_SCALE["batch_size"]
        eval_every = DESK_SCALE["eval_every"]
    cfg = TrainConfig(
        num_epochs=epochs, batches_per_episode=batches, batch_size=batch_size,
        learning_rate=lr, patience=patience, eval_every=eval_every, seed=seed,
    )
    ds = _load_split_dataset(data, seed)
    outputs = buckets if buckets is not None else ds.num_actions + 1
    net = init_policy(ds.feature_dim, outputs - 1, h=hidden, seed=seed)
    _write_run_json(out, "train", dict(
        data=str(data), hidden=hidden, epochs=epochs, batches=batches,
        batch_size=batch_size, lr=lr, patience=patience, eval_every=eval_every,
        buckets=buckets, desk_scale=desk_scale, seed=seed,
    ))
    result = train(net, ds, cfg, n_buckets=buckets)
    save_policy(result.best, out / "model.best.json")
    save_policy(result.last, out / "model.last.json")
    write_trace_csv(result.trace, out / "trace.csv")
    val = evaluate_split(result.best, ds, "validation", buckets).sn_umg
    click.echo(f"trained {len(result.trace)} episodes; validation score {val:.6f}")


def _builtin_assignment(name: str, ds, seed: int) -> PolicyAssignment:
    if name == "control":
        return PolicyAssignment(actions=np.zeros(len(ds), dtype=np.int64))
    if name == "random":
        rng = substream(seed, "builtin-random")
        return PolicyAssignment(actions=rng.integers(0, ds.num_actions + 1, len(ds)))
    raise ValidationError(f"unknown builtin policy {name!r}")


@cli.command("eval")
@click.option("--data", type=click.Path(path_type=Path), required=True)
@click.option("--model", type=click.Path(path_type=Path), default=None)
@click.option("--builtin", type=click.Choice(["control", "random"]), default=None)
@click.option("--split", type=click.Choice(["train", "validation", "test", "all"]),
              default="test", show_default=True)
@click.option("--buckets", type=int, default=None)
@click.option("--bootstrap", "n_boot", type=int, default=0, show_default=True,
              help="Bootstrap replicates for dispersion estimates.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def cmd_eval(data, model, builtin, split, buckets, n_boot, seed, out):
    """Evaluate a saved or builtin policy on a dataset split."""
    if (model is None) == (builtin is None):
        raise ValidationError("pass exactly one of --model or --builtin")
    ds = _load_split_dataset(data, seed)
    sub = ds if split == "all" else ds.subset(ds.indices(split))
    if model is not None:
        net = load_policy(model)
        if net.input_dim != sub.feature_dim:
            raise ValidationError(
                f"model expects {net.input_dim} features, dataset has {sub.feature_dim}"
            )
        assignment = greedy_assignment(net, sub, buckets)
    else:
        assignment = _builtin_assignment(builtin, sub, seed)
    report = sn_umg(sub, assignment)
    if n_boot > 0:
        u_std, s_std = bootstrap_dispersion(sub, assignment, n_boot=n_boot, seed=seed)
        report = replace(report, umg_std=u_std, sn_umg_std=s_std)
    _write_run_json(out, "eval", dict(
        data=str(data), model=None if model is None else str(model), builtin=builtin,
        split=split, buckets=buckets, bootstrap=n_boot, seed=seed,
    ))
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    click.echo(f"sn_umg {report.sn_umg:.6f} (umg {report.umg:.6f}) -> {out / 'report.json'}")


@cli.command("qini")
@click.option("--data", type=click.Path(path_type=Path), required=True)
@click.option("--model", type=click.Path(path_type=Path), default=None)
@click.option("--random-scores", is_flag=True, help="Score by a seeded random baseline.")
@click.option("--buckets", type=int, default=5, show_default=True)
@click.option("--split", type=click.Choice(["train", "validation", "test", "all"]),
              default="test", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def cmd_qini(data, model, random_scores, buckets, split, seed, out):
    """Qini curve and coefficient for a bucket policy on K=1 binary data."""
    if (model is None) == (not random_scores):
        raise ValidationError("pass exactly one of --model or --random-scores")
    ds = _load_split_dataset(data, seed)
    sub = ds if split == "all" else ds.subset(ds.indices(split))
    if model is not None:
        net = load_policy(model)
        probs = forward(net, sub.features)
        assignment = PolicyAssignment(
            actions=np.argmax(probs, axis=1), probabilities=probs
        )
        scores = policy_to_scores(assignment, buckets)
    else:
        scores = substream(seed, "qini-random").random(len(sub))
    result = qini_curve(sub, scores)
    _write_run_json(out, "qini", dict(
        data=str(data), model=None if model is None else str(model),
        random_scores=random_scores, buckets=buckets, split=split, seed=seed,
    ))
    result.write_curve_csv(out / "qini.csv")
    (out / "qini.json").write_text(result.to_json(), encoding="utf-8")
    click.echo(f"qini coefficient {result.coefficient:.6f} -> {out / 'qini.csv'}")


@cli.command("convergence")
@click.option("--grid", default="1000,2000,5000,10000", show_default=True,
              help="Comma-separated dataset sizes.")
@click.option("--reps", type=int, default=10, show_default=True)
@click.option("--actions", "k", type=int, default=4, show_default=True)
@click.option("--sigma", type=float, default=0.8, show_default=True)
@click.option("--logging", "logging_policy",
              type=click.Choice(["uniform", "proportional"]), default="uniform",
              show_default=True)
@click.option("--truth-mc", type=int, default=200_000, show_default=True,
              help="Monte-Carlo draws for the oracle truth value.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def cmd_convergence(grid, reps, k, sigma, logging_policy, truth_mc, seed, out):
    """Estimator error versus dataset size for the oracle-greedy policy.

    For each size N and each repetition, a fresh dataset is generated and
    the fixed target policy (oracle argmax uplift) is evaluated with both
    estimators against the Monte-Carlo oracle truth.
    """
    sizes = [int(s) for s in grid.split(",") if s]
    if not sizes or min(sizes) < 1:
        raise ValidationError("--grid must list positive sizes")
    spec = synthgen.make_spec(seed=seed, num_actions=k, noise_sigma=sigma)
    truth = synthgen.oracle_optimal_value(spec, n_mc=truth_mc, seed=seed)

    def one_rep(n: int, rep: int):
        ds, _ = synthgen.generate_dataset(
            spec, n, logging=logging_policy, seed=seed * 1_000_003 + n * 101 + rep
        )
        assignment = PolicyAssignment(actions=synthgen.oracle_actions(spec, ds.features))
        return umg(ds, assignment).umg, sn_umg(ds, assignment).sn_umg

    tasks = [(n, rep) for n in sizes for rep in range(reps)]
    with ThreadPoolExecutor(max_workers=_max_workers()) as pool:
        results = list(pool.map(lambda t: one_rep(*t), tasks))

    _write_run_json(out, "convergence", dict(
        grid=sizes, reps=reps, actions=k, sigma=sigma, logging=logging_policy,
        truth_mc=truth_mc, seed=seed, truth=truth,
    ))
    import csv as _csv

    with open(out / "convergence.csv", "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["N", "metric", "mean_error", "std"])
        for i, n in enumerate(sizes):
            vals = np.array(results[i * reps:(i + 1) * reps])  # (reps, 2)
            for col, name in ((0, "UMG"), (1, "SN-UMG")):
                err = np.abs(vals[:, col] - truth)
                writer.writerow([
                    n, name, repr(float(err.mean())),
                    repr(float(np.std(vals[:, col], ddof=1))),
                ])
    click.echo(f"truth {truth:.6f}; wrote {out / 'convergence.csv'}")


@cli.command("sma")
@click.option("--data", type=click.Path(path_type=Path), required=True)
@click.option("--learner", type=click.Choice(["linear", "mlp"]), default="linear",
              show_default=True)
@click.option("--split", type=click.Choice(["train", "validation", "test", "all"]),
              default="test", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def cmd_sma(data, learner, split, seed, out):
    """Fit separate per-action response models and evaluate their policy."""
    ds = _load_split_dataset(data, seed)
    policy = train_sma(ds, TrainConfig(seed=seed), kind=learner)
    sub = ds if split == "all" else ds.subset(ds.indices(split))
    report = sn_umg(sub, PolicyAssignment(actions=policy.actions(sub.features)))
    _write_run_json(out, "sma", dict(
        data=str(data), learner=learner, split=split, seed=seed,
    ))
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    click.echo(f"sma-{learner} sn_umg {report.sn_umg:.6f} -> {out / 'report.json'}")


@cli.command("adapt-hillstrom")
@click.option("--input", "input_path", type=click.Path(path_type=Path), required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def cmd_adapt_hillstrom(input_path, out):
    """Convert the MineThatData e-mail file to the canonical CSV layout."""
    ds = data_mod.hillstrom_adapter(input_path)
    _write_run_json(out, "adapt-hillstrom", dict(input=str(input_path)))
    data_mod.write_csv(ds, out / "dataset.csv")
    click.echo(f"wrote {out / 'dataset.csv'} ({len(ds)} rows, K={ds.num_actions})")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:  # --help and friends
        return exc.exit_code
    except (click.UsageError, ValidationError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except (IOFailure, OSError) as exc:
        click.echo(f"i/o error: {exc}", err=True)
        return 3
    except NumericalError as exc:
        click.echo(f"numerical error: {exc}", err=True)
        return 4


if __name__ == "__main__":
    sys.exit(main())
