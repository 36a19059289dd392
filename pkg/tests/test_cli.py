import json

import numpy as np
import pytest

from upliftrl.cli import main


def run(argv):
    return main(argv)


@pytest.fixture()
def gen_dir(tmp_path):
    out = tmp_path / "gen"
    code = run([
        "gen", "--n-per-arm", "60", "--actions", "2", "--sigma", "0.2",
        "--seed", "1", "--out", str(out),
    ])
    assert code == 0
    return out


def write_binary_k1_csv(path, n=400, seed=0):
    """Single-action, binary-response CSV where treating helps when f0 > 0."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2))
    a = rng.integers(0, 2, n)
    p_treat = 0.6 + 0.3 * (x[:, 0] > 0)
    y = np.where(a == 1, (rng.random(n) < p_treat), (rng.random(n) < 0.3)).astype(int)
    lines = ["f0,f1,action,propensity,r1"]
    for i in range(n):
        lines.append(f"{float(x[i, 0])!r},{float(x[i, 1])!r},{a[i]},0.5,{y[i]}")
    path.write_text("\n".join(lines) + "\n")


def test_gen_writes_artifacts(gen_dir):
    assert (gen_dir / "dataset.csv").exists()
    assert (gen_dir / "spec.json").exists()
    run_doc = json.loads((gen_dir / "run.json").read_text())
    assert run_doc["command"] == "gen"
    assert run_doc["n_per_arm"] == 60
    assert run_doc["actions"] == 2
    # 60 per arm over 3 arms
    n_rows = len((gen_dir / "dataset.csv").read_text().splitlines()) - 1
    assert n_rows == 180


def test_gen_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["gen", "--n-per-arm", "30", "--actions", "1", "--seed", "5"]
    assert run(args + ["--out", str(a)]) == 0
    assert run(args + ["--out", str(b)]) == 0
    assert (a / "dataset.csv").read_bytes() == (b / "dataset.csv").read_bytes()
    assert (a / "spec.json").read_bytes() == (b / "spec.json").read_bytes()


def test_gen_rejects_bad_sigma(tmp_path):
    assert run(["gen", "--sigma", "-1", "--out", str(tmp_path / "x")]) == 2


def test_train_eval_round_trip(gen_dir, tmp_path):
    model_dir = tmp_path / "model"
    code = run([
        "train", "--data", str(gen_dir / "dataset.csv"),
        "--hidden", "8", "--epochs", "6", "--batches", "2",
        "--batch-size", "40", "--lr", "0.01", "--patience", "50",
        "--eval-every", "3", "--seed", "1", "--out", str(model_dir),
    ])
    assert code == 0
    for name in ("model.best.json", "model.last.json", "trace.csv", "run.json"):
        assert (model_dir / name).exists()

    eval_dir = tmp_path / "eval"
    code = run([
        "eval", "--data", str(gen_dir / "dataset.csv"),
        "--model", str(model_dir / "model.best.json"),
        "--split", "test", "--bootstrap", "20", "--seed", "1",
        "--out", str(eval_dir),
    ])
    assert code == 0
    report = json.loads((eval_dir / "report.json").read_text())
    assert np.isfinite(report["sn_umg"])
    assert report["sn_umg_std"] > 0


def test_eval_builtin_control_is_zero(gen_dir, tmp_path):
    out = tmp_path / "eval"
    code = run([
        "eval", "--data", str(gen_dir / "dataset.csv"),
        "--builtin", "control", "--split", "all", "--out", str(out),
    ])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    # always-control: treated term equals control term exactly
    assert report["sn_umg"] == pytest.approx(0.0, abs=1e-12)


def test_eval_requires_exactly_one_policy(gen_dir, tmp_path):
    code = run([
        "eval", "--data", str(gen_dir / "dataset.csv"),
        "--out", str(tmp_path / "e"),
    ])
    assert code == 2


def test_eval_missing_data_is_io_error(tmp_path):
    code = run([
        "eval", "--data", str(tmp_path / "absent.csv"),
        "--builtin", "control", "--out", str(tmp_path / "e"),
    ])
    assert code == 3


def test_eval_nonfinite_model_is_numerical_error(gen_dir, tmp_path):
    model_dir = tmp_path / "model"
    assert run([
        "train", "--data", str(gen_dir / "dataset.csv"),
        "--hidden", "4", "--epochs", "2", "--batches", "2",
        "--batch-size", "30", "--lr", "0.01", "--patience", "50",
        "--eval-every", "2", "--out", str(model_dir),
    ]) == 0
    path = model_dir / "model.best.json"
    doc = json.loads(path.read_text())
    doc["w1"][0][0] = float("nan")
    path.write_text(json.dumps(doc))
    code = run([
        "eval", "--data", str(gen_dir / "dataset.csv"),
        "--model", str(path), "--out", str(tmp_path / "e"),
    ])
    assert code == 4


def test_qini_random_scores(tmp_path):
    data = tmp_path / "k1.csv"
    write_binary_k1_csv(data, n=300, seed=2)
    out = tmp_path / "qini"
    code = run([
        "qini", "--data", str(data), "--random-scores", "--split", "all",
        "--seed", "3", "--out", str(out),
    ])
    assert code == 0
    doc = json.loads((out / "qini.json").read_text())
    assert "coefficient" in doc
    curve_lines = (out / "qini.csv").read_text().splitlines()
    assert curve_lines[0] == "fraction,gain"
    assert len(curve_lines) == 302  # header + N+1 points


def test_qini_with_bucket_model(tmp_path):
    data = tmp_path / "k1.csv"
    write_binary_k1_csv(data, n=500, seed=4)
    model_dir = tmp_path / "model"
    assert run([
        "train", "--data", str(data), "--buckets", "5",
        "--hidden", "8", "--epochs", "6", "--batches", "2",
        "--batch-size", "50", "--lr", "0.01", "--patience", "50",
        "--eval-every", "3", "--out", str(model_dir),
    ]) == 0
    out = tmp_path / "qini"
    code = run([
        "qini", "--data", str(data), "--model", str(model_dir / "model.best.json"),
        "--buckets", "5", "--split", "test", "--out", str(out),
    ])
    assert code == 0
    assert np.isfinite(json.loads((out / "qini.json").read_text())["coefficient"])


def test_qini_mutually_exclusive_sources(tmp_path):
    data = tmp_path / "k1.csv"
    write_binary_k1_csv(data, n=50)
    assert run(["qini", "--data", str(data), "--out", str(tmp_path / "q")]) == 2


def test_convergence_writes_error_table(tmp_path, monkeypatch):
    monkeypatch.setenv("UPLIFT_RL_THREADS", "2")
    out = tmp_path / "conv"
    code = run([
        "convergence", "--grid", "200,400", "--reps", "3", "--actions", "2",
        "--sigma", "0.2", "--truth-mc", "5000", "--seed", "1", "--out", str(out),
    ])
    assert code == 0
    lines = (out / "convergence.csv").read_text().splitlines()
    assert lines[0] == "N,metric,mean_error,std"
    assert len(lines) == 1 + 2 * 2  # two sizes x two estimators
    run_doc = json.loads((out / "run.json").read_text())
    assert run_doc["grid"] == [200, 400]
    assert np.isfinite(run_doc["truth"])


def test_convergence_rejects_empty_grid(tmp_path):
    assert run(["convergence", "--grid", ",", "--out", str(tmp_path / "c")]) == 2


def test_sma_command(gen_dir, tmp_path):
    out = tmp_path / "sma"
    code = run([
        "sma", "--data", str(gen_dir / "dataset.csv"), "--learner", "linear",
        "--split", "test", "--out", str(out),
    ])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert np.isfinite(report["sn_umg"])
    assert json.loads((out / "run.json").read_text())["learner"] == "linear"


def test_adapt_hillstrom_command(tmp_path):
    src = tmp_path / "email.csv"
    src.write_text(
        "recency,history_segment,history,mens,womens,zip_code,newbie,channel,"
        "segment,visit,conversion,spend\n"
        "5,1) $0 - $100,100,1,0,Urban,0,Web,No E-Mail,1,0,0\n"
        "3,1) $0 - $100,80,0,1,Rural,1,Phone,Womens E-Mail,0,0,0\n"
        "7,2) $100 - $200,60,1,1,Urban,0,Web,Mens E-Mail,1,1,10\n"
    )
    out = tmp_path / "adapted"
    code = run(["adapt-hillstrom", "--input", str(src), "--out", str(out)])
    assert code == 0
    lines = (out / "dataset.csv").read_text().splitlines()
    assert len(lines) == 3  # header + 2 kept rows (men's arm dropped)


def test_help_exits_zero():
    assert run(["--help"]) == 0
    assert run(["gen", "--help"]) == 0


def test_console_script_installed():
    import shutil
    import subprocess

    exe = shutil.which("upliftrl")
    assert exe is not None
    proc = subprocess.run([exe, "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "gen" in proc.stdout and "qini" in proc.stdout
