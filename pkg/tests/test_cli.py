from __future__ import annotations

import pytest

from src.experiments.records import read_csv
from src.main import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, run

TINY = """\
schema_version = 1

[schedule]
T = 20
beta_start = 0.001
beta_end = 0.2

[model]
hidden = 8
depth = 1
time_embed_dim = 4

[pretrain]
steps = 20
batch_size = 16

[align]
steps = 4
batch_size = 4
n_pairs = 8

[iterate]
rounds = 1
pairs_per_round = 4
epochs = 1

[diagnostics]
every = 2
trace_pairs = 4
bins = 3
curve_samples = 8
reward_samples = 8

[sde]
n_steps = 10
n_samples = 20
train_steps = 5
batch_size = 8
record_paths = 2
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(TINY)
    return str(path)


def _error_lines(capsys):
    return [line for line in capsys.readouterr().err.splitlines() if line.startswith("error: ")]


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["align"],
        ["align", "--seed", "1", "--bogus"],
        ["align", "--seed", "-3"],
        ["align", "--seed", "1", "--n", "0"],
        ["diagnose", "--seed", "1"],
        ["report"],
        ["sde-sample", "--seed", "1", "--epsilon", "-0.5"],
    ],
)
def test_usage_errors_exit_2(argv, capsys, tmp_path):
    assert run(argv + ["--out", str(tmp_path / "r")] if argv else argv) == EXIT_USAGE
    lines = _error_lines(capsys)
    assert len(lines) == 1 and lines[0].startswith("error: usage: ")


def test_missing_seed_message(capsys, config, tmp_path):
    assert run(["align", "--config", config, "--out", str(tmp_path / "r")]) == EXIT_USAGE
    assert _error_lines(capsys) == ["error: usage: --seed is required"]


def test_bad_config_exits_2_before_any_work(capsys, tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("schema_version = 1\n[align]\nstepz = 3\n")
    out = tmp_path / "r"
    assert run(["align", "--config", str(bad), "--seed", "1", "--out", str(out)]) == EXIT_USAGE
    lines = _error_lines(capsys)
    assert len(lines) == 1 and lines[0].startswith("error: config: ") and "align.stepz" in lines[0]
    assert not out.exists()


def test_runtime_error_points_at_run_log(capsys, config, tmp_path):
    out = tmp_path / "r"
    code = run(["align", "--config", config, "--seed", "1", "--out", str(out), "--checkpoint", str(tmp_path / "nope.txt")])
    assert code == EXIT_RUNTIME
    lines = _error_lines(capsys)
    assert len(lines) == 1
    assert lines[0].startswith("error: ArgumentError: ") and lines[0].endswith(f"(see {out / 'run.log'})")
    assert "ArgumentError" in (out / "run.log").read_text()


def test_align_is_reproducible_from_a_checkpoint(config, tmp_path):
    pre = tmp_path / "pre"
    assert run(["pretrain", "--config", config, "--seed", "3", "--out", str(pre)]) == EXIT_OK
    assert (pre / "checkpoint.txt").read_text().startswith("sdpo-lab-denoiser v1")
    assert read_csv(pre / "summary.csv")[0]["metric"] == "pretrained_reward"

    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        argv = ["align", "--config", config, "--seed", "3", "--method", "sdpo", "--checkpoint", str(pre / "checkpoint.txt")]
        assert run(argv + ["--out", str(out)]) == EXIT_OK
        outs.append(out)

    for artifact in (
        "pairs.csv",
        "training_log.csv",
        "weights.csv",
        "density_trace.csv",
        "summary.csv",
        "checkpoint.txt",
        "config.snapshot.json",
    ):
        assert (outs[0] / artifact).read_bytes() == (outs[1] / artifact).read_bytes(), artifact

    log = read_csv(outs[0] / "training_log.csv")
    assert list(log[0]) == ["run_id", "step", "t", "method", "loss", "logit", "w_raw", "w_clipped", "beta"]
    assert [int(r["step"]) for r in log] == [1, 2, 3, 4]
    assert [int(r["step"]) for r in read_csv(outs[0] / "density_trace.csv")] == [0, 2, 4]
    assert {r["metric"] for r in read_csv(outs[0] / "summary.csv")} == {"baseline_reward", "final_reward"}


def test_report_on_an_align_run(config, tmp_path, capsys):
    out = tmp_path / "run"
    assert run(["align", "--config", config, "--seed", "0", "--method", "cm", "--out", str(out)]) == EXIT_OK
    assert run(["report", "--run", str(out)]) == EXIT_OK
    for svg in ("pretrain_loss.svg", "loss.svg", "density_trace.svg"):
        assert (out / svg).exists(), svg
    metrics = {r["metric"] for r in read_csv(out / "summary.csv")}
    assert {"final_reward", "align_final_loss", "density_difference_last"} <= metrics


def test_report_without_csvs_fails(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert run(["report", "--run", str(tmp_path / "empty")]) == EXIT_RUNTIME
    assert _error_lines(capsys)[0].startswith("error: LabError: ")


def test_unlike_pairs(config, tmp_path):
    out = tmp_path / "pairs"
    assert run(["gen-pairs", "--config", config, "--seed", "2", "--n", "6", "--unlike", "--out", str(out)]) == EXIT_OK
    rows = read_csv(out / "pairs.csv")
    assert len(rows) == 6
    assert all(r["provenance"] == "unlike" and float(r["reward_w"]) >= float(r["reward_l"]) for r in rows)


def test_iterate_writes_rounds(config, tmp_path):
    out = tmp_path / "it"
    assert run(["iterate", "--config", config, "--seed", "2", "--rounds", "2", "--out", str(out)]) == EXIT_OK
    assert [r["round"] for r in read_csv(out / "rounds.csv")] == ["0", "1", "2"]


def test_weight_curve_diagnostic(config, tmp_path):
    out = tmp_path / "curve"
    assert run(["diagnose", "--what", "weight-curve", "--config", config, "--seed", "2", "--out", str(out)]) == EXIT_OK
    rows = read_csv(out / "weight_curve.csv")
    assert [r["bin"] for r in rows] == ["0", "1", "2"]


def test_compare_unlike_writes_the_weight_ratio(config, tmp_path):
    out = tmp_path / "unlike"
    assert run(["diagnose", "--what", "compare-unlike", "--config", config, "--seed", "2", "--out", str(out)]) == EXIT_OK
    assert [r["source"] for r in read_csv(out / "weight_curve.csv")] == ["on-policy"] * 3 + ["unlike"] * 3
    summary = {r["metric"]: float(r["value"]) for r in read_csv(out / "summary.csv")}
    assert summary["unlike_weight_ratio"] == pytest.approx(summary["mean_raw_unlike"] / summary["mean_raw_on_policy"])


def test_closed_form_sde_sampling(config, tmp_path):
    out = tmp_path / "sde"
    argv = ["sde-sample", "--config", config, "--seed", "4", "--closed-form", "--epsilon", "0.5", "--drift-form", "interpolant"]
    assert run(argv + ["--n", "12", "--out", str(out)]) == EXIT_OK
    samples = read_csv(out / "sde_samples.csv")
    assert len(samples) == 12 and list(samples[0]) == ["sample_id", "x0", "x1"]
    paths = read_csv(out / "sde_paths.csv")
    assert len(paths) == 2 * 11
    assert not (out / "pretrain_loss.csv").exists()
