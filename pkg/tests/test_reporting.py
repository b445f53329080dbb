from __future__ import annotations

import pytest

from src.experiments.records import SweepRow, TrainingRow, write_csv, write_records
from src.orchestrator.workflow import report_run
from src.reporting import LinePlot, emit_plots, summarize
from src.utils.config import Settings
from src.utils.errors import ArgumentError, LabError


@pytest.fixture
def settings(tmp_path):
    return Settings(output_dir=str(tmp_path), log_level="INFO", plot_width=480, plot_height=300)


def _training_rows(n=4):
    return [
        TrainingRow(run_id="r", step=i, t=5, method="sdpo", loss=0.7 - 0.01 * i, logit=0.0, w_raw=0.99, w_clipped=0.99, beta=0.02)
        for i in range(1, n + 1)
    ]


def test_single_point_renders_as_marker():
    svg = LinePlot("one", "x", "y").add_series("only", [1.0], [2.0]).render()
    assert svg.startswith("<svg") and svg.endswith("</svg>\n")
    assert "<circle" in svg and "<polyline" not in svg


def test_render_is_a_pure_function_of_inputs():
    def make():
        return LinePlot("loss & friends", "step", "loss").add_series("a", [0, 1, 2], [3.0, 1.0, 2.0]).render()

    assert make() == make()
    assert "loss &amp; friends" in make()


def test_non_finite_points_are_dropped():
    plot = LinePlot("t", "x", "y").add_series("a", [0.0, 1.0, 2.0], [1.0, float("nan"), 3.0])
    assert plot.series[0].xs == [0.0, 2.0]
    with pytest.raises(ArgumentError):
        LinePlot("t", "x", "y").add_series("a", [0.0], [float("inf")]).render()
    with pytest.raises(ArgumentError):
        LinePlot("t", "x", "y").add_series("a", [0.0, 1.0], [1.0])


def test_emit_plots_skips_empty_and_missing(tmp_path):
    write_records(tmp_path / "training_log.csv", TrainingRow, _training_rows())
    write_csv(tmp_path / "rounds.csv", ["run_id", "round", "steps", "mean_reward", "pair_reward_gap", "final_loss"], [])
    result = emit_plots(tmp_path)
    assert [p.name for p in result.written] == ["loss.svg"]
    assert result.skipped == ["rounds.csv"]
    assert "weight_curve.csv" in result.missing
    assert not result.all_missing


def test_sweep_rows_are_averaged_over_seeds(tmp_path):
    rows = [SweepRow("sdpo", b, s, -2.0, -1.0 - s) for b in (0.02, 0.2) for s in (0, 1)]
    write_records(tmp_path / "sweep.csv", SweepRow, rows)
    emit_plots(tmp_path)
    svg = (tmp_path / "beta_sweep.svg").read_text()
    assert svg.count("<polyline") == 1
    assert ">sdpo<" in svg


def test_summarize_reads_what_is_there(tmp_path):
    write_records(tmp_path / "training_log.csv", TrainingRow, _training_rows())
    metrics = dict(summarize(tmp_path))
    assert metrics["align_final_loss"] == pytest.approx(0.675)
    assert metrics["align_mean_w_raw"] == pytest.approx(0.99)
    assert "round_last_reward" not in metrics


def test_report_run_merges_summary_idempotently(tmp_path, settings):
    write_records(tmp_path / "training_log.csv", TrainingRow, _training_rows())
    write_csv(tmp_path / "summary.csv", ["metric", "value"], [{"metric": "final_reward", "value": -0.5}])
    report_run(tmp_path, settings)
    first = (tmp_path / "summary.csv").read_text()
    report_run(tmp_path, settings)
    assert (tmp_path / "summary.csv").read_text() == first
    assert first.startswith("metric,value\nfinal_reward,-0.5\n")
    assert 'width="480"' in (tmp_path / "loss.svg").read_text()


def test_report_run_on_a_directory_without_csvs(tmp_path, settings):
    with pytest.raises(LabError):
        report_run(tmp_path, settings)
    with pytest.raises(ArgumentError):
        report_run(tmp_path / "absent", settings)
