from __future__ import annotations

import numpy as np
import pytest
from pydantic import ValidationError

from src.diffusion import DenoiserConfig, DenoiserNet, make_schedule
from src.experiments.config import (
    ExperimentConfig,
    PretrainConfig,
    RunConfig,
    TargetConfig,
    load_config,
    parse_config,
    require_seed,
)
from src.experiments.diagnostics import (
    DensityTrace,
    compare_unlike,
    density_trace,
    mean_abs_log_weight,
    timestep_bins,
    unlike_weight_ratio,
    weight_curve,
)
from src.experiments.pairs import PreferencePair, gen_pairs, gen_unlike_pairs, pair_columns, pair_rows, pairs_from_rows
from src.experiments.records import (
    SweepRow,
    TrainingRow,
    WeightCurveRow,
    columns_of,
    format_cell,
    read_csv,
    write_csv,
    write_records,
)
from src.experiments.seeding import stream
from src.experiments.toy import ToyTarget, reward_oracle
from src.experiments.trainer import align, beta_sweep, iterative_align, mean_reward, pretrain, reward_spread, stability_run
from src.utils.errors import ArgumentError, ConfigError, LabError, UsageError


@pytest.fixture
def target():
    return ToyTarget.from_config(TargetConfig())


@pytest.fixture
def lab_net():
    # matches the default four-condition target
    cfg = DenoiserConfig(dim=2, hidden=8, depth=1, time_embed_dim=4, n_conditions=4)
    return DenoiserNet.initialize(cfg, np.random.default_rng(3), out_scale=0.5)


# --- config ---


def test_schema_version_alone_is_a_complete_config():
    cfg = parse_config({"schema_version": 1})
    assert cfg == load_config(None)
    assert cfg.schedule.T == 1000 and cfg.method == "sdpo"
    assert cfg.run_config(seed=4).beta == 0.02
    assert cfg.run_config(seed=4, method="dpo").beta == 2.0


def test_missing_schema_version_is_reported_by_field():
    with pytest.raises(ConfigError) as info:
        parse_config({"method": "dpo"})
    assert any(f.startswith("schema_version") for f in info.value.fields)


def test_unknown_key_is_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config({"schema_version": 1, "align": {"stepz": 5}})
    assert any("align.stepz" in f for f in info.value.fields)


@pytest.mark.parametrize(
    "data",
    [
        {"schema_version": 1, "model": {"dim": 3}},
        {"schema_version": 1, "model": {"n_conditions": 2}},
        {"schema_version": 1, "schedule": {"T": 50}, "loss": {"timestep_window": [10, 60]}},
        {"schema_version": 1, "schedule": {"beta_start": 0.1, "beta_end": 0.01}},
        {"schema_version": 1, "diagnostics": {"window": [0.6, 0.5]}},
        {"schema_version": 2},
    ],
)
def test_inconsistent_configs_are_rejected(data):
    with pytest.raises(ConfigError):
        parse_config(data)


def test_load_config_from_toml(tmp_path):
    path = tmp_path / "lab.toml"
    path.write_text('schema_version = 1\nmethod = "cm"\n\n[schedule]\nT = 40\n\n[loss]\nhard_mask_threshold = 0.9\n')
    cfg = load_config(path)
    assert cfg.method == "cm" and cfg.schedule.T == 40
    assert cfg.loss.hard_mask_threshold == 0.9


def test_load_config_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("schema_version = = 1\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_require_seed():
    assert require_seed(7) == 7
    with pytest.raises(UsageError):
        require_seed(None)
    with pytest.raises(UsageError):
        require_seed(-1)


def test_named_streams_are_independent_and_repeatable():
    a1 = stream(5, "pairs").normal(size=4)
    a2 = stream(5, "pairs").normal(size=4)
    b = stream(5, "reward").normal(size=4)
    np.testing.assert_array_equal(a1, a2)
    assert not np.allclose(a1, b)


# --- toy target ---


def test_reward_oracle(target):
    assert reward_oracle(target, 0, np.array([1.5, 1.5])) == 0.0
    r = reward_oracle(target, np.array([0, 1]), np.array([[1.5, 0.5], [-1.5, 1.5]]))
    np.testing.assert_allclose(r, [-1.0, 0.0])
    with pytest.raises(ArgumentError):
        reward_oracle(target, 0, np.zeros(3))
    with pytest.raises(ArgumentError):
        reward_oracle(target, 9, np.zeros(2))


def test_target_sampling(target, rng):
    faithful = ToyTarget.from_config(TargetConfig(condition_fidelity=1.0))
    x = faithful.sample(2000, rng, c=2)
    np.testing.assert_allclose(x.mean(axis=0), [-1.5, -1.5], atol=0.05)
    free = target.sample(4000, rng)
    np.testing.assert_allclose(free.mean(axis=0), [0.0, 0.0], atol=0.1)
    assert target.sample_mode(np.array([0, 3]), 2, rng).shape == (2, 2)


def test_target_config_weights_are_normalised():
    t = ToyTarget.from_config(TargetConfig(weights=[1.0, 1.0, 2.0, 4.0]))
    np.testing.assert_allclose(t.weights, [0.125, 0.125, 0.25, 0.5])


def test_rescaled_target_moves_only_the_means(target, rng):
    wide = target.rescaled(2.5)
    np.testing.assert_allclose(wide.means, 2.5 * target.means)
    assert wide.scale == target.scale and wide.condition_map == target.condition_map
    np.testing.assert_allclose(wide.sample_mode(1, 4000, rng).mean(axis=0), [-3.75, 3.75], atol=0.05)
    np.testing.assert_array_equal(target.means[0], [1.5, 1.5])
    with pytest.raises(ArgumentError):
        target.rescaled(0.0)


def test_pretrain_mean_scale_changes_the_training_data(target, short_schedule):
    net = DenoiserNet.initialize(DenoiserConfig(dim=2, hidden=8, depth=1, time_embed_dim=4, n_conditions=4), np.random.default_rng(0))
    exact, _ = pretrain(net, target, short_schedule, PretrainConfig(steps=3, batch_size=8), stream(0, "pretrain"))
    weak, _ = pretrain(net, target, short_schedule, PretrainConfig(steps=3, batch_size=8, mean_scale=2.5), stream(0, "pretrain"))
    assert exact.fingerprint() != weak.fingerprint()
    with pytest.raises(ValidationError):
        PretrainConfig(mean_scale=0.0)


# --- pairs ---


def test_on_policy_pairs_are_ranked(lab_net, target, short_schedule, rng):
    pairs = gen_pairs(lab_net, target, 12, short_schedule, rng)
    assert len(pairs) == 12
    for p in pairs:
        assert p.reward_w >= p.reward_l
        assert p.provenance == "on-policy"
        assert p.reward_w == pytest.approx(reward_oracle(target, p.c, p.x0_w))


def test_unlike_pairs_keep_the_reward_invariant(lab_net, target, short_schedule, rng):
    pairs = gen_unlike_pairs(target, lab_net, 10, short_schedule, rng)
    assert all(p.provenance == "unlike" and p.gap >= 0 for p in pairs)


def test_unlike_pairs_have_a_positive_reward_gap(lab_net, target, short_schedule, rng):
    pairs = gen_unlike_pairs(target, lab_net, 1000, short_schedule, rng)
    gaps = np.array([p.gap for p in pairs])
    assert gaps.mean() > 1.0
    # target draws sit within a few scales of their mode
    assert np.mean([p.reward_w for p in pairs]) > -1.0


def test_pair_with_inverted_rewards_is_rejected():
    with pytest.raises(ArgumentError):
        PreferencePair(0, np.zeros(2), np.ones(2), reward_w=-1.0, reward_l=0.0)


def test_pairs_survive_csv(lab_net, target, short_schedule, rng, tmp_path):
    pairs = gen_pairs(lab_net, target, 5, short_schedule, rng)
    path = write_csv(tmp_path / "pairs.csv", pair_columns(2), pair_rows(pairs))
    header = path.read_text().splitlines()[0]
    assert header == "pair_id,c,provenance,reward_w,reward_l,w0,w1,l0,l1"
    back = pairs_from_rows(read_csv(path), 2)
    for a, b in zip(pairs, back):
        assert a.c == b.c and a.reward_w == b.reward_w
        np.testing.assert_array_equal(a.x0_w, b.x0_w)
        np.testing.assert_array_equal(a.x0_l, b.x0_l)


# --- records ---


def test_format_cell():
    assert format_cell(True) == "true"
    assert format_cell(np.int64(3)) == "3"
    assert format_cell(0.1) == "0.1"
    assert format_cell(np.float64(1 / 3)) == repr(1 / 3)
    assert format_cell("sdpo") == "sdpo"


def test_write_records_follows_field_order(tmp_path):
    row = SweepRow(method="sdpo", beta=0.2, seed=1, baseline_reward=-1.5, final_reward=-1.25)
    path = write_records(tmp_path / "sweep.csv", SweepRow, [row])
    assert path.read_text() == "method,beta,seed,baseline_reward,final_reward\nsdpo,0.2,1,-1.5,-1.25\n"
    assert columns_of(TrainingRow)[:3] == ["run_id", "step", "t"]


# --- diagnostics ---


def test_timestep_bins_cover_the_chain():
    bins = timestep_bins(make_schedule(1000), 10)
    assert bins[0] == (2, 100)
    assert bins[5] == (501, 600)
    assert bins[-1] == (901, 1000)
    for (_, hi), (lo, _) in zip(bins, bins[1:]):
        assert lo == hi + 1
    with pytest.raises(ArgumentError):
        timestep_bins(make_schedule(5), 10)


def test_weight_curve_rows(lab_net, target, short_schedule, rng):
    x0 = target.sample(16, rng)
    rows = weight_curve(lab_net, x0, 0, short_schedule, 4, rng, run_id="r1")
    assert [r.bin for r in rows] == [0, 1, 2, 3]
    assert all(r.mean_raw > 0 and r.mean_abs_log_raw >= 0 and r.n == 16 for r in rows)
    assert mean_abs_log_weight(rows, 2, short_schedule.T) == pytest.approx(np.mean([r.mean_abs_log_raw for r in rows]))
    with pytest.raises(ArgumentError):
        mean_abs_log_weight(rows, 3, 4)


def _curve(source, values):
    return [WeightCurveRow("r", source, b, 2 * b + 2, 2 * b + 3, v, 0.0, 8) for b, v in enumerate(values)]


def test_unlike_weight_ratio_matches_bins():
    on_policy = _curve("on-policy", [1.0, 0.9, 0.8])
    assert unlike_weight_ratio(on_policy, _curve("unlike", [0.81, 0.81, 0.81])) == pytest.approx(0.9)
    with pytest.raises(ArgumentError):
        unlike_weight_ratio(on_policy, _curve("unlike", [0.8, 0.8]))
    with pytest.raises(ArgumentError):
        unlike_weight_ratio([], [])


def test_density_trace_is_append_only_and_repeatable(lab_net, target, short_schedule, rng):
    pairs = gen_pairs(lab_net, target, 8, short_schedule, rng)
    trace = DensityTrace(pairs, 5, 15, short_schedule, rng, n_trace=6)
    first = trace.record(0, lab_net)
    second = trace.record(10, lab_net)
    assert first.logp_winner == second.logp_winner
    assert first.difference == pytest.approx(first.logp_winner - first.logp_loser)
    with pytest.raises(ArgumentError):
        trace.record(10, lab_net)
    assert trace.c.shape == (6,)


def test_density_trace_over_checkpoints(lab_net, target, short_schedule, rng):
    pairs = gen_pairs(lab_net, target, 6, short_schedule, rng)
    moved = lab_net.with_params({k: v * 1.5 for k, v in lab_net.params.items()})
    rows = density_trace([(0, lab_net), (5, moved)], pairs, 3, 12, short_schedule, rng, run_id="dt")
    assert [r.step for r in rows] == [0, 5]
    assert rows[0].logp_winner != rows[1].logp_winner
    assert all(r.t_lo == 3 and r.t_hi == 12 and r.run_id == "dt" for r in rows)


# --- training ---


def test_align_updates_policy_and_leaves_reference(lab_net, target, short_schedule, rng):
    pairs = gen_pairs(lab_net, target, 10, short_schedule, rng)
    ref = lab_net.copy()
    seen = []
    cfg = RunConfig(method="sdpo", steps=5, batch_size=4, lr=1e-2, diagnostics_every=2)
    result = align(lab_net, ref, pairs, cfg, short_schedule, rng, run_id="unit", hooks=[lambda s, n: seen.append(s)], step_offset=10)
    assert seen == [10, 12, 14]
    assert [r.step for r in result.log] == [11, 12, 13, 14, 15]
    assert len(result.weights) == 5
    assert all(row.method == "sdpo" and row.beta == 0.02 for row in result.log)
    assert result.net.fingerprint() != lab_net.fingerprint()
    assert ref.fingerprint() == lab_net.fingerprint()


@pytest.mark.parametrize("method", ["dpo", "cm"])
def test_align_first_step_loss_is_ln2_for_residual_methods(method, lab_net, target, short_schedule, rng):
    pairs = gen_pairs(lab_net, target, 6, short_schedule, rng)
    cfg = RunConfig(method=method, steps=1, batch_size=3)
    result = align(lab_net, lab_net.copy(), pairs, cfg, short_schedule, rng)
    row = result.log[0]
    expected = np.log(2.0) * (row.w_clipped if method == "cm" else 1.0)
    assert row.loss == pytest.approx(expected, rel=1e-9)


def test_iterative_align_scores_each_round(lab_net, target, short_schedule, rng):
    cfg = RunConfig(method="sdpo", batch_size=4, lr=1e-3)
    res = iterative_align(
        lab_net, lab_net.copy(), target, short_schedule, cfg, rng, rounds=2, pairs_per_round=8, epochs=1, reward_samples=16
    )
    assert [r.round for r in res.rounds] == [0, 1, 2]
    assert [r.steps for r in res.rounds] == [0, 2, 2]
    assert [r.step for r in res.log] == [1, 2, 3, 4]
    assert all(np.isfinite(r.mean_reward) for r in res.rounds)


def test_iterative_align_rounds_share_reward_noise(lab_net, target, short_schedule, rng):
    # with no updates between rounds every score must be identical
    cfg = RunConfig(method="sdpo", seed=3, batch_size=4)
    res = iterative_align(
        lab_net, lab_net.copy(), target, short_schedule, cfg, rng, rounds=3, pairs_per_round=8, epochs=0, reward_samples=16
    )
    scores = [r.mean_reward for r in res.rounds]
    assert scores == [scores[0]] * 4
    assert scores[0] == mean_reward(lab_net, target, short_schedule, stream(3, "reward"), 16)


def test_iterative_align_needs_a_round(lab_net, target, short_schedule, rng):
    with pytest.raises(LabError):
        iterative_align(lab_net, lab_net, target, short_schedule, RunConfig(), rng, rounds=0)


def test_reward_spread():
    rows = [
        SweepRow("sdpo", 0.02, 0, -1.0, -0.9),
        SweepRow("sdpo", 0.2, 0, -1.0, -0.7),
        SweepRow("dpo", 0.2, 0, -1.0, -2.0),
    ]
    assert reward_spread(rows, "sdpo") == pytest.approx(0.2)
    assert reward_spread(rows, "dpo") == 0.0
    with pytest.raises(LabError):
        reward_spread(rows, "cm")


# --- end-to-end behaviour on the default toy problem ---


SEEDS = (0, 1, 2)


def _pretrained(cfg, seed):
    sched = cfg.schedule.build()
    target = ToyTarget.from_config(cfg.target)
    net = DenoiserNet.initialize(cfg.model, stream(seed, "init"))
    net, _ = pretrain(net, target, sched, cfg.pretrain, stream(seed, "pretrain"))
    return sched, target, net


@pytest.fixture(scope="module")
def pretrained_lab():
    cfg = ExperimentConfig(schema_version=1, pretrain={"steps": 1500})
    return (cfg,) + _pretrained(cfg, 0)


@pytest.fixture(scope="module")
def pretrained_seeds():
    cfg = ExperimentConfig(schema_version=1, pretrain={"steps": 1500})
    cache = {}

    def get(seed):
        if seed not in cache:
            cache[seed] = _pretrained(cfg, seed)
        return (cfg,) + cache[seed]

    return get


@pytest.mark.slow
def test_weights_stay_closest_to_one_mid_chain(pretrained_lab):
    cfg, sched, target, net = pretrained_lab
    rng = stream(0, "curve")
    c = rng.integers(0, target.n_conditions, size=128)
    rows = weight_curve(net, target.sample(128, rng, c), c, sched, 10, rng)
    assert mean_abs_log_weight(rows, 501, 600) < mean_abs_log_weight(rows, 2, 100)


@pytest.mark.slow
def test_short_sdpo_run_keeps_reward(pretrained_lab):
    cfg, sched, target, net = pretrained_lab
    pairs = gen_pairs(net, target, 200, sched, stream(0, "pairs"))
    baseline = mean_reward(net, target, sched, stream(0, "reward"))
    res = align(net, net, pairs, cfg.run_config(seed=0).model_copy(update={"steps": 100}), sched, stream(0, "align"))
    assert mean_reward(res.net, target, sched, stream(0, "reward")) >= baseline - 0.02 * abs(baseline)


@pytest.mark.slow
@pytest.mark.parametrize("seed", SEEDS)
def test_unlike_winners_get_lower_weights_than_on_policy(seed):
    # a weaker generator on a coarse chain, where early-t transitions carry the mismatch
    cfg = ExperimentConfig(
        schema_version=1,
        schedule={"T": 50, "beta_start": 0.002, "beta_end": 0.4},
        pretrain={"steps": 1500, "mean_scale": 2.5},
    )
    sched, target, net = _pretrained(cfg, seed)
    on_policy, unlike = compare_unlike(net, target, sched, 128, 10, stream(seed, "compare-unlike"))
    assert unlike_weight_ratio(on_policy, unlike) <= 0.95


@pytest.mark.slow
@pytest.mark.parametrize("seed", SEEDS)
def test_sdpo_holds_reward_at_twice_the_step_budget(pretrained_seeds, seed):
    cfg, sched, target, net = pretrained_seeds(seed)
    pairs = gen_pairs(net, target, 1000, sched, stream(seed, "pairs"))
    run_cfg = cfg.run_config(seed, "sdpo")
    run_cfg = run_cfg.model_copy(update={"steps": 2 * run_cfg.steps})
    trajectory = stability_run(net, target, sched, run_cfg, pairs, eval_every=250, reward_samples=256)
    assert [r.step for r in trajectory] == [0, 250, 500, 750, 1000]
    assert trajectory[-1].mean_reward >= trajectory[0].mean_reward


@pytest.mark.slow
def test_sdpo_final_reward_varies_less_across_beta_than_dpo(pretrained_lab):
    cfg, sched, target, net = pretrained_lab
    rows = beta_sweep(net, target, sched, cfg.run_config(0), seeds=SEEDS, n_pairs=1000)
    for seed in SEEDS:
        assert reward_spread(rows, "sdpo", seed) < reward_spread(rows, "dpo", seed)


@pytest.mark.slow
@pytest.mark.parametrize("seed", SEEDS)
def test_iterative_sdpo_does_not_collapse_over_ten_rounds(pretrained_seeds, seed):
    cfg, sched, target, net = pretrained_seeds(seed)
    it = cfg.iterate
    res = iterative_align(
        net,
        net.copy(),
        target,
        sched,
        cfg.run_config(seed, "sdpo"),
        stream(seed, "iterate"),
        rounds=it.rounds,
        pairs_per_round=it.pairs_per_round,
        epochs=it.epochs,
    )
    first, last = res.rounds[1].mean_reward, res.rounds[-1].mean_reward
    assert len(res.rounds) == 11
    assert last >= first - 0.02 * abs(first)


@pytest.mark.slow
def test_density_difference_turns_positive_mid_chain(pretrained_lab):
    cfg, sched, target, net = pretrained_lab
    pairs = gen_pairs(net, target, 256, sched, stream(0, "pairs"))
    trace = DensityTrace(pairs, 500, 600, sched, stream(0, "density"))
    run_cfg = cfg.run_config(0, "sdpo").model_copy(update={"loss": cfg.loss.model_copy(update={"timestep_window": (400, 700)})})
    align(net, net.copy(), pairs, run_cfg, sched, stream(0, "align"), hooks=[trace])
    assert trace.rows[-1].difference > trace.rows[0].difference
    assert trace.rows[-1].difference > 0.0
