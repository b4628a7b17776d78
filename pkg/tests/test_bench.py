import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError

from bidopt.auction import Impressions
from bidopt.bench.config import BenchConfig, ScenarioConfig, ShiftSchedule, dump_default, load_config
from bidopt.bench.metrics import DayOutcome, constraint_satisfaction, regression_metrics
from bidopt.bench.oracle import achieved_value, feasible, impression_values, oracle_value
from bidopt.bench.runner import (
    VARIANTS,
    emit_report,
    emit_sweep,
    macro_config,
    run_benchmark,
    sweep_segments,
)
from bidopt.bench.synth import campaign_curve, day_budget, synth_impressions, synth_macro_records, true_tcpa
from bidopt.macro.data import convert_to_tcpa
from bidopt.macro.train import train_macro
from bidopt.micro.control import control_day


def tiny_config(**kw):
    doc = {
        "scenario": {"campaigns": 2, "days": 5, "impressions_per_day": 120},
        "macro_data": {"campaigns": 8, "days": 8},
        "macro": {"epochs": 2, "segments": 4},
        "micro": {"epochs": 1, "train_days": 3, "noisy_copies": 1},
        "bench": {"seeds": 2, "variants": ["KBD", "KBD w/o DT", "KBD w/o PID", "w/o GLA"]},
    }
    for k, v in kw.items():
        doc[k] = {**doc.get(k, {}), **v} if isinstance(v, dict) else v
    return BenchConfig.model_validate(doc)


def random_instance(seed, n):
    rng = np.random.default_rng(seed)
    return Impressions(
        np.arange(n), np.zeros(n, dtype=int), rng.uniform(0.05, 0.3, n), rng.uniform(0.05, 0.3, n),
        rng.lognormal(3, 0.5, n), rng.lognormal(0, 0.6, n),
    )


# synthetic worlds

def test_impressions_deterministic():
    cfg = ScenarioConfig(seed=4)
    a, b = synth_impressions(cfg, 1, 2), synth_impressions(cfg, 1, 2)
    for col in ("id", "hour", "pctr", "pcvr", "ppay", "wp"):
        assert np.array_equal(getattr(a, col), getattr(b, col))
    assert not np.array_equal(a.wp, synth_impressions(cfg, 1, 3).wp)


def test_shift_day_triples_prices():
    base = ScenarioConfig(impressions_per_day=10_000, shift=ShiftSchedule(enabled=False))
    shifted = ScenarioConfig(impressions_per_day=5_000, shift=ShiftSchedule(offset=0, period=1))
    normal, promo = synth_impressions(base, 0, 0), synth_impressions(shifted, 0, 0)
    assert len(promo) == 10_000
    assert promo.wp.mean() / normal.wp.mean() == pytest.approx(3.0, rel=0.05)


def test_shift_schedule_days():
    s = ShiftSchedule(period=7, offset=9)
    assert [d for d in range(30) if s.is_shift_day(d)] == [9, 16, 23]
    assert not ShiftSchedule(enabled=False).is_shift_day(9)


def test_volume_curve_all_at_midnight():
    curve = [1.0] + [0.0] * 23
    imps = synth_impressions(ScenarioConfig(volume_curve=curve), 0, 0)
    assert np.all(imps.hour == 0)


def test_macro_records_follow_curves():
    cfg = BenchConfig().macro_data.model_copy(update={"noise": 0.0, "conversion_noise": 0.0, "campaigns": 3})
    recs = synth_macro_records(cfg)
    assert len(recs) == 3 * cfg.days
    for r in recs:
        c = int(r.campaign_id[1:])
        assert convert_to_tcpa(r)[0] == pytest.approx(float(true_tcpa(cfg, c, r.cost)), rel=1e-9)
    assert all(r.strategy == "tCPA" for r in recs if r.day == cfg.days - 1)
    s, a, g = campaign_curve(cfg, 0)
    assert cfg.gamma_low <= g <= cfg.gamma_high


def test_day_budget_positive_and_scaled():
    cfg = ScenarioConfig()
    assert day_budget(cfg, 0) > 0
    assert day_budget(cfg.model_copy(update={"budget_fraction": 0.7}), 0) == pytest.approx(2 * day_budget(cfg, 0))


# config

def test_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("scenario:\n  campaign: 3\n")
    with pytest.raises(ValidationError):
        load_config(path)


def test_config_rejects_bad_curve():
    with pytest.raises(ValidationError):
        ScenarioConfig(volume_curve=[1.0] * 24)
    with pytest.raises(ValidationError):
        ScenarioConfig(pctr={"a": -1.0, "b": 2.0})


def test_config_round_trip_and_seed_override(tmp_path):
    dump_default(tmp_path / "d.yaml")
    cfg = load_config(tmp_path / "d.yaml", seed=11)
    assert cfg.seed == 11
    assert cfg.model_copy(update={"seed": 0}) == BenchConfig()
    assert cfg.digest() != BenchConfig().digest()
    assert len(BenchConfig().digest()) == 64


# oracle

def test_oracle_single_and_zero_budget():
    imps = Impressions([0], [0], [0.1], [0.5], [10.0], [1.0])
    assert oracle_value(imps, 5.0, 100.0).value == pytest.approx(0.5)
    assert oracle_value(imps, 0.0, 100.0).value == 0.0
    assert oracle_value(Impressions.empty(), 5.0, 1.0).value == 0.0


def test_oracle_infeasible_is_empty():
    imps = Impressions([0, 1], [0, 0], [0.1, 0.1], [0.01, 0.01], [10.0, 10.0], [5.0, 5.0])
    res = oracle_value(imps, 100.0, 1.0)
    assert res.value == 0.0 and not res.selected.any()


def brute_force(imps, budget, cap, kind="gmv"):
    v = impression_values(imps, kind)
    best = 0.0
    for mask in itertools.product([0, 1], repeat=len(v)):
        m = np.array(mask, dtype=bool)
        if feasible(imps.wp[m].sum(), imps.conv[m].sum(), budget, cap):
            best = max(best, v[m].sum())
    return best


@pytest.mark.parametrize("seed", range(4))
def test_oracle_matches_all_subsets(seed):
    imps = random_instance(seed, 12)
    budget, cap = float(imps.wp.sum() * 0.4), 25.0
    res = oracle_value(imps, budget, cap)
    assert not res.approximate
    assert res.value == pytest.approx(brute_force(imps, budget, cap), rel=1e-12)
    assert res.value == pytest.approx(impression_values(imps)[res.selected].sum(), rel=1e-12)
    assert oracle_value(imps, budget, cap, force_greedy=True).value <= res.value + 1e-9


def test_oracle_clicks_kind():
    imps = random_instance(9, 10)
    budget = float(imps.wp.sum() / 2)
    assert oracle_value(imps, budget, 1e9, "clicks").value == pytest.approx(brute_force(imps, budget, 1e9, "clicks"))
    with pytest.raises(ValueError):
        impression_values(imps, "revenue")


def test_oracle_large_instance_flagged():
    imps = random_instance(1, 40)
    assert oracle_value(imps, 10.0, 50.0).approximate
    with pytest.raises(ValueError):
        oracle_value(imps, 10.0, 50.0, exact_max=30)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 14))
def test_achieved_never_beats_oracle(seed, n):
    imps = random_instance(seed, n)
    rng = np.random.default_rng(seed)
    budget, cap = float(imps.wp.sum() * rng.uniform(0.1, 1.0)), float(rng.uniform(5, 60))
    star = oracle_value(imps, budget, cap).value
    order = rng.permutation(n)[: rng.integers(0, n + 1)]
    assert achieved_value(imps, imps.id[order], budget, cap) <= star + 1e-9


def test_achieved_value_prefix_rule():
    imps = Impressions([0, 1, 2], [0, 0, 0], [0.1] * 3, [0.5, 0.5, 0.0001], [10.0] * 3, [1.0, 1.0, 5.0])
    # the third purchase breaks the CPA cap, so only the first two count
    assert achieved_value(imps, [0, 1, 2], 100.0, 30.0) == pytest.approx(1.0)
    assert achieved_value(imps, [0, 1], 100.0, 30.0) == pytest.approx(1.0)
    assert achieved_value(imps, [0, 1, 2], 1.5, 30.0) == pytest.approx(0.5)
    assert achieved_value(imps, [], 100.0, 30.0) == 0.0


# metrics

def test_regression_metric_examples():
    m = regression_metrics([1.0, 2.0], [1.0, 2.0], [1.0, 1.0])
    assert (m.wmape, m.mape, m.perf10) == (0.0, 0.0, 1.0)
    m = regression_metrics([1.1], [1.0], [1.0])
    assert m.mape == pytest.approx(0.1) and m.perf10 == 1.0
    m = regression_metrics([1.1, 1.3], [1.0, 1.0], [1.0, 3.0])
    assert m.wmape == pytest.approx(0.25) and m.mape == pytest.approx(0.2)


def test_regression_metrics_exclude_zero_targets():
    m = regression_metrics([1.0, 5.0], [1.0, 0.0], [1.0, 1.0])
    assert m.excluded == 1 and m.mape == 0.0
    with pytest.raises(ValueError):
        regression_metrics([1.0], [1.0, 2.0], [1.0])


@given(st.lists(st.tuples(st.floats(0.1, 10), st.floats(0.1, 10)), min_size=1, max_size=30))
def test_uniform_cost_wmape_equals_mape(pairs):
    p, t = zip(*pairs)
    m = regression_metrics(p, t, [2.0] * len(p))
    assert m.wmape == pytest.approx(m.mape, rel=1e-12)


def test_constraint_satisfaction_counts():
    ok = DayOutcome(5.0, 10.0, 1.0, 10.0)
    over_budget = DayOutcome(11.0, 10.0, 5.0, 10.0)
    over_cpa = DayOutcome(5.0, 10.0, 0.1, 10.0)
    idle = DayOutcome(0.0, 10.0, 0.0, 10.0)
    assert constraint_satisfaction([ok, ok, idle]) == 1.0
    assert constraint_satisfaction([ok, ok, ok, over_budget]) == 0.75
    assert not over_cpa.satisfied
    assert np.isnan(constraint_satisfaction([]))


def test_tiny_budget_never_breaks_budget_clause():
    cfg = ScenarioConfig(impressions_per_day=300)
    imps = synth_impressions(cfg, 0, 0)
    for B in (1e-3, 0.5, 2.0):
        res = control_day(imps, B, 50.0, "PID", 100.0)
        assert res.cost <= B


# runner

def test_variant_wiring():
    assert VARIANTS["KBD w/o PID"][1] == "DT"
    assert VARIANTS["KBD w/o DT"][1] == "PID"
    assert VARIANTS["w/o GLA"][0] == {"use_gla": False}
    assert macro_config(BenchConfig(), 3, use_gla=False).use_gla is False


def test_benchmark_report_is_byte_stable(tmp_path):
    cfg = tiny_config()
    a, b = run_benchmark(cfg), run_benchmark(cfg)
    emit_report(a, tmp_path / "a")
    emit_report(b, tmp_path / "b")
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
    assert a["config_sha256"] == cfg.digest()
    assert a["replicate_seeds"] == [0, 1]
    for v in cfg.bench.variants:
        for row in a["variants"][v]["per_seed"]:
            assert 0.0 <= row["r_ratio"] <= 1.01
            assert 0.0 <= row["perf10"] <= 1.0
    assert set(a["paired_vs_KBD"]) == set(cfg.bench.variants) - {"KBD"}
    header = (tmp_path / "a" / "gmv.csv").read_text().splitlines()[0]
    assert header == "seed," + ",".join(cfg.bench.variants)


def test_empty_variant_set(tmp_path):
    report = run_benchmark(tiny_config(), [])
    assert report["variants"] == {} and report["paired_vs_KBD"] == {}
    paths = emit_report(report, tmp_path)
    assert json.loads(paths[0].read_text())["variants"] == {}


def test_unknown_variant_rejected():
    with pytest.raises(ValueError):
        run_benchmark(tiny_config(), ["KBD w/o everything"])


def test_sweep_single_point_matches_benchmark(tmp_path):
    cfg = tiny_config(macro={"segments": 5}, bench={"seeds": 1, "variants": ["KBD"]})
    sweep = sweep_segments(cfg, [5])
    report = run_benchmark(cfg)
    assert sweep["wmape"]["5"] == report["variants"]["KBD"]["per_seed"][0]["wmape"]
    assert sweep["spread"] == 0.0
    doc, table = emit_sweep(sweep, tmp_path)
    assert table.read_text().splitlines()[0] == "segments,wmape"
    with pytest.raises(ValueError):
        sweep_segments(cfg, [1, 40])


def test_macro_wmape_matches_direct_training():
    cfg = tiny_config(bench={"seeds": 1, "variants": ["w/o GLA"]})
    report = run_benchmark(cfg)
    records = synth_macro_records(cfg.macro_data.model_copy(update={"seed": 0}))
    _, rep = train_macro(records, macro_config(cfg, 0, use_gla=False))
    assert report["variants"]["w/o GLA"]["per_seed"][0]["wmape"] == rep.wmape
