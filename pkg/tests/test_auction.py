import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bidopt.auction import (
    CampaignState,
    Impression,
    Impressions,
    PlatformDuals,
    ideal_pace,
    platform_bid,
    read_hour_logs,
    read_impressions,
    realized_cpa,
    replay_hour,
    roll_hour,
    run_auction,
    run_day,
    update_duals,
    write_hour_logs,
    write_impressions,
)


def imp(pctr=0.1, pcvr=0.1, ppay=100.0, wp=1.0, hour=0, id=0):
    return Impression(id, hour, pctr, pcvr, ppay, wp)


def random_stream(seed, n=300, hours=24):
    rng = np.random.default_rng(seed)
    return Impressions(
        np.arange(n), np.sort(rng.integers(0, hours, n)), rng.uniform(0.01, 0.2, n),
        rng.uniform(0.01, 0.2, n), rng.lognormal(4, 0.5, n), rng.lognormal(-0.5, 0.8, n),
    )


# platform_bid

def test_bid_without_cpa_dual_is_value():
    i = imp()
    assert platform_bid(i, PlatformDuals(p=1.0, q=0.0), C=50.0) == pytest.approx(i.value, rel=1e-15)


def test_bid_arithmetic():
    assert platform_bid(imp(), PlatformDuals(p=0.0, q=1.0), C=50.0) == pytest.approx(1.5, abs=1e-12)


def test_bid_increasing_in_C():
    d = PlatformDuals(p=0.7, q=0.3)
    bids = [platform_bid(imp(), d, c) for c in (1.0, 2.0, 10.0, 100.0)]
    assert all(a < b for a, b in zip(bids, bids[1:]))


def test_bid_floor_applied():
    d = PlatformDuals(p=0.0, q=0.0)
    assert d.floored
    assert np.isfinite(platform_bid(imp(), d, 10.0))


def test_bid_rejects_nonpositive_target():
    with pytest.raises(ValueError):
        platform_bid(imp(), PlatformDuals(), 0.0)


def test_impression_validation():
    with pytest.raises(ValueError):
        imp(pctr=1.5)
    with pytest.raises(ValueError):
        imp(wp=0.0)
    with pytest.raises(ValueError):
        imp(hour=24)


# run_auction

def test_auction_examples():
    assert run_auction(5.0, 3.0) == (True, 3.0)
    assert run_auction(3.0, 3.0) == (False, 0.0)
    assert run_auction(0.0, 3.0) == (False, 0.0)


# update_duals

def _state(**kw):
    s = CampaignState(budget=kw.pop("budget", 100.0), target=kw.pop("target", 10.0), **kw)
    return s


def test_duals_unchanged_on_pace_and_on_target():
    s = _state()
    s.cost = 100.0 * s.pace[5]
    s.conversions = s.cost / 10.0
    d = PlatformDuals(p=0.5, q=0.5)
    assert update_duals(d, s, 5) == d


def test_overspend_raises_p():
    s = _state()
    s.cost = 90.0
    s.conversions = 9.0
    d = update_duals(PlatformDuals(p=0.5, q=0.5), s, 2)
    assert d.p > 0.5 and d.q == 0.5


def test_cpa_double_target_raises_q_by_step():
    s = _state()
    s.cost = 100.0 * s.pace[3]
    s.conversions = s.cost / 20.0
    d = update_duals(PlatformDuals(p=0.5, q=0.5, eta_q=0.2), s, 3)
    assert d.q == pytest.approx(0.7, abs=1e-15)


def test_duals_stay_nonnegative():
    s = _state()
    s.cost = 0.0
    d = update_duals(PlatformDuals(p=0.01, q=0.0), s, 23)
    assert d.p == 0.0 and d.q == 0.0


# realized_cpa

def test_realized_cpa_examples():
    s = _state()
    assert realized_cpa(s) is None
    s.cost, s.conversions = 2.0, 0.04
    assert realized_cpa(s) == pytest.approx(50.0)
    s.cost, s.conversions = 6.0, 0.08
    assert realized_cpa(s) == pytest.approx(75.0)


# roll_hour

def test_zero_impressions_hour():
    s = _state()
    entry = roll_hour(s, Impressions.empty(), 10.0)
    assert (entry.offered, entry.won, entry.cost, entry.gmv, entry.conversions) == (0, 0, 0.0, 0.0, 0.0)
    # behind pace by one hour's share, so p drops
    assert s.duals.p == pytest.approx(1.0 - 0.2 / 24)
    assert s.duals.q == 1.0


def test_win_count_monotone_in_target():
    stream = random_stream(0).for_hour(0)
    wins = []
    for c in (0.01, 1.0, 10.0, 100.0):
        s = _state(budget=1e9)
        wins.append(roll_hour(s, stream, c).won)
    assert wins == sorted(wins)
    assert wins[-1] > wins[0]


def test_budget_exhaustion_stops_spend():
    stream = random_stream(1, n=200, hours=1)
    s = _state(budget=5.0)
    entry = roll_hour(s, stream, 1e4)
    assert s.cost <= 5.0
    assert entry.skipped_budget > 0


def test_skip_rule_keeps_cheaper_later_impressions():
    stream = Impressions.from_list([imp(wp=3.0, id=0), imp(wp=9.0, id=1), imp(wp=1.0, id=2)])
    s = _state(budget=4.5)
    entry = roll_hour(s, stream, 1e4)
    assert entry.won == 2 and entry.cost == 4.0 and entry.skipped_budget == 1


def test_roll_hour_rejects_wrong_hour():
    with pytest.raises(ValueError):
        roll_hour(_state(), Impressions.from_list([imp(hour=3)]), 10.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), budget=st.floats(0.0, 200.0), c=st.floats(0.1, 500.0))
def test_day_invariants(seed, budget, c):
    stream = random_stream(seed)
    s = _state(budget=budget)
    logs = run_day(s, stream, [c] * 24)
    assert s.cost <= budget
    assert np.isclose(sum(h.cost for h in logs), s.cost, rtol=0, atol=1e-9)
    costs = np.cumsum([h.cost for h in logs])
    assert np.all(np.diff(costs) >= 0)
    assert all(h.won <= h.offered and h.cost >= 0 and h.gmv >= 0 for h in logs)
    assert np.isclose(sum(h.gmv for h in logs), s.gmv, rtol=0, atol=1e-9)


def test_accounting_identity_exact():
    stream = random_stream(3)
    s = _state(budget=80.0)
    logs = run_day(s, stream, [12.0] * 24)
    total_cost = 0.0
    total_gmv = 0.0
    for h in logs:
        total_cost += h.cost
        total_gmv += h.gmv
    assert total_cost == s.cost and total_gmv == s.gmv


def test_won_set_monotone_in_C_with_frozen_duals():
    stream = random_stream(4, hours=1)
    d = PlatformDuals(p=0.6, q=0.4)
    prev = None
    for c in (1.0, 5.0, 20.0, 80.0):
        won = replay_hour(stream, d, c, 0.0, 1e12).won
        if prev is not None:
            assert np.all(won[prev])
        prev = won


def test_day_is_deterministic():
    stream = random_stream(5)
    a, b = _state(budget=50.0), _state(budget=50.0)
    la, lb = run_day(a, stream, [8.0] * 24), run_day(b, stream, [8.0] * 24)
    assert la == lb


# formats

def test_impression_csv_round_trip(tmp_path):
    stream = random_stream(6, n=40)
    path = tmp_path / "imps.csv"
    write_impressions(path, stream)
    assert path.read_text().splitlines()[0] == "id,hour,pCTR,pCVR,ppay,wp"
    back = read_impressions(path)
    for col in ("id", "hour", "pctr", "pcvr", "ppay", "wp"):
        assert np.array_equal(getattr(back, col), getattr(stream, col))


def test_impression_csv_requires_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("0,0,0.1,0.1,10,1\n")
    with pytest.raises(ValueError, match="header"):
        read_impressions(path)


def test_hour_log_round_trip(tmp_path):
    s = _state(budget=50.0)
    logs = run_day(s, random_stream(7), [8.0] * 24)
    path = tmp_path / "hours.jsonl"
    write_hour_logs(path, logs)
    assert read_hour_logs(path) == logs
    assert len(path.read_text().splitlines()) == 24


def test_ideal_pace_validation():
    assert ideal_pace()[-1] == 1.0
    with pytest.raises(ValueError):
        ideal_pace([0.5] * 24)
