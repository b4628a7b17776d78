import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bidopt.auction import HOURS, PlatformDuals, replay_hour, split_hours
from bidopt.bench.config import ScenarioConfig
from bidopt.bench.synth import day_budget, synth_impressions
from bidopt.micro.control import behavior_day, control_day, run_controlled_day
from bidopt.micro.dt import (
    DecisionTransformer,
    MicroConfig,
    divergence_from_pid,
    dt_predict,
    load_policy,
    mdl_loss,
    save_policy,
    target_return,
    train_micro,
)
from bidopt.micro.fusion import FusionState, fuse, hindsight_reference, update_uncertainty
from bidopt.micro.mdp import (
    REWARD_QUANTUM,
    STATE_DIM,
    Trajectory,
    quantize_reward,
    read_trajectories,
    stack_trajectories,
    state_features,
    step_reward,
    write_trajectories,
)
from bidopt.micro.pid import PidGains, clamp_action, pacing_errors, pid_action
from bidopt.substrate import tensor as T
from bidopt.substrate.gradcheck import grad_check

SCENARIO = ScenarioConfig(campaigns=2, impressions_per_day=400)


def day(campaign=0, d=0, scenario=SCENARIO):
    return synth_impressions(scenario, campaign, d), day_budget(scenario, campaign)


def logged(n_days=4, noise=0.1, constant=None, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for d in range(n_days):
        imps, B = day(d % 2, d)
        for k in range(2):
            res = behavior_day(imps, B, 60.0, 100.0, rng, noise=noise if k else 0.0, constant=constant,
                               campaign=d % 2, day=d, volume_curve=SCENARIO.volume_curve)
            out.append(res.trajectory)
    return out


def tiny(seed=0, **kw):
    return MicroConfig(**{"embed": 8, "layers": 1, "heads": 2, "hidden": 8, "seed": seed, **kw})


# reward and state

def test_reward_examples():
    assert step_reward(50.0, 10.0, 50.0, 20.0) == 1.0
    assert step_reward(0.0, 30.0, 50.0, 20.0) == -0.5
    assert step_reward(25.0, 20.0, 50.0, 20.0) == 0.5


def test_reward_floors_zero_reference(caplog):
    assert step_reward(3.0, 1.0, 0.0, 10.0) == 3.0
    assert "not positive" in caplog.text


def test_reward_on_grid():
    r = step_reward(1.0 / 3.0, 0.0, 1.0, 1.0)
    assert r / REWARD_QUANTUM == int(r / REWARD_QUANTUM)
    assert abs(r - 1.0 / 3.0) <= REWARD_QUANTUM


def test_state_features_clamped():
    s = state_features(5, 10.0, 100.0, 1e9, 1.0, 1e9, 1.0, "tROI", 1.1, 0.1)
    assert s.shape == (STATE_DIM,)
    assert np.all(np.abs(s) <= 5.0)
    assert s[7] == 1.0 and s[6] == s[8] == 0.0
    with pytest.raises(ValueError):
        state_features(24, 1.0, 0.0, 0.0, 1.0, None, 1.0, "tCPA", 1.0, 0.0)


@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=24))
def test_return_to_go_identity(raw):
    rewards = [quantize_reward(r) for r in raw]
    n = len(rewards)
    tr = Trajectory(0, 0, 1.0, 1.0, 1.0, np.zeros((n, STATE_DIM)), np.ones(n), rewards, np.ones(n))
    R = tr.returns_to_go
    assert np.array_equal(R - np.append(R[1:], 0.0), np.asarray(rewards))
    tr.check()


def test_trajectory_rejects_out_of_range_action():
    with pytest.raises(ValueError):
        Trajectory(0, 0, 1.0, 1.0, 1.0, np.zeros((1, STATE_DIM)), [1.3], [0.0], [1.0])


def test_trajectory_store_round_trip(tmp_path):
    trajs = logged(2)
    write_trajectories(tmp_path / "t.jsonl", trajs)
    back = read_trajectories(tmp_path / "t.jsonl")
    assert len(back) == len(trajs)
    for a, b in zip(trajs, back):
        assert np.array_equal(a.states, b.states) and np.array_equal(a.rewards, b.rewards)
        assert np.array_equal(a.actions, b.actions) and np.array_equal(a.pid_actions, b.pid_actions)


def test_trajectory_store_rejects_gaps(tmp_path):
    write_trajectories(tmp_path / "t.jsonl", logged(1)[:1])
    lines = (tmp_path / "t.jsonl").read_text().splitlines()
    (tmp_path / "t.jsonl").write_text("\n".join(lines[:3] + lines[4:]) + "\n")
    with pytest.raises(ValueError, match="contiguous"):
        read_trajectories(tmp_path / "t.jsonl")


# pacing rule

def test_pid_on_pace_is_neutral():
    gains = PidGains.for_budget(240.0)
    curve = np.asarray(gains.budget_curve)
    assert all(pid_action(gains, curve, t) == 1.0 for t in range(HOURS))


def test_pid_proportional_example():
    gains = PidGains(1.0, 0.0, tuple(np.linspace(10, 240, HOURS)))
    costs = np.asarray(gains.budget_curve) + 0.1 * 240.0
    assert pid_action(gains, costs, 3) == pytest.approx(0.9, abs=1e-12)


def test_pid_clamps_and_direction():
    gains = PidGains.for_budget(100.0)
    assert pid_action(gains, [1e6], 1) == 0.8
    assert pid_action(gains, [0.0] * 12, 12) > 1.0
    assert pid_action(gains, [], 0) == 1.0
    with pytest.raises(ValueError):
        pid_action(gains, [0.0], 2)


def test_pid_integral_term():
    gains = PidGains(0.0, 1.0, tuple(np.full(HOURS, 0.0) + np.arange(HOURS)))
    costs = np.arange(HOURS) + 0.5
    e = pacing_errors(gains, costs[:4])
    assert pid_action(gains, costs, 4) == pytest.approx(float(clamp_action(1.0 - e.sum())))


def test_budget_curve_follows_volume():
    curve = [1.0 / HOURS] * HOURS
    gains = PidGains.for_budget(48.0, curve)
    assert gains.budget_curve[-1] == 48.0
    assert gains.budget_curve[0] == pytest.approx(2.0)
    with pytest.raises(ValueError):
        PidGains(0.7, 0.1, (1.0, 0.5) + (1.0,) * 22)


# fusion

def test_fuse_boundaries():
    assert fuse(1.1, 0.9, 0.0) == 1.1
    assert fuse(1.1, 0.9, 1.0) == 0.9
    assert fuse(1.1, 0.9, 3.0) == 0.9
    assert fuse(1.1, 0.9, 0.3) == pytest.approx(1.04, abs=1e-12)
    with pytest.raises(ValueError):
        fuse(1.0, 1.0, -0.1)


@given(st.floats(0.8, 1.2), st.floats(0.8, 1.2), st.floats(0, 10))
def test_fuse_stays_in_range(a, b, m):
    assert 0.8 - 1e-12 <= fuse(a, b, m) <= 1.2 + 1e-12


def test_uncertainty_window():
    f = FusionState()
    assert f.mape == 0.0
    for err in (0.1, 0.2, 0.3):
        f = update_uncertainty(f, 1.0 + err, 1.0)
    assert f.mape == pytest.approx(0.2)
    f = update_uncertainty(f, 1.0, 1.0)
    assert len(f.errors) == 3
    assert f.mape == pytest.approx((0.2 + 0.3) / 3)
    with pytest.raises(ValueError):
        update_uncertainty(f, 1.0, 0.0)


def brute_reference(hour, duals, c_ma, B, pace):
    best = None
    for a in np.linspace(0.8, 1.2, 41):
        out = replay_hour(hour, duals, c_ma * a, 0.0, B)
        if out.cost <= pace:
            key = (out.gmv, -abs(a - 1.0), -a)
            best = max(best, (key, a)) if best else (key, a)
    return 0.8 if best is None else best[1]


@pytest.mark.parametrize("c_ma", [5.0, 20.0, 60.0])
def test_hindsight_reference_matches_brute_force(c_ma):
    imps, B = day()
    hour = split_hours(imps)[12]
    duals = PlatformDuals(0.5, 0.5)
    full = replay_hour(hour, duals, c_ma * 1.2, 0.0, B).cost
    for pace in (0.0, 0.5 * full, full, B):
        assert hindsight_reference(hour, duals, c_ma, 0.0, B, pace) == pytest.approx(
            brute_reference(hour, duals, c_ma, B, pace), abs=1e-12)


def test_hindsight_reference_infeasible_is_lowest():
    imps, B = day()
    hour = split_hours(imps)[12]
    assert hindsight_reference(hour, PlatformDuals(0.5, 0.5), 60.0, 0.0, B, -1.0) == 0.8


# sequence policy

def test_policy_output_range_and_shapes():
    model = DecisionTransformer.init(tiny(), np.random.default_rng(0))
    rng = np.random.default_rng(1)
    out = model.predict(rng.normal(0, 50, (3, HOURS)), rng.normal(0, 5, (3, HOURS, STATE_DIM)),
                        rng.uniform(0.8, 1.2, (3, HOURS)))
    assert out.shape == (3, HOURS)
    assert np.all((out >= 0.8) & (out <= 1.2))
    with pytest.raises(ValueError):
        model.predict(np.zeros((1, 25)), np.zeros((1, 25, STATE_DIM)), np.ones((1, 25)))
    with pytest.raises(ValueError):
        model.predict(np.full((1, 2), np.nan), np.zeros((1, 2, STATE_DIM)), np.ones((1, 2)))


def test_policy_is_causal():
    model = DecisionTransformer.init(tiny(layers=2), np.random.default_rng(0))
    rng = np.random.default_rng(2)
    R, S, A = rng.normal(size=(1, HOURS)), rng.normal(size=(1, HOURS, STATE_DIM)), rng.uniform(0.8, 1.2, (1, HOURS))
    base = model.predict(R, S, A)
    R2, S2, A2 = R.copy(), S.copy(), A.copy()
    R2[0, 10:] += 5.0
    S2[0, 10:] += 1.0
    A2[0, 9:] = 0.8
    other = model.predict(R2, S2, A2)
    assert np.array_equal(base[0, :9], other[0, :9])
    assert np.array_equal(base[0, 9], other[0, 9])  # own action token is not visible


def test_dt_predict_prefix_checks():
    model = DecisionTransformer.init(tiny(), np.random.default_rng(0))
    a = dt_predict(model, [5.0, 4.0], np.zeros((2, STATE_DIM)), [1.0])
    assert 0.8 <= a <= 1.2
    with pytest.raises(ValueError):
        dt_predict(model, [5.0, 4.0], np.zeros((2, STATE_DIM)), [1.0, 1.0])


def test_mdl_loss_beta_zero_is_imitation():
    rng = np.random.default_rng(0)
    pred = T.Tensor(rng.uniform(0.8, 1.2, (2, 5)))
    a, p = rng.uniform(0.8, 1.2, (2, 5)), rng.uniform(0.8, 1.2, (2, 5))
    mask = np.ones((2, 5), dtype=bool)
    total, (imit, _) = mdl_loss(pred, a, p, mask, 0.0)
    assert total.value == imit.value
    total, (imit, anchor) = mdl_loss(pred, a, p, mask, 0.5)
    assert total.value == pytest.approx(imit.value + 0.5 * anchor.value, abs=1e-12)
    with pytest.raises(ValueError):
        mdl_loss(pred, a, p, mask, -1.0)


@pytest.mark.parametrize("beta", [0.0, 0.1, 10.0])
def test_mdl_loss_gradients(beta):
    model = DecisionTransformer.init(tiny(), np.random.default_rng(3))
    data = stack_trajectories(logged(1))

    def f(params):
        pred = model.forward(data["returns"], data["states"], data["actions"])
        return mdl_loss(pred, data["actions"], data["pid_actions"], data["mask"], beta)[0]

    rep = grad_check(f, model.params, eps=1e-5)
    assert rep.max_rel_error < 1e-4
    assert not rep.nonfinite


def test_target_return_is_90th_percentile():
    trajs = logged(3)
    assert target_return(trajs) == pytest.approx(np.percentile([t.total_return for t in trajs], 90))


def test_behaviour_cloning_constant_action():
    trajs = logged(6, constant=1.1)
    model, rep = train_micro(trajs, MicroConfig(epochs=40, lr=0.2, beta=0.0, seed=0))
    data = stack_trajectories(trajs)
    pred = model.predict(data["returns"], data["states"], data["actions"])
    assert np.max(np.abs(pred - 1.1)) < 0.02
    assert rep.imitation[-1] < rep.imitation[0]


def test_training_deterministic_and_checkpoint(tmp_path):
    trajs = logged(2)
    m1, r1 = train_micro(trajs, tiny(epochs=2, lr=0.1))
    m2, r2 = train_micro(trajs, tiny(epochs=2, lr=0.1))
    assert r1.to_dict() == r2.to_dict()
    save_policy(tmp_path / "p.json", m1, r1)
    back = load_policy(tmp_path / "p.json")
    data = stack_trajectories(trajs)
    assert np.array_equal(back.predict(data["returns"], data["states"], data["actions"]),
                          m1.predict(data["returns"], data["states"], data["actions"]))
    assert back.target_return == m1.target_return


def test_training_rejects_bad_inputs():
    with pytest.raises(ValueError):
        train_micro([], tiny())
    with pytest.raises(ValueError):
        train_micro(logged(1), tiny(beta=-1.0))


def test_larger_beta_pulls_toward_pid():
    trajs = logged(4, noise=0.2)
    d = [divergence_from_pid(train_micro(trajs, tiny(epochs=6, lr=0.2, beta=b))[0], trajs) for b in (0.0, 10.0)]
    assert d[1] < d[0]


# control loop

def test_pid_day_on_paced_stream_is_neutral():
    imps, B = day()
    res = run_controlled_day(imps, B, 60.0, 100.0, lambda t, a_pid, a_dt, m: 1.0)
    assert np.all(res.c_mi == 1.0)
    for log in res.logs:
        assert log.c_applied == 60.0


def test_control_modes():
    imps, B = day()
    model = DecisionTransformer.init(tiny(), np.random.default_rng(0))
    model.target_return = 10.0
    pid = control_day(imps, B, 60.0, "PID", 100.0)
    dt = control_day(imps, B, 60.0, "DT", 100.0, model)
    pinned = control_day(imps, B, 60.0, "FUSED", 100.0, model, pinned_mape=0.0)
    fused = control_day(imps, B, 60.0, "FUSED", 100.0, model)
    assert np.array_equal(dt.c_mi, pinned.c_mi)
    assert np.array_equal(pid.c_mi, pid.a_pid)
    assert np.all(np.isnan(pid.a_dt))
    assert np.all((fused.c_mi >= 0.8) & (fused.c_mi <= 1.2))
    assert fused.mape[0] == 0.0 and np.all(fused.mape >= 0)
    for res in (pid, dt, fused):
        res.trajectory.check()
        assert len(res.trajectory) == HOURS
        assert res.cost <= B + 1e-9
    with pytest.raises(ValueError):
        control_day(imps, B, 60.0, "DT", 100.0)
    with pytest.raises(ValueError):
        control_day(imps, B, 60.0, "BOTH", 100.0, model)


def test_behaviour_noise_is_bounded():
    imps, B = day()
    res = behavior_day(imps, B, 60.0, 100.0, np.random.default_rng(0), noise=0.1)
    assert np.all(np.abs(res.c_mi - np.clip(res.a_pid, 0.8, 1.2)) <= 0.1 + 1e-12)
    assert np.all((res.c_mi >= 0.8) & (res.c_mi <= 1.2))


def test_won_ids_follow_purchase_order():
    imps, B = day()
    res = control_day(imps, B, 60.0, "PID", 100.0)
    rows = {int(i): k for k, i in enumerate(imps.id)}
    order = [rows[int(i)] for i in res.won_ids]
    assert order == sorted(order)
    assert imps.wp[order].sum() == pytest.approx(res.cost)
