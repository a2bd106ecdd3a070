import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cotransport.env import (BatchEnv, EnvError, EnvState, RobotState,
                             StepOutcome, TRACE_COLUMNS, TransportEnv,
                             cost_collaboration, cost_collision,
                             detect_collisions, enforce_link, observe,
                             reward_destination, reward_move_forward,
                             trace_row, wrap_angle, write_trace)
from cotransport.geometry import Rect
from cotransport.scenario import EnvParams, ScenarioSpec, make_scenario

L = 1.2


def open_scenario(goal=(100.0, 0.0), cap=200, arrival=0.3):
    # no obstacles: pure rigid-body physics
    return ScenarioSpec(kind="open", obstacles=(),
                        start_region=Rect((0.0, 0.0), (0.5, 0.5)),
                        goal=goal, arrival_radius=arrival,
                        episode_cap=cap).validate()


def robot(pos, vel=(0.0, 0.0), yaw=0.0):
    p = np.asarray(pos, dtype=float)
    return RobotState(p.copy(), p.copy(), np.asarray(vel, dtype=float), yaw, 0.0,
                      np.zeros(4))


def test_wrap_angle():
    assert wrap_angle(0.0) == 0.0
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)  # (-pi, pi]
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-1.5 * math.pi) == pytest.approx(0.5 * math.pi)


@given(st.floats(-50, 50))
def test_wrap_angle_range(theta):
    w = wrap_angle(theta)
    assert -math.pi < w <= math.pi


def test_reward_indicators():
    goal = np.array([5.0, 0.0])
    assert reward_move_forward(np.array([1.0, 0.0]), np.array([0.0, 0.0]), goal, 1.0) == 1.0
    assert reward_move_forward(np.array([0.0, 0.0]), np.array([1.0, 0.0]), goal, 1.0) == 0.0
    # no motion: strict inequality fails
    assert reward_move_forward(np.array([1.0, 0.0]), np.array([1.0, 0.0]), goal, 1.0) == 0.0
    assert reward_destination(np.array([4.8, 0.0]), goal, 0.3, 10.0) == 10.0
    assert reward_destination(np.array([4.5, 0.0]), goal, 0.3, 10.0) == 0.0
    # the boundary itself is outside: strict inequality
    assert reward_destination(np.array([0.3, 0.0]), np.zeros(2), 0.3, 10.0) == 0.0


def test_cost_indicators():
    assert cost_collaboration(1.0, -1.0, 1.0) == 1.0
    assert cost_collaboration(1.0, 1.0, 1.0) == 0.0
    assert cost_collaboration(0.0, -1.0, 1.0) == 0.0  # zero component is not opposition
    probes = np.zeros(8)
    assert cost_collision(probes, 5.0) == 0.0
    probes[2] = 0.05
    probes[7] = 0.2
    assert cost_collision(probes, 5.0) == 10.0


def test_enforce_link_stretch_and_compress():
    # too close: 0.5 apart, pushed out to L about the same midpoint
    st_ = EnvState(robot((0.0, 0.0)), robot((0.5, 0.0)), L)
    out = enforce_link(st_)
    np.testing.assert_allclose(out.robot_a.position, [0.25 - 0.6, 0.0], atol=1e-12)
    np.testing.assert_allclose(out.robot_b.position, [0.25 + 0.6, 0.0], atol=1e-12)
    # too far: 1.5 apart, pulled in
    st_ = EnvState(robot((0.0, 0.0)), robot((1.5, 0.0)), L)
    out = enforce_link(st_)
    np.testing.assert_allclose(out.robot_a.position, [0.15, 0.0], atol=1e-12)
    np.testing.assert_allclose(out.robot_b.position, [1.35, 0.0], atol=1e-12)
    assert np.linalg.norm(out.robot_b.position - out.robot_a.position) == pytest.approx(L)


def test_enforce_link_velocity_projection():
    # head-on unit velocities along the link cancel exactly
    st_ = EnvState(robot((0.0, 0.0), vel=(1.0, 0.0)), robot((1.2, 0.0), vel=(-1.0, 0.0)), L)
    out = enforce_link(st_)
    np.testing.assert_allclose(out.robot_a.velocity, [0.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(out.robot_b.velocity, [0.0, 0.0], atol=1e-12)
    # transverse components pass through untouched
    st_ = EnvState(robot((0.0, 0.0), vel=(0.0, 2.0)), robot((1.2, 0.0), vel=(0.0, -1.0)), L)
    out = enforce_link(st_)
    np.testing.assert_allclose(out.robot_a.velocity, [0.0, 2.0], atol=1e-12)
    np.testing.assert_allclose(out.robot_b.velocity, [0.0, -1.0], atol=1e-12)


def test_enforce_link_midpoint_preserved():
    rng = np.random.default_rng(0)
    for _ in range(100):
        pa, pb = rng.normal(size=2), rng.normal(size=2)
        st_ = EnvState(robot(pa, vel=rng.normal(size=2)),
                       robot(pb, vel=rng.normal(size=2)), L)
        before = st_.midpoint
        out = enforce_link(st_)
        np.testing.assert_allclose(out.midpoint, before, atol=1e-12)
        d = np.linalg.norm(out.robot_b.position - out.robot_a.position)
        assert abs(d - L) <= 1e-9
        # relative velocity has no component left along the link
        u = (out.robot_b.position - out.robot_a.position) / d
        assert abs((out.robot_b.velocity - out.robot_a.velocity) @ u) <= 1e-9


def test_enforce_link_coincident_error():
    st_ = EnvState(robot((1.0, 1.0)), robot((1.0, 1.0)), L)
    with pytest.raises(EnvError, match="coincident"):
        enforce_link(st_)


def test_probe_depths_against_rect():
    wall = Rect((0.45, 0.0), (0.2, 1.0))
    sc = ScenarioSpec(kind="open", obstacles=(wall,),
                      start_region=Rect((-3.0, 0.0), (0.1, 0.1)),
                      goal=(100.0, 0.0)).validate()
    st_ = EnvState(robot((0.0, 0.0)), robot((0.0, 10.0)), L)
    pa, pb = detect_collisions(st_, sc, 0.35)
    # only the forward probe of robot a reaches the wall face at x=0.25
    np.testing.assert_allclose(pa, [0.1, 0.0, 0.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(pb, np.zeros(4), atol=1e-12)
    # quarter-turn moves the contact to the right-hand probe
    st_.robot_a.yaw = math.pi / 2
    pa, _ = detect_collisions(st_, sc, 0.35)
    np.testing.assert_allclose(pa, [0.0, 0.0, 0.0, 0.1], atol=1e-9)


def test_reset_is_collision_free_and_link_exact():
    env = TransportEnv(make_scenario("gate"), EnvParams(), np.random.default_rng(7))
    for _ in range(20):
        obs = env.reset()
        assert obs.shape == (2, 18)
        s = env.state
        assert s.robot_a.probes.max() == 0.0
        assert s.robot_b.probes.max() == 0.0
        d = np.linalg.norm(s.robot_b.position - s.robot_a.position)
        assert abs(d - L) <= 1e-9
        assert s.step_index == 0 and not s.terminal


def test_step_requires_reset_and_valid_actions():
    env = TransportEnv(open_scenario(), EnvParams(), np.random.default_rng(0))
    with pytest.raises(EnvError, match="reset"):
        env.step(np.zeros((2, 3)))
    env.reset()
    with pytest.raises(EnvError, match="shape"):
        env.step(np.zeros((3, 2)))
    bad = np.zeros((2, 3))
    bad[0, 0] = np.nan
    with pytest.raises(EnvError, match="finite"):
        env.step(bad)


def test_link_preserved_under_random_actions():
    env = TransportEnv(open_scenario(), EnvParams(), np.random.default_rng(1))
    env.reset()
    rng = np.random.default_rng(2)
    for _ in range(200):
        out = env.step(rng.uniform(-2.0, 2.0, size=(2, 3)))
        s = env.state
        d = np.linalg.norm(s.robot_b.position - s.robot_a.position)
        assert abs(d - L) <= 1e-9
        assert out.observations.shape == (2, 18)


def test_velocity_tracking_first_order():
    env = TransportEnv(open_scenario(), EnvParams(), np.random.default_rng(3))
    env.reset()
    # command pure +x translation; both robots share it so the link is neutral
    cmd = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    env.step(cmd)
    s = env.state
    # v' = v + (dt/tau)(a - v) = 0 + 0.5 * 1.0
    assert s.robot_a.velocity[0] == pytest.approx(0.5)
    env.step(cmd)
    assert env.state.robot_a.velocity[0] == pytest.approx(0.75)


def test_action_clamping():
    env = TransportEnv(open_scenario(), EnvParams(), np.random.default_rng(3))
    env.reset()
    env.step(np.array([[50.0, 0.0, 0.0], [50.0, 0.0, 0.0]]))
    # clamped to v_max=1 before tracking
    assert env.state.robot_a.velocity[0] == pytest.approx(0.5)


def test_collaboration_cost_from_step():
    env = TransportEnv(open_scenario(), EnvParams(), np.random.default_rng(4))
    env.reset()
    s = env.state
    s.robot_a = robot((-0.6, 0.0))
    s.robot_b = robot((0.6, 0.0))
    # link axis is +x; opposing x commands tug the rod
    out = env.step(np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]))
    assert out.info["c_m"] == 1.0
    s = env.state
    s.robot_a = robot((-0.6, 0.0))
    s.robot_b = robot((0.6, 0.0))
    out = env.step(np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]))
    assert out.info["c_m"] == 0.0


def test_collision_is_costly_but_not_terminal():
    wall = Rect((1.0, 0.0), (0.1, 2.0))
    sc = ScenarioSpec(kind="open", obstacles=(wall,),
                      start_region=Rect((-2.0, 0.0), (0.1, 0.1)),
                      goal=(100.0, 0.0)).validate()
    env = TransportEnv(sc, EnvParams(), np.random.default_rng(5))
    env.reset()
    s = env.state
    s.robot_a = robot((0.6, -0.6))
    s.robot_b = robot((0.6, 0.6))
    out = env.step(np.zeros((2, 3)))
    # both front probes 0.05 deep in the wall
    assert out.info["c_c"] == pytest.approx(10.0)
    assert out.collided
    assert not out.terminal
    # next step is still legal
    env.step(np.zeros((2, 3)))


def test_arrival_pays_every_step_without_ending_the_episode():
    sc = open_scenario(goal=(0.0, 0.0), arrival=0.3)
    env = TransportEnv(sc, EnvParams(), np.random.default_rng(6))
    env.reset()
    mid = env.state.midpoint
    # start region is within the arrival ball of this goal
    assert np.linalg.norm(mid) < 0.3 + 0.8
    env.state.robot_a = robot((-0.6, 0.0))
    env.state.robot_b = robot((0.6, 0.0))
    out = env.step(np.zeros((2, 3)))
    assert out.arrived and not out.terminal
    assert out.reward == 10.0  # w_d alone: stationary, so no progress tick
    # holding the goal keeps collecting the destination reward
    again = env.step(np.zeros((2, 3)))
    assert again.arrived and again.reward == 10.0


def test_arrived_flag_is_sticky_after_leaving_the_radius():
    sc = open_scenario(goal=(0.0, 0.0), arrival=0.3)
    env = TransportEnv(sc, EnvParams(), np.random.default_rng(6))
    env.reset()
    env.state.robot_a = robot((-0.6, 0.0))
    env.state.robot_b = robot((0.6, 0.0))
    assert env.step(np.zeros((2, 3))).arrived
    env.state.robot_a = robot((4.4, 0.0))
    env.state.robot_b = robot((5.6, 0.0))
    out = env.step(np.zeros((2, 3)))
    assert out.arrived        # the flag records that the goal was reached
    assert out.info["r_d"] == 0.0   # but the reward tracks the current position


def test_timeout_at_episode_cap():
    env = TransportEnv(open_scenario(cap=3), EnvParams(), np.random.default_rng(7))
    env.reset()
    for k in range(3):
        out = env.step(np.zeros((2, 3)))
    assert out.terminal and not out.arrived
    assert env.state.timed_out


def test_reward_cost_lattice():
    env = TransportEnv(make_scenario("gate"), EnvParams(), np.random.default_rng(8))
    env.reset()
    rng = np.random.default_rng(9)
    rewards, costs = set(), set()
    for _ in range(500):
        out = env.step(rng.uniform(-1.0, 1.0, size=(2, 3)))
        rewards.add(out.reward)
        costs.add(out.cost)
        if out.terminal:
            env.reset()
    assert rewards <= {0.0, 1.0, 10.0, 11.0}
    allowed_costs = {i * 1.0 + j * 5.0 for i in (0, 1) for j in range(9)}
    assert costs <= allowed_costs
    assert 1.0 in rewards  # progress does happen under random play


def test_determinism_bitwise():
    def run(seed):
        env = TransportEnv(make_scenario("gate"), EnvParams(), np.random.default_rng(seed))
        env.reset()
        rng = np.random.default_rng(123)
        hist = []
        for _ in range(100):
            out = env.step(rng.uniform(-1.0, 1.0, size=(2, 3)))
            hist.append((env.state.robot_a.position.copy(),
                         env.state.robot_b.position.copy(), out.reward, out.cost))
            if out.terminal:
                env.reset()
        return hist

    h1, h2 = run(42), run(42)
    for (a1, b1, r1, c1), (a2, b2, r2, c2) in zip(h1, h2):
        assert np.array_equal(a1, a2) and np.array_equal(b1, b2)
        assert r1 == r2 and c1 == c2
    h3 = run(43)
    assert any(not np.array_equal(a, b) for (a, _, _, _), (b, _, _, _) in zip(h1, h3))


def test_batch_matches_sequential():
    spec = make_scenario("gate")
    batch = BatchEnv(spec, EnvParams(), 3, seed=42)
    streams = np.random.SeedSequence(42).spawn(3)
    singles = [TransportEnv(spec, EnvParams(), np.random.default_rng(s)) for s in streams]
    obs_b = batch.reset_all()
    obs_s = np.stack([e.reset() for e in singles])
    np.testing.assert_array_equal(obs_b, obs_s)
    rng = np.random.default_rng(11)
    for _ in range(50):
        acts = rng.uniform(-1.0, 1.0, size=(3, 2, 3))
        obs_b, outs = batch.step(acts)
        for i, env in enumerate(singles):
            out = env.step(acts[i])
            assert out.reward == outs[i].reward
            assert out.cost == outs[i].cost
            if out.terminal:
                np.testing.assert_array_equal(obs_b[i], env.reset())
            else:
                np.testing.assert_array_equal(obs_b[i], out.observations)


def test_batch_auto_reset():
    batch = BatchEnv(open_scenario(cap=2), EnvParams(), 2, seed=0)
    batch.reset_all()
    batch.step(np.zeros((2, 2, 3)))
    obs, outs = batch.step(np.zeros((2, 2, 3)))
    assert all(o.terminal for o in outs)
    for env in batch.envs:
        assert env.state.step_index == 0  # fresh episode behind the returned obs
    # returned rows are the fresh observations, not the terminal ones
    for row, out in zip(obs, outs):
        assert not np.array_equal(row, out.observations)


def test_observation_layout():
    sc = open_scenario(goal=(3.0, 4.0))
    st_ = EnvState(robot((0.0, 0.0), vel=(0.2, 0.1)), robot((1.2, 0.0)), L)
    obs = observe(st_, sc)
    np.testing.assert_allclose(obs[0, :2], [3.0, 4.0])
    np.testing.assert_allclose(obs[0, 2:4], [0.0, 0.0])
    np.testing.assert_allclose(obs[0, 6:8], [0.2, 0.1])
    np.testing.assert_allclose(obs[0, 14:16], [1.2, 0.0])   # partner offset
    np.testing.assert_allclose(obs[0, 16:18], [1.0, 0.0])   # unit link direction
    np.testing.assert_allclose(obs[1, 14:16], [-1.2, 0.0])
    np.testing.assert_allclose(obs[1, 16:18], [-1.0, 0.0])


def test_trace_roundtrip(tmp_path):
    env = TransportEnv(make_scenario("gate"), EnvParams(), np.random.default_rng(12))
    env.reset()
    rng = np.random.default_rng(13)
    rows = []
    for k in range(20):
        out = env.step(rng.uniform(-1.0, 1.0, size=(2, 3)))
        rows.append(trace_row(k, env.state, out))
    path = tmp_path / "trace.csv"
    write_trace(path, rows)
    import csv as csvmod
    with open(path) as fh:
        reader = csvmod.reader(fh)
        header = next(reader)
        assert header == TRACE_COLUMNS
        parsed = list(reader)
    assert len(parsed) == 20
    for rec, row in zip(parsed, rows):
        assert int(rec[0]) == row["step"]
        # repr-printed floats reparse to the exact same value
        assert float(rec[1]) == row["x_a"]
        assert float(rec[11]) == row["reward"]
        assert int(rec[13]) == int(row["collided"])
        assert int(rec[14]) == int(row["arrived"])
