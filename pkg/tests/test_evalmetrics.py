import numpy as np
import pytest

from cotransport.allocator import AllocatorConfig
from cotransport.evalmetrics import (EpisodeResult, EvalError, run_eval,
                                     straightness, time_consumption)
from cotransport.scenario import EnvParams, make_scenario
from cotransport.trainer import Trainer, TrainerConfig


def test_straight_line_scores_one():
    path = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
    assert straightness(path, [0.0, 0.0], [5.0, 0.0]) == 1.0


def test_semicircle_matches_closed_form():
    theta = np.linspace(np.pi, 0.0, 10_001)
    path = np.stack([1.0 + np.cos(theta), np.sin(theta)], axis=1)
    got = straightness(path, [0.0, 0.0], [2.0, 0.0])
    assert got == pytest.approx(2.0 / np.pi, abs=1e-3)


def test_loop_back_scores_zero():
    path = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0],
                     [0.0, 1.0], [0.0, 0.0]])
    assert straightness(path, [0.0, 0.0], [4.0, 0.0]) == 0.0


def test_straightness_errors():
    with pytest.raises(EvalError, match="two planar points"):
        straightness(np.zeros((1, 2)), [0, 0], [1, 0])
    with pytest.raises(EvalError, match="zero arc"):
        straightness(np.zeros((3, 2)), [0, 0], [1, 0])
    with pytest.raises(EvalError, match="coincide"):
        straightness(np.array([[0.0, 0.0], [1.0, 1.0]]), [2, 2], [2, 2])


def test_straightness_never_exceeds_one():
    rng = np.random.default_rng(0)
    for _ in range(300):
        path = np.cumsum(rng.normal(size=(rng.integers(2, 30), 2)), axis=0)
        goal = rng.normal(size=2) * 5.0
        if np.allclose(goal, path[0]):
            continue
        try:
            value = straightness(path, path[0], goal)
        except EvalError:
            continue
        assert value <= 1.0 + 1e-12


def episode(arrived, arrival_step=None, dt=0.1):
    return EpisodeResult(index=0, steps=200, arrived=arrived,
                         collided=False, arrival_step=arrival_step, dt=dt,
                         total_cost=0.0, straightness=None)


def test_time_consumption_examples():
    assert time_consumption(episode(True, 183), 35.0) == pytest.approx(18.3, abs=1e-12)
    assert time_consumption(episode(False), 35.0) == 35.0
    assert time_consumption(episode(True, 0), 35.0) == 0.0
    with pytest.raises(EvalError, match="positive"):
        time_consumption(episode(False), 0.0)


@pytest.fixture(scope="module")
def tiny_checkpoint(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    spec = make_scenario("gate", episode_cap=30)
    cfg = TrainerConfig(mode="full", iterations=2, n_envs=3, horizon=48,
                        minibatch=64, hidden=(16, 16))
    Trainer(spec, EnvParams(), cfg, AllocatorConfig(cold_start=2, window=10),
            seed=5, out_dir=out).run()
    return out / "checkpoint.npz", spec


def test_run_eval_deterministic(tiny_checkpoint):
    path, spec = tiny_checkpoint
    r1 = run_eval(path, spec, EnvParams(), n=4, seed=9)
    r2 = run_eval(path, spec, EnvParams(), n=4, seed=9)
    assert r1.to_dict() == r2.to_dict()
    r3 = run_eval(path, spec, EnvParams(), n=4, seed=10)
    assert r3.to_dict() != r1.to_dict()


def test_run_eval_rates_and_caps(tiny_checkpoint):
    path, spec = tiny_checkpoint
    report = run_eval(path, spec, EnvParams(), n=5, seed=3)
    assert report.n_episodes == 5
    assert 0.0 <= report.collision_rate <= 1.0
    assert 0.0 <= report.arrival_rate <= 1.0
    no_collision = np.mean([not ep.collided for ep in report.episodes])
    assert report.collision_rate + no_collision == 1.0
    # a barely trained policy cannot cross the arena inside 30 steps
    assert report.arrival_rate == 0.0
    assert report.mean_straightness is None
    assert report.mean_time_s == 35.0


def test_run_eval_argument_errors(tiny_checkpoint):
    path, spec = tiny_checkpoint
    with pytest.raises(EvalError, match="at least one"):
        run_eval(path, spec, EnvParams(), n=0, seed=1)
    corridor = make_scenario("corridor")
    with pytest.raises(EvalError, match="trained on 'gate'"):
        run_eval(path, corridor, EnvParams(), n=1, seed=1)


def test_run_eval_traces(tiny_checkpoint, tmp_path):
    path, spec = tiny_checkpoint
    run_eval(path, spec, EnvParams(), n=3, seed=2, trace_dir=tmp_path)
    files = sorted(tmp_path.glob("episode_*.csv"))
    assert len(files) == 3
    header = files[0].read_text().splitlines()[0]
    assert header.startswith("step,x_a,y_a")
