"""Acceptance criteria 1-10, each at its stated tolerance.

Every test prints one ``ACCEPTANCE <n> PASS|FAIL`` line. The long
reproduction (criterion 9) only runs with ``GOSPA_MCTS_FULL_SCALE=1``.
"""
import itertools
import os
import time
from dataclasses import replace

import numpy as np
import pytest

from gospa_mcts.config import load_experiment
from gospa_mcts.experiment import run_experiment, summarise
from gospa_mcts.filter import MultiBernoulliFilter
from gospa_mcts.gospa import gospa
from gospa_mcts.models import POSITION_H, Bernoulli, BirthModel, MotionModel, MultiBernoulli, SensorModel
from gospa_mcts.planner import (
    PlannerConfig,
    PlanningModel,
    bernoulli_cost,
    mcts_plan,
    merge_patterns,
    myopic_bound,
    thresholded_cost,
)
from gospa_mcts.world import ActionSpace

from conftest import brute_force_sq_gospa
from test_planner import _mixture_moments, _random_branches, bound_monte_carlo, rand_cov, rand_state

CONFIGS = os.path.join(os.path.dirname(__file__), os.pardir, "configs")
# Straight-line progress (start distance minus final distance to the birth
# mean) a sensor needs before it can be past the wall: the wall's far edge
# sits 75.7 closer to the origin than the sensor start.
STUCK_GATE = 75.0


@pytest.fixture
def report(capsys):
    def _report(n, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return _report


def test_criterion_1_gospa_oracle(report):
    rng = np.random.default_rng(2001)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        X = rng.uniform(-15, 15, (rng.integers(0, 5), 2))
        Y = rng.uniform(-15, 15, (rng.integers(0, 5), 2))
        worst = max(worst, abs(gospa(X, Y, 10.0).sq_total - brute_force_sq_gospa(X, Y, 10.0)))
    elapsed = time.perf_counter() - t0
    report(1, worst <= 1e-9 and elapsed < 5.0, f"max |lib - brute force| = {worst:.2e}, {elapsed:.2f} s")


def test_criterion_2_optimal_threshold(report):
    rng = np.random.default_rng(2002)
    grid = np.linspace(0, 1, 1001)
    worst = -np.inf
    for _ in range(100):
        r, c = rng.uniform(), rng.uniform(1, 100)
        tr = rng.uniform(0, 1.5 * c**2)
        worst = max(worst, bernoulli_cost(r, tr, c) - min(thresholded_cost(r, tr, c, g) for g in grid))
    report(2, worst <= 1e-12, f"max (optimal - best grid) = {worst:.2e}")


def test_criterion_3_kalman_equivalence(report):
    rng = np.random.default_rng(2003)
    motion = MotionModel.constant_velocity(0.8, p_survival=1.0)
    sensor = SensorModel(p_d_max=1.0, distance_decay=False, clutter_rate=0.0)
    x0, P0 = np.array([5.0, 1.0, -3.0, 0.5]), np.diag([20.0, 2.0, 20.0, 2.0])
    filt = MultiBernoulliFilter(motion, BirthModel(), gate=np.inf, on_unexplained="raise")
    filt.state = MultiBernoulli((Bernoulli(1.0, x0, P0, 0),))
    H, m, P, x = POSITION_H, x0.copy(), P0.copy(), x0.copy()
    worst = 0.0
    for _ in range(100):
        x = motion.F @ x + rng.multivariate_normal(np.zeros(4), motion.Q)
        z = H @ x + rng.multivariate_normal(np.zeros(2), sensor.R)
        filt.predict()
        filt.update([z[None]], [sensor], [np.zeros(2)])
        m, P = motion.F @ m, motion.F @ P @ motion.F.T + motion.Q
        K = P @ H.T @ np.linalg.inv(H @ P @ H.T + sensor.R)
        m, P = m + K @ (z - H @ m), (np.eye(4) - K @ H) @ P
        (b,) = filt.state.components
        worst = max(worst, np.abs(b.mean - m).max(), np.abs(b.cov - P).max())
    report(3, worst <= 1e-9, f"max deviation from Kalman filter over 100 steps = {worst:.2e}")


def test_criterion_4_moment_matching(report):
    rng = np.random.default_rng(2004)
    worst = 0.0
    for _ in range(1000):
        branches = _random_branches(rng)
        merged = merge_patterns(branches)
        mean, cov = _mixture_moments(branches)
        worst = max(worst, np.abs(merged.mean - mean).max(), np.abs(merged.cov - cov).max())
    worst_mc = 0.0
    for _ in range(10):
        branches = _random_branches(rng, k=3, dim=2)
        merged = merge_patterns(branches)
        w = np.array([p * b.r for p, b in branches])
        counts = rng.multinomial(1_000_000, w / w.sum())
        samples = np.concatenate([rng.multivariate_normal(b.mean, b.cov, size=n)
                                  for n, (_, b) in zip(counts, branches)])
        worst_mc = max(worst_mc, np.abs(merged.mean - samples.mean(axis=0)).max(),
                       np.abs(merged.cov - np.cov(samples.T)).max())
    report(4, worst <= 1e-12 and worst_mc <= 1e-2,
           f"algebraic max error {worst:.2e}; sampled max error {worst_mc:.2e}")


def test_criterion_5_bound_dominance(report):
    rng = np.random.default_rng(2005)
    sensors = (SensorModel(), SensorModel())
    worst = np.inf
    for i in range(20):
        S = 1 + i % 2
        b = Bernoulli(rng.uniform(0.05, 1), np.r_[rng.uniform(-40, 40), 0, rng.uniform(-40, 40), 0],
                      rand_cov(rng, scale=rng.uniform(1, 3000)))
        poses = rng.uniform(-30, 30, (S, 2))
        bound = myopic_bound(MultiBernoulli((b,)), sensors[:S], poses, 80.0)
        mc, se = bound_monte_carlo(b, sensors[:S], poses, 80.0, rng)
        worst = min(worst, (bound - (mc - 3 * se)))
    report(5, worst >= 0, f"min (bound - (MC - 3 SE)) over 20 cases = {worst:.3g}")


def test_criterion_6_myopic_degeneracy(report):
    rng = np.random.default_rng(2006)
    motion = MotionModel.constant_velocity(0.8)
    birth = BirthModel(((0.03, np.array([0, 0.1, 0, 0.1]), np.diag([6.0] * 4)),))
    model = PlanningModel(motion, birth, (SensorModel(), SensorModel()), 80.0)
    cfg = PlannerConfig(lookahead=1, budget_joint=49, budget_individual=7)
    space = ActionSpace(model.step)
    mismatches = 0
    for _ in range(50):
        state = rand_state(rng)
        poses = rng.uniform(-60, 60, (2, 2))
        chosen = mcts_plan(state, poses, model, cfg, rng)
        best = min(itertools.product(range(7), repeat=2), key=lambda a: (myopic_bound(
            state, model.sensors, [p + space.displacement(x) for p, x in zip(poses, a)], 80.0), a))
        mismatches += chosen != best
    report(6, mismatches == 0, f"{mismatches}/50 profiles differ from argmin of the myopic bound")


# --------------------------------------------------------------------------- closed-loop experiments


@pytest.fixture(scope="module")
def desk():
    cfg = load_experiment(os.path.join(CONFIGS, "desk.yaml"))
    assert (cfg.scenario.steps, cfg.runs, cfg.scenario.sensor.clutter_rate) == (100, 10, 1.0)
    return cfg, run_experiment(cfg, write=False)


@pytest.fixture(scope="module")
def clutter_sweep(desk):
    cfg, records = desk
    out = {1.0: [r for r in records if r.algorithm == "MCTS3-GD"]}
    mcts3 = [a for a in cfg.algorithms if a.name == "MCTS3-GD"]
    for lam in (0.1, 2.0):
        c = replace(cfg, algorithms=mcts3, scenario=replace(cfg.scenario))
        c.scenario.sensor = replace(cfg.scenario.sensor, clutter_rate=lam)
        out[lam] = run_experiment(c, write=False)
    return out


@pytest.mark.slow
def test_criterion_7_obstacle_experiment(desk, report):
    cfg, records = desk
    start = np.linalg.norm(cfg.scenario.sensor_positions - cfg.scenario.birth_location, axis=1)
    wall_bottom = min(o.ymin for o in cfg.scenario.obstacles)
    progress, below = [], 0
    for run in range(cfg.runs):
        mine = [r for r in records if r.algorithm == "Myopic-GD" and r.run == run]
        final = mine[-1].positions()
        progress.append(float(np.max(start - np.linalg.norm(final - cfg.scenario.birth_location, axis=1))))
        below += any(r.positions()[:, 1].min() < wall_bottom for r in mine)
    rows = {r["algorithm"]: r["rms_gospa"] for r in summarise(records)}
    gain = 1.0 - rows["MCTS3-GD"] / rows["Myopic-GD"]
    ok_a = max(progress) < STUCK_GATE and below == 0
    ok_b = gain >= 0.20
    report("7a", ok_a, f"Myopic-GD max progress toward birth {max(progress):.1f} (gate {STUCK_GATE}); "
                       f"runs passing the wall: {below}/{cfg.runs}")
    report("7b", ok_b, f"RMS-GOSPA Myopic-GD {rows['Myopic-GD']:.2f}, MCTS3-GD {rows['MCTS3-GD']:.2f} "
                       f"({100 * gain:.1f}% lower, need >= 20%)")


@pytest.mark.slow
def test_criterion_8_clutter_robustness(clutter_sweep, report):
    rms = {lam: summarise(recs)[0]["rms_gospa"] for lam, recs in sorted(clutter_sweep.items())}
    spread = (max(rms.values()) - min(rms.values())) / min(rms.values())
    detail = ", ".join(f"clutter {lam}: {v:.2f}" for lam, v in rms.items())
    report(8, spread < 0.15, f"MCTS3-GD {detail}; spread {100 * spread:.1f}% (need < 15%)")


@pytest.mark.full_scale
@pytest.mark.skipif(os.environ.get("GOSPA_MCTS_FULL_SCALE") != "1",
                    reason="optional long reproduction; set GOSPA_MCTS_FULL_SCALE=1")
def test_criterion_9_full_scale(report):
    cfg = load_experiment(os.path.join(CONFIGS, "full_scale.yaml"))
    cfg.algorithms = [a for a in cfg.algorithms if a.name in ("Myopic-GD", "MCTS3-GD", "MCTS3-KLD")]
    rows = {r["algorithm"]: r["rms_gospa"] for r in summarise(run_experiment(cfg, write=False))}
    ok = 65 <= rows["Myopic-GD"] <= 80 and 40 <= rows["MCTS3-GD"] <= 55 and rows["MCTS3-GD"] < rows["MCTS3-KLD"]
    report(9, ok, ", ".join(f"{k} {v:.2f}" for k, v in rows.items()))


@pytest.mark.slow
def test_criterion_10_runtime_ordering(report):
    cfg = load_experiment(os.path.join(CONFIGS, "timing.yaml"))
    rows = {r["algorithm"]: r["mean_plan_seconds"] for r in summarise(run_experiment(cfg, write=False))}
    order = ["Myopic-GD", "MCTS1-GD", "MCTS3-GD", "MCTS4-GD"]
    ordered = all(rows[a] < rows[b] for a, b in zip(order, order[1:]))
    ok = ordered and rows["Myopic-GD"] <= 0.1 and rows["MCTS3-GD"] <= 5.0
    report(10, ok, ", ".join(f"{k} {rows[k]:.3f} s/step" for k in order))
