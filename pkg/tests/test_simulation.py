import math
import time

import numpy as np
import pytest

from cvsrn.control_variates import lcv_estimate
from cvsrn.core import Mean, Trajectory
from cvsrn.dsl import parse_model
from cvsrn.moments import ControlVariateId, constraint_expansion, z_realization
from cvsrn.simulation import (
    AccumulatorPlan,
    SimConfig,
    SimulationError,
    derive_seeds,
    path_integrals,
    run_batch,
    simulate,
    simulate_with_accumulators,
)

DIMER_E_M2 = 9.740613  # FSP oracle, see test_oracle


def _plan(model, ids, T):
    return AccumulatorPlan.build([constraint_expansion(model, cv, T) for cv in ids], model.n_species)


def test_inert_model_holds_initial_state(inert):
    traj = simulate(inert, SimConfig(2.0))
    assert list(traj.times) == [0.0, 2.0]
    assert traj.states.tolist() == [[3]]


def test_constant_path_accumulators(inert):
    x, acc = simulate_with_accumulators(inert, SimConfig(1.0), [((1,), 0.0), ((1,), 1.0)])
    assert x.tolist() == [3]
    assert acc[((1,), 0.0)] == pytest.approx(3.0, rel=1e-12)
    assert acc[((1,), 1.0)] == pytest.approx(3 * (math.e - 1), rel=1e-12)


def test_two_segment_integral():
    traj = Trajectory(np.array([0.0, 0.5, 1.0]), np.array([[2], [5]]))
    assert path_integrals(traj, [((2,), 0.0)])[((2,), 0.0)] == pytest.approx(14.5)


def test_hand_evaluated_birth_death_z(birthdeath):
    traj = Trajectory(np.array([0.0, 1.0, 2.0]), np.array([[0], [1]]))
    e = constraint_expansion(birthdeath, ControlVariateId((1,), 0.0), 2.0)
    acc = path_integrals(traj, [((1,), 0.0)])
    assert z_realization(traj.terminal_state, acc, e) == pytest.approx(-18.0)


@pytest.mark.parametrize("name, T", [("birthdeath", 2.0), ("dimerization", 2.0), ("distmod", 5.0)])
def test_accumulators_match_post_hoc_integrals(request, name, T):
    model = request.getfixturevalue(name)
    ids = [ControlVariateId(m, lam) for m in [(1,) + (0,) * (model.n_species - 1), (0,) * (model.n_species - 1) + (2,)]
           for lam in (-1.3, 0.0, 1e-13, 0.7, 2.5)]
    plan = _plan(model, ids, T)
    worst = 0.0
    for i in range(20):
        cfg = SimConfig(T, seed=11)
        traj = simulate(model, cfg, index=i)
        x, acc = simulate_with_accumulators(model, cfg, plan, index=i)
        np.testing.assert_array_equal(x, traj.terminal_state)
        assert traj.states.min() >= 0
        ref = path_integrals(traj, plan.keys)
        for key in plan.keys:
            worst = max(worst, abs(acc[key] - ref[key]) / max(abs(ref[key]), 1e-300))
    assert worst <= 1e-10


def test_birth_death_mean(birthdeath):
    b = run_batch(birthdeath, Mean(0, 2.0), [], 10_000, seed=5)
    se = b.V.std(ddof=1) / math.sqrt(b.n)
    assert abs(b.V.mean() - 10 * (1 - math.exp(-2))) < 4 * se


def test_dimerization_mean(dimerization):
    b = run_batch(dimerization, Mean(0, 2.0), [], 10_000, seed=6)
    se = b.V.std(ddof=1) / math.sqrt(b.n)
    assert abs(b.V.mean() - DIMER_E_M2) < 4 * se


def test_birth_death_z_mean_zero(birthdeath):
    e = constraint_expansion(birthdeath, ControlVariateId((1,), 1.0), 2.0)
    b = run_batch(birthdeath, Mean(0, 2.0), [e], 2000, seed=2)
    z = b.Z[:, 0]
    assert abs(z.mean()) < 4 * z.std(ddof=1) / math.sqrt(b.n)


def test_batch_is_deterministic(dimerization):
    ids = [ControlVariateId((1, 0), lam) for lam in (0.0, 1.0)]
    exp = [constraint_expansion(dimerization, cv, 2.0) for cv in ids]
    a = run_batch(dimerization, Mean(0, 2.0), exp, 2, seed=3)
    b = run_batch(dimerization, Mean(0, 2.0), exp, 2, seed=3)
    np.testing.assert_array_equal(a.V, b.V)
    np.testing.assert_array_equal(a.Z, b.Z)


def test_worker_count_does_not_change_results(distmod):
    exp = [constraint_expansion(distmod, ControlVariateId((1, 0, 0), 0.1), 10.0)]
    a = run_batch(distmod, Mean(0, 10.0), exp, 64, seed=4, workers=1)
    b = run_batch(distmod, Mean(0, 10.0), exp, 64, seed=4, workers=4)
    np.testing.assert_array_equal(a.terminal_states, b.terminal_states)
    np.testing.assert_array_equal(a.Z, b.Z)
    np.testing.assert_array_equal(a.events, b.events)


def test_accumulators_do_not_change_paths(dimerization):
    exp = [constraint_expansion(dimerization, ControlVariateId((1, 0), 1.5), 2.0)]
    plain = run_batch(dimerization, Mean(0, 2.0), [], 200, seed=8)
    with_cv = run_batch(dimerization, Mean(0, 2.0), exp, 200, seed=8)
    np.testing.assert_array_equal(plain.V, with_cv.V)


def test_seed_prefix_stability():
    np.testing.assert_array_equal(derive_seeds(1, 2, 5), derive_seeds(1, 2, 50)[:5])
    assert not np.array_equal(derive_seeds(1, 2, 5), derive_seeds(1, 3, 5))


def test_empty_expansions_give_crude_estimate(dimerization):
    b = run_batch(dimerization, Mean(0, 2.0), [], 100, seed=1)
    assert b.Z.shape == (100, 0)
    est = lcv_estimate(b.stats)
    assert est.d == 0 and est.point == pytest.approx(b.V.mean())


def test_z_shape(dimerization):
    ids = [ControlVariateId((1, 0), lam) for lam in np.linspace(-1, 2, 5)]
    ids += [ControlVariateId((0, 1), lam) for lam in np.linspace(-1, 2, 5)]
    b = run_batch(dimerization, Mean(0, 2.0), [constraint_expansion(dimerization, c, 2.0) for c in ids], 100, 0)
    assert b.Z.shape == (100, 10)


def test_cost_grows_with_accumulators(distmod):
    ids = [ControlVariateId(m, lam) for m in [(1, 0, 0), (0, 1, 0), (0, 0, 1)] for lam in np.linspace(-1, 1, 10)]
    exp = [constraint_expansion(distmod, c, 50.0) for c in ids]
    q = Mean(0, 50.0)
    run_batch(distmod, q, exp, 2, 0)

    def best(e):
        times = []
        for _ in range(3):
            t = time.perf_counter()
            run_batch(distmod, q, e, 200, 0)
            times.append(time.perf_counter() - t)
        return min(times)

    assert best(exp) > best([])


@pytest.mark.parametrize(
    "source, message",
    [
        ("0 -> X @ expr(-1)", "negative"),
        ("0 -> X @ expr(1 / X)", "division by zero"),
        ("X -> 0 @ expr(1)\ninit X = 0", "without enough"),
    ],
)
def test_simulation_errors(source, message):
    with pytest.raises(SimulationError, match=message):
        run_batch(parse_model(source), Mean(0, 1.0), [], 4, 0)


def test_event_cap():
    model = parse_model("0 -> X @ mass_action(1000)")
    with pytest.raises(SimulationError, match="event cap"):
        run_batch(model, Mean(0, 1.0), [], 2, 0, max_events=10)


def test_sim_config_validation():
    with pytest.raises(ValueError):
        SimConfig(0.0)
    with pytest.raises(ValueError):
        SimConfig(1.0, max_events=0)
