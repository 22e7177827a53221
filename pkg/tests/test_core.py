import numpy as np
import pytest

from cvsrn.core import (
    MassAction,
    Mean,
    Model,
    ModelError,
    Reaction,
    ThresholdProbability,
    Trajectory,
    mass_action_propensity,
    stoich_change,
    target_value,
    target_values,
)
from cvsrn.rates import Const, SpeciesRef


def _ma(c):
    return MassAction(Const(c))


def test_stoich_change_examples():
    assert stoich_change(Reaction((2, 0), (0, 1), _ma(0.1))) == (-2, 1)
    assert stoich_change(Reaction((0, 0), (1, 0), _ma(10))) == (1, 0)
    # catalyst Y cancels
    assert stoich_change(Reaction((1, 1, 0), (0, 1, 1), _ma(1))) == (-1, 0, 1)


@pytest.mark.parametrize("x, expected", [(5, 1.0), (1, 0.0), (0, 0.0), (2, 0.1)])
def test_dimerization_propensity(x, expected):
    r = Reaction((2, 0), (0, 1), _ma(0.1))
    assert mass_action_propensity(r, (x, 0)) == pytest.approx(expected)


def test_zeroth_order_propensity_is_constant():
    r = Reaction((0,), (1,), _ma(10))
    assert {mass_action_propensity(r, (x,)) for x in (0, 1, 17, 1000)} == {10.0}


def test_propensity_zero_exactly_below_multiplicity():
    r = Reaction((2, 1), (0, 0), _ma(0.5))
    for a in range(5):
        for b in range(3):
            zero = a < 2 or b < 1
            assert (mass_action_propensity(r, (a, b)) == 0) == zero


def test_model_propensity_matches_direct_formula(distmod):
    rng = np.random.default_rng(3)
    for _ in range(50):
        x = tuple(int(v) for v in rng.integers(0, 300, size=3))
        for j, r in enumerate(distmod.reactions):
            assert distmod.propensity(j, x) == pytest.approx(mass_action_propensity(r, x, distmod.parameter_vector))


def test_target_value_examples():
    traj = Trajectory(np.array([0.0, 1.0]), np.array([[7, 3]]))
    assert target_value(traj, Mean(0, 1.0)) == 7
    assert target_value(traj, ThresholdProbability(0, 7, 1.0)) == 1
    assert target_value(traj, ThresholdProbability(0, 6, 1.0)) == 0


def test_target_values_vectorised():
    x = np.array([[0, 1], [5, 2], [9, 9]])
    np.testing.assert_array_equal(target_values(x, Mean(1, 1.0)), [1, 2, 9])
    np.testing.assert_array_equal(target_values(x, ThresholdProbability(0, 5, 1.0)), [1, 1, 0])
    with pytest.raises(IndexError):
        target_values(x, Mean(2, 1.0))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(species=("A", "A"), reactions=()),
        dict(species=("A",), reactions=(), initial_state=(1, 2)),
        dict(species=("A",), reactions=(), initial_state=(-1,)),
        dict(species=("A",), reactions=(Reaction((1, 0), (0, 0), _ma(1)),)),
        dict(species=("A",), reactions=(Reaction((1,), (0,), _ma(0)),)),
        dict(species=("A",), reactions=(Reaction((1,), (0,), MassAction(SpeciesRef(0, "A"))),)),
    ],
)
def test_invalid_models_rejected(kwargs):
    with pytest.raises(ModelError):
        Model(**kwargs)


def test_empty_reaction_rejected():
    with pytest.raises(ModelError):
        Reaction((0,), (0,), _ma(1))


def test_default_initial_state_is_zero():
    assert Model(species=("A", "B"), reactions=()).initial_state == (0, 0)


def test_query_validation():
    with pytest.raises(ValueError):
        Mean(0, 0.0)
    with pytest.raises(ValueError):
        ThresholdProbability(0, -1, 1.0)


def test_trajectory_shape_and_csv():
    traj = Trajectory(np.array([0.0, 0.5, 1.0]), np.array([[2], [5]]))
    assert traj.n_jumps == 1
    assert traj.horizon == 1.0
    assert list(traj.terminal_state) == [5]
    assert traj.to_csv(("X",)).splitlines() == ["time,X", "0.0,2", "0.5,5", "1.0,5"]
