import numpy as np
import pytest

from lmpgame.cases import ExampleError, build_example, example1_uncongested
from lmpgame.conditions import check_assumption1, check_conditions, check_monopoly_free
from lmpgame.corpus import random_scenario
from lmpgame.dispatch import solve_economic_dispatch


@pytest.mark.parametrize(
    "kind, params, x_star",
    [
        (1, dict(C=1, D=2, a=(1, 2), cap=10), [1, 1]),
        (2, dict(C=1, Cp=2, D=3, a=(1, 2, 3, 4)), [1, 1, 1, 0]),
        (3, dict(k=10, C=1), [2, 0, 0, 0]),
        (1, dict(C=2, D=5, a=(0.5, 3), cap=7), [2, 3]),
        (3, dict(k=4, C=3), [6, 0, 0, 0]),
    ],
)
def test_reference_dispatch_matches_solver(kind, params, x_star):
    case = build_example(kind, **params)
    np.testing.assert_allclose(case.x_star, x_star)
    np.testing.assert_allclose(solve_economic_dispatch(case.scenario).x, x_star, atol=1e-8)


@pytest.mark.parametrize(
    "kind, params, relation",
    [
        (1, dict(C=1, D=0.5), "D > C"),
        (1, dict(a=(2, 1)), "a1 < a2"),
        (1, dict(cap=1.5), "cap > a2"),
        (2, dict(C=2, Cp=1), "C' > C"),
        (2, dict(D=1.5), "D > C'"),
        (2, dict(a=(1, 3, 2, 4)), "a1 < a2 < a3 < a4"),
        (3, dict(k=1), "k > 1"),
    ],
)
def test_parameter_inequalities(kind, params, relation):
    with pytest.raises(ExampleError, match=relation):
        build_example(kind, **params)


def test_unknown_example():
    with pytest.raises(ExampleError):
        build_example(4)


def test_conditions_on_examples():
    ex1 = build_example(1).scenario
    a1 = check_assumption1(ex1)
    assert not a1 and a1.pivotal == ["g2"] and a1.per_generator == {"g1": True, "g2": False}
    assert check_monopoly_free(ex1).monopoly_nodes == ["1", "2"]
    rep = check_conditions(build_example(3).scenario)
    assert rep.all_hold
    rep = check_conditions(example1_uncongested().scenario)
    assert rep.congestion_free and rep.assumption1 and not rep.monopoly_free
    assert not check_conditions(ex1).congestion_free


def test_random_monopoly_free_scenarios():
    rng = np.random.default_rng(5)
    for _ in range(10):
        sc = random_scenario(rng, max_nodes=4, max_generators=3, monopoly_free=True)
        assert check_monopoly_free(sc)
        assert sc.n_generators >= 2 * sc.n_nodes
