import numpy as np
import pytest

from lmpgame.cases import example1, example1_uncongested, example3, one_node_two_generators
from lmpgame.corpus import random_scenario
from lmpgame.dispatch import solve_economic_dispatch, true_cost
from lmpgame.game import (
    BidGrid,
    LmpMechanism,
    PreconditionError,
    best_response,
    best_response_dynamics,
    construct_ne_congestion_free,
    construct_ne_monopoly_free,
    find_grid_equilibria,
    price_of_anarchy,
    random_linear_profile,
    replay_deviation,
    verify_epsilon_ne,
)
from lmpgame.model import Bid, Generator, LinearCost, Node, Scenario


@pytest.fixture
def mech():
    return LmpMechanism()


def test_grid_levels():
    sc = example1().scenario
    g = BidGrid(price_step=0.5, augment=False)
    levels = g.price_levels(sc)
    assert levels[0] == 0 and levels[-1] == 10 and len(levels) == 21
    aug = BidGrid(price_step=0.5).price_levels(sc, (Bid.linear(7.3), Bid.linear(4.0)), 1)
    for v in (7.3, 7.2999, 7.3001, 3.9999, 1.9999, 2.0001):
        assert v in aug
    assert 0.9999 not in aug
    assert set(levels) <= set(BidGrid(price_step=0.5, augment=False).refined().price_levels(sc))


def test_critical_prices_ignore_rival_costs():
    sc = example1().scenario
    grid = BidGrid(price_step=0.5)
    prof = (Bid.linear(3.0), Bid.linear(4.0))
    crit = grid.critical_prices(sc, prof, 0)
    assert 1.0 in crit and 3.0 in crit and 4.0 in crit
    # generator 2's cost slope only matters to generator 2
    assert 2.0 not in crit and 2.0 in grid.critical_prices(sc, prof, 1)


def test_grid_validation():
    with pytest.raises(ValueError):
        BidGrid(price_step=0)
    with pytest.raises(ValueError):
        BidGrid(quantity_step=-1)
    with pytest.raises(ValueError):
        BidGrid(price_ceiling=0)


def test_default_ceiling_without_cap():
    sc = example3().scenario
    assert BidGrid().ceiling(sc, example3().ne_profile) == pytest.approx(1.5 * 20)


def test_best_response_example3_generator1(mech):
    case = example3()
    sc, prof = case.scenario, case.ne_profile
    br = best_response(sc, prof, 0, mech, BidGrid(price_step=0.1))
    assert br.payoff == pytest.approx(19.0)
    assert br.gain == pytest.approx(0.0, abs=1e-9)
    lin = best_response(sc, prof, 0, mech, BidGrid(price_step=0.1, linear_only=True))
    assert lin.bid == Bid.linear(20.0) and lin.payoff == pytest.approx(19.0)
    # dropping to k serves both units at a lower margin
    assert mech.payoff(sc, (Bid.linear(10.0),) + prof[1:], 0) == pytest.approx((10 - 1) * 2)


def test_best_response_ceiling_binding_without_competition(mech):
    sc = Scenario(nodes=(Node("1", 1.0),), lines=(), generators=(Generator("g", 0, LinearCost(1.0)),))
    lo = best_response(sc, (Bid.linear(1.0),), 0, mech, BidGrid(price_step=1.0, price_ceiling=10.0))
    hi = best_response(sc, (Bid.linear(1.0),), 0, mech, BidGrid(price_step=1.0, price_ceiling=20.0))
    assert lo.ceiling_binding and hi.ceiling_binding
    assert lo.payoff == pytest.approx(9.0) and hi.payoff == pytest.approx(19.0)


def test_inactive_player_gets_zero(mech):
    sc = one_node_two_generators(a=(1.0, 1.0), D=1.0)
    prof = (Bid(0.0, 1.0, 0.0), Bid.linear(0.0))
    br = best_response(sc, prof, 1, mech, BidGrid(price_step=0.5, price_ceiling=2.0))
    assert br.payoff == 0.0 and br.bid == Bid(0.0, 0.0, 0.0)


def test_example1_top_profile_is_refuted(mech):
    sc = example1().scenario
    prof = (Bid.linear(10.0), Bid.linear(10.0))
    rep = verify_epsilon_ne(sc, prof, mech, BidGrid(price_step=0.5), 1e-6)
    assert rep.verdict == "refuted"
    assert rep.witness.player == 1
    # undercut by one micro-step: (a - a2) C - delta D
    assert rep.witness.gain == pytest.approx((10 - 2) * 1 - 1e-4 * 2, abs=1e-9)
    assert replay_deviation(sc, prof, mech, rep.witness) == pytest.approx(rep.witness.gain, abs=1e-9)


def test_example3_equilibrium_verifies(mech):
    case = example3()
    rep = verify_epsilon_ne(case.scenario, case.ne_profile, mech, BidGrid(price_step=0.5), 1e-6)
    assert rep.verdict == "grid ε-NE" and rep.is_equilibrium
    np.testing.assert_allclose(rep.payoffs, [19, 0, 0, 0])
    assert (rep.gains <= 1e-6).all()


def test_constructions(mech):
    sc = example3().scenario
    prof = construct_ne_monopoly_free(sc)
    assert prof == tuple(Bid(1.0, x, 1.0) for x in (2.0, 0.0, 0.0, 0.0))
    assert verify_epsilon_ne(sc, prof, mech, BidGrid(price_step=0.5)).is_equilibrium
    assert mech.dispatch(sc, prof).objective == pytest.approx(2.0)

    u = example1_uncongested().scenario
    prof = construct_ne_congestion_free(u)
    assert [b.p for b in prof] == [1.0, 1.0]
    np.testing.assert_allclose(mech.dispatch(u, prof).x, [2, 0])

    with pytest.raises(PreconditionError, match="congestion"):
        construct_ne_congestion_free(_ex1_with_two_gens_per_node())
    with pytest.raises(PreconditionError, match="monopoly"):
        construct_ne_monopoly_free(example1().scenario)
    with pytest.raises(PreconditionError, match="Assumption 1"):
        construct_ne_congestion_free(example1().scenario)


def _ex1_with_two_gens_per_node():
    # congested, but no generator is pivotal
    base = example1().scenario
    gens = base.generators + (Generator("g3", 1, LinearCost(3.0)),)
    return Scenario(base.nodes, base.lines, gens, bid_cap=base.bid_cap)


def test_zero_demand_construction(mech):
    sc = example1_uncongested().scenario.with_demand([0.0, 0.0])
    prof = construct_ne_congestion_free(sc)
    assert all(b.p == 0.0 for b in prof)
    np.testing.assert_allclose(mech.dispatch(sc, prof).x, [0, 0])


def test_symmetric_construction(mech):
    sc = one_node_two_generators(a=(2.0, 2.0), D=1.0)
    prof = construct_ne_monopoly_free(sc)
    assert prof[0].p == prof[1].p == 2.0
    rep = best_response_dynamics(sc, prof, mech, BidGrid(price_step=0.5))
    assert rep.status == "fixed_point" and len(rep.steps) == 2


def test_dynamics_cycle_on_example1(mech):
    sc = example1().scenario
    grid = BidGrid(price_step=0.5, augment=False, linear_only=True)
    rep = best_response_dynamics(sc, (Bid.linear(10.0), Bid.linear(10.0)), mech, grid)
    assert rep.status == "cycle" and rep.period >= 2
    init = (Bid.linear(10.0), Bid.linear(10.0))
    cyc = rep.cycle_profiles(init)
    assert cyc[-1] == rep.final and len(set(cyc)) == len(cyc)
    # replay: every recorded move strictly improves the mover's payoff
    prof = init
    for st in rep.steps:
        new = prof[: st.player] + (st.bid,) + prof[st.player + 1:]
        if st.moved:
            assert mech.payoff(sc, new, st.player) > mech.payoff(sc, prof, st.player) + 1e-6
        prof = new


def test_dynamics_is_deterministic(mech):
    sc = example1().scenario
    grid = BidGrid(price_step=0.5, augment=False, linear_only=True)
    a = best_response_dynamics(sc, (Bid.linear(4.0), Bid.linear(9.0)), mech, grid)
    b = best_response_dynamics(sc, (Bid.linear(4.0), Bid.linear(9.0)), LmpMechanism(), grid)
    assert [(s.player, s.bid) for s in a.steps] == [(s.player, s.bid) for s in b.steps]


def test_dynamics_fixed_point_from_construction(mech):
    sc = example3().scenario
    rep = best_response_dynamics(sc, construct_ne_monopoly_free(sc), mech, BidGrid(price_step=1.0))
    assert rep.status == "fixed_point" and not any(s.moved for s in rep.steps)


def test_exhaustive_scan_small(mech):
    sc = example1().scenario
    grid = BidGrid(price_step=2.0, augment=False, linear_only=True)
    found, count = find_grid_equilibria(sc, mech, grid, 0.8)
    assert count == 6 ** 2 and found == []


def test_price_of_anarchy(mech):
    case = example3()
    grid = BidGrid(price_step=0.5)
    rep = price_of_anarchy(case.scenario, [case.ne_profile], grid)
    assert rep.ratio == pytest.approx(5.5, abs=1e-9)
    eff = price_of_anarchy(case.scenario, [construct_ne_monopoly_free(case.scenario)], grid)
    assert eff.ratio == 1.0
    with pytest.raises(PreconditionError):
        price_of_anarchy(case.scenario, [tuple(Bid.linear(20.0) for _ in range(4))], grid)
    mixed = price_of_anarchy(case.scenario, [tuple(Bid.linear(20.0) for _ in range(4)), case.ne_profile], grid)
    assert mixed.excluded == [0] and mixed.verified == [1]


def test_refinement_never_lowers_best_payoff(mech):
    rng = np.random.default_rng(2)
    for _ in range(6):
        sc = random_scenario(rng, max_nodes=3, max_generators=3, cost_kinds=("linear",), bid_cap=10.0)
        coarse = BidGrid(price_step=1.0, linear_only=True)
        prof = random_linear_profile(sc, coarse, rng)
        for k in range(sc.n_generators):
            a = best_response(sc, prof, k, mech, coarse).payoff
            b = best_response(sc, prof, k, mech, coarse.refined()).payoff
            assert b >= a - 1e-12


def test_scaling_covariance():
    lam = 3.0
    base = example1().scenario
    scaled = example1(a=(lam * 1.0, lam * 2.0), cap=lam * 10.0).scenario
    prof = (Bid(4.0, 0.5, 6.0), Bid.linear(7.0))
    sprof = tuple(Bid(lam * b.p, b.s, lam * b.q) for b in prof)
    m1, m2 = LmpMechanism(), LmpMechanism()
    np.testing.assert_allclose(m2.payoffs(scaled, sprof), lam * m1.payoffs(base, prof), rtol=1e-12)
    np.testing.assert_allclose(m2.dispatch(scaled, sprof).x, m1.dispatch(base, prof).x)


def test_equilibrium_cost_bounds():
    sc = example3().scenario
    opt = true_cost(sc, solve_economic_dispatch(sc).x)
    assert opt == pytest.approx(2.0)
