import numpy as np
import pytest

from lmpgame.cases import example1, example2, example3, one_node_two_generators
from lmpgame.corpus import random_scenario
from lmpgame.dispatch import solve_economic_dispatch, true_cost
from lmpgame.game import BidGrid, verify_epsilon_ne
from lmpgame.model import (
    Bid,
    Consumer,
    ConsumerBid,
    Generator,
    LinearCost,
    LinearValuation,
    Node,
    PiecewiseLinearCost,
    Scenario,
)
from lmpgame.pnsp import (
    PivotalPlayerError,
    PnspMechanism,
    construct_pnsp_efficient_bids,
    pnsp_settle,
)


def test_one_node_hand_example():
    sc = one_node_two_generators()
    st = pnsp_settle(sc, (Bid.linear(1.0), Bid.linear(2.0)))
    np.testing.assert_allclose(st.dispatch.x, [1, 0])
    np.testing.assert_allclose(st.exclusions[0].x, [0, 1])
    np.testing.assert_allclose(st.payments, [2.0, 0.0])
    np.testing.assert_allclose(st.payoffs, [1.0, 0.0])
    assert st.imbalance == pytest.approx(2.0)


def test_exclusions_zero_out_the_excluded_player():
    sc = example3().scenario
    st = pnsp_settle(sc, construct_pnsp_efficient_bids(sc))
    for n, ex in enumerate(st.exclusions):
        assert ex.x[n] == 0.0


def test_audit_reproduces_payments_exactly():
    rng = np.random.default_rng(4)
    for _ in range(10):
        sc = random_scenario(rng, assumption1=True)
        prof = construct_pnsp_efficient_bids(sc)
        st = pnsp_settle(sc, prof)
        assert np.array_equal(st.audit(sc), st.payments)
        assert (st.payments >= -1e-9).all()


def test_constructed_bids_examples():
    sc3 = example3().scenario
    assert construct_pnsp_efficient_bids(sc3) == (
        Bid(1, 2, 2), Bid(10, 0, 11), Bid(10, 0, 11), Bid(20, 0, 21)
    )
    sc2 = example2().scenario
    assert construct_pnsp_efficient_bids(sc2) == (
        Bid(1, 1, 2), Bid(2, 1, 3), Bid(3, 1, 4), Bid(4, 0, 5)
    )


def test_kinked_cost_uses_left_then_steeper_slope():
    sc = Scenario(
        nodes=(Node("1", 2.0),),
        lines=(),
        generators=(
            Generator("a", 0, PiecewiseLinearCost((2.0,), (1.0, 5.0))),
            Generator("b", 0, LinearCost(3.0)),
        ),
    )
    prof = construct_pnsp_efficient_bids(sc)
    assert prof[0] == Bid(1.0, 2.0, 6.0)
    mech = PnspMechanism()
    assert true_cost(sc, mech.dispatch(sc, prof).x) == pytest.approx(2.0)
    assert verify_epsilon_ne(sc, prof, mech, BidGrid(price_step=0.5)).is_equilibrium


def test_pivotal_generator_is_refused():
    with pytest.raises(PivotalPlayerError) as err:
        pnsp_settle(example1().scenario, (Bid.linear(1), Bid.linear(2)))
    assert err.value.pivotal == ["g2"]
    with pytest.raises(PivotalPlayerError):
        construct_pnsp_efficient_bids(example1().scenario)


def test_constructed_profile_is_efficient_and_stable():
    for sc in (example2().scenario, example3().scenario):
        prof = construct_pnsp_efficient_bids(sc)
        mech = PnspMechanism()
        opt = true_cost(sc, solve_economic_dispatch(sc).x)
        assert true_cost(sc, mech.dispatch(sc, prof).x) == pytest.approx(opt, abs=1e-8)
        rep = verify_epsilon_ne(sc, prof, mech, BidGrid(price_step=0.5))
        assert rep.is_equilibrium


def test_sampled_deviations_do_not_pay():
    rng = np.random.default_rng(8)
    sc = example3().scenario
    prof = construct_pnsp_efficient_bids(sc)
    mech = PnspMechanism()
    base = mech.payoffs(sc, prof)
    for _ in range(200):
        k = int(rng.integers(sc.n_players))
        p = float(rng.uniform(0, 30))
        q = p + float(rng.exponential(5))
        dev = prof[:k] + (Bid(p, float(rng.uniform(0, 3)), q),) + prof[k + 1:]
        assert mech.payoff(sc, dev, k) - base[k] <= 1e-7


def test_double_sided_settlement_reports_imbalance():
    sc = Scenario(
        nodes=(Node("1", 0.0),),
        lines=(),
        generators=(Generator("a", 0, LinearCost(1.0)), Generator("b", 0, LinearCost(2.0))),
        consumers=(Consumer("c", 0, LinearValuation(5.0), 1.0), Consumer("d", 0, LinearValuation(4.0), 1.0)),
    )
    prof = construct_pnsp_efficient_bids(sc)
    assert prof[2:] == (ConsumerBid(5.0, 1.0, 4.0), ConsumerBid(4.0, 1.0, 3.0))
    st = pnsp_settle(sc, prof)
    np.testing.assert_allclose(st.dispatch.x, [2, 0])
    np.testing.assert_allclose(st.dispatch.y, [1, 1])
    # generators are paid, consumers pay; the operator keeps or funds the difference
    assert (st.payments[:2] >= 0).all() and (st.payments[2:] <= 0).all()
    assert st.imbalance == pytest.approx(st.payments.sum())
