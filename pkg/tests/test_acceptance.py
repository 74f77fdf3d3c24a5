"""Acceptance suite: one printed PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in
the terminal summary under "acceptance criteria".
"""

import time

import numpy as np

from lmpgame.cases import example1, example1_uncongested, example2, example3
from lmpgame.conditions import check_conditions
from lmpgame.corpus import random_scenario
from lmpgame.dispatch import solve_bid_dispatch, solve_economic_dispatch, true_cost, verify_kkt
from lmpgame.double_sided import solve_double_sided, steep_consumer_reduction
from lmpgame.game import (
    BidGrid,
    LmpMechanism,
    best_response_dynamics,
    construct_ne_congestion_free,
    construct_ne_monopoly_free,
    find_grid_equilibria,
    price_of_anarchy,
    random_linear_profile,
    verify_epsilon_ne,
)
from lmpgame.lp import lex_min_duals, residuals, solve_lp
from lmpgame.model import Bid
from lmpgame.pnsp import PnspMechanism, construct_pnsp_efficient_bids
from oracles import lex_dual_by_enumeration, random_lp

EPS = 1e-6
KKT_LIMIT = 1e-7

# (scenario, bid profile or None) pairs whose dispatches the KKT audit replays
AUDITED: list = []


def _audit(scenario, profile=None):
    AUDITED.append((scenario, None if profile is None else tuple(profile)))


def _equilibrium_corpus():
    """Examples plus seeded random scenarios built to meet each condition."""
    rng = np.random.default_rng(2024)
    corpus = [example1().scenario, example1_uncongested().scenario, example2().scenario, example3().scenario]
    for _ in range(4):
        corpus.append(random_scenario(rng, max_nodes=3, max_generators=4, monopoly_free=True))
    for _ in range(4):
        corpus.append(random_scenario(rng, max_nodes=3, max_generators=4, capacity_factor=10, assumption1=True))
    return corpus


def _random_bid(rng, top, quantity):
    p = float(rng.uniform(0, top))
    return Bid(p, float(rng.uniform(0, quantity)), p + float(rng.exponential(top / 4)))


def test_criterion_1_reference_dispatches(criterion):
    cases = {
        "example 1": (example1(C=1, D=2, a=(1, 2)), [1, 1]),
        "example 2": (example2(C=1, Cp=2, D=3, a=(1, 2, 3, 4)), [1, 1, 1, 0]),
        "example 3": (example3(k=10, C=1), [2, 0, 0, 0]),
    }
    errors = {}
    for name, (case, expected) in cases.items():
        res = solve_economic_dispatch(case.scenario)
        _audit(case.scenario)
        errors[name] = float(np.abs(res.x - expected).max())
    ok = max(errors.values()) <= 1e-8
    detail = ", ".join(f"{k} max|dx|={v:.1e}" for k, v in errors.items())
    assert criterion(1, ok, f"{detail} (tol 1e-8)")


def test_criterion_2_example3_equilibrium_and_poa(criterion):
    grid = BidGrid(price_step=0.1)
    mech = LmpMechanism()
    msgs, ok = [], True
    for k in (10, 100):
        case = example3(k=k, C=1)
        sc, prof = case.scenario, case.ne_profile
        _audit(sc, prof)
        rep = verify_epsilon_ne(sc, prof, mech, grid, EPS)
        out = mech.dispatch(sc, prof)
        poa = price_of_anarchy(sc, [prof], grid, EPS, mech=mech)
        good = (
            rep.is_equilibrium
            and np.abs(out.x - [1, 1, 0, 0]).max() <= 1e-9
            and np.abs(out.pi - [2 * k, k]).max() <= 1e-9
            and abs(poa.ratio - (k + 1) / 2) <= 1e-9
        )
        ok &= bool(good)
        msgs.append(f"k={k}: {rep.verdict}, max gain {rep.gains.max():.1e}, PoA={poa.ratio:.10g}")
    assert criterion(2, ok, "; ".join(msgs))


def test_criterion_3_example1_nonexistence(criterion):
    start = time.perf_counter()
    case = example1(C=1, D=2, a=(1, 2), cap=10)
    sc = case.scenario
    a, a2, C = 10.0, 2.0, 1.0
    eps = 0.1 * (a - a2) * C
    grid = BidGrid(price_step=0.5, augment=False, linear_only=True)
    mech = LmpMechanism()
    found, count = find_grid_equilibria(sc, mech, grid, eps)
    rng = np.random.default_rng(7)
    periods = []
    for _ in range(5):
        init = random_linear_profile(sc, grid, rng)
        _audit(sc, init)
        rep = best_response_dynamics(sc, init, mech, grid, max_rounds=200, eps=eps)
        periods.append(rep.period if rep.status == "cycle" else 0)
    elapsed = time.perf_counter() - start
    ok = not found and count == 21 ** 2 and all(p >= 2 for p in periods) and elapsed <= 60
    detail = (
        f"{count} profiles scanned, {len(found)} ε-NE at ε={eps:g}; "
        f"cycle periods {periods} (steps); {elapsed:.1f}s"
    )
    assert criterion(3, ok, detail)


def test_criterion_4_uniform_prices_without_congestion(criterion):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        sc = random_scenario(rng, max_nodes=6, max_generators=8, capacity_factor=10)
        res = solve_economic_dispatch(sc)
        _audit(sc)
        worst = max(worst, float(res.pi.max() - res.pi.min()))
    ok = worst <= 1e-7
    assert criterion(4, ok, f"100 networks, worst price spread {worst:.1e} (tol 1e-7)")


def test_criterion_5_efficient_equilibria(criterion):
    grid = BidGrid(price_step=0.5)
    mech = LmpMechanism()
    checked = {"congestion-free": 0, "monopoly-free": 0}
    worst_gain, worst_cost, ok = 0.0, 0.0, True
    for sc in _equilibrium_corpus():
        cond = check_conditions(sc)
        builders = []
        if cond.assumption1 and cond.congestion_free:
            builders.append(("congestion-free", construct_ne_congestion_free))
        if cond.monopoly_free:
            builders.append(("monopoly-free", construct_ne_monopoly_free))
        opt = true_cost(sc, solve_economic_dispatch(sc, with_prices=False).x)
        for name, build in builders:
            prof = build(sc)
            _audit(sc, prof)
            rep = verify_epsilon_ne(sc, prof, mech, grid, EPS)
            gap = abs(true_cost(sc, mech.dispatch(sc, prof).x) - opt)
            worst_gain = max(worst_gain, float(rep.gains.max()))
            worst_cost = max(worst_cost, gap)
            ok &= rep.is_equilibrium and gap <= 1e-8
            checked[name] += 1
    ok &= min(checked.values()) > 0
    detail = (
        f"{checked['congestion-free']} congestion-free and {checked['monopoly-free']} monopoly-free "
        f"profiles; max gain {worst_gain:.1e}, max cost gap {worst_cost:.1e}"
    )
    assert criterion(5, ok, detail)


def test_criterion_6_pnsp_efficiency_and_incentives(criterion):
    rng = np.random.default_rng(6)
    scenarios = [(example2().scenario, BidGrid(price_step=0.5)), (example3().scenario, BidGrid(price_step=0.5))]
    for _ in range(50):
        sc = random_scenario(rng, max_nodes=3, max_generators=4, assumption1=True)
        scenarios.append((sc, BidGrid(price_step=1.0)))
    worst_cost = worst_gain = worst_dev = 0.0
    ok = True
    for sc, grid in scenarios:
        mech = PnspMechanism()
        prof = construct_pnsp_efficient_bids(sc)
        _audit(sc, prof)
        opt = true_cost(sc, solve_economic_dispatch(sc, with_prices=False).x)
        gap = abs(true_cost(sc, mech.dispatch(sc, prof).x) - opt)
        rep = verify_epsilon_ne(sc, prof, mech, grid, EPS)
        base = mech.payoffs(sc, prof)
        top = grid.ceiling(sc, prof)
        dev_gain = -np.inf
        for _ in range(1000):
            k = int(rng.integers(sc.n_players))
            trial = prof[:k] + (_random_bid(rng, top, 1.5 * sc.total_demand),) + prof[k + 1:]
            dev_gain = max(dev_gain, mech.payoff(sc, trial, k) - base[k])
        worst_cost = max(worst_cost, gap)
        worst_gain = max(worst_gain, float(rep.gains.max()))
        worst_dev = max(worst_dev, float(dev_gain))
        ok &= gap <= 1e-8 and rep.is_equilibrium and dev_gain <= 1e-7
    detail = (
        f"{len(scenarios)} scenarios; max cost gap {worst_cost:.1e}, max grid gain {worst_gain:.1e}, "
        f"max sampled deviation gain {worst_dev:.1e}"
    )
    assert criterion(6, ok, detail)


def test_criterion_7_lp_core(criterion):
    rng = np.random.default_rng(7)
    worst_gap = worst_cs = worst_dual = 0.0
    compared = mismatches = unstable = 0
    for _ in range(500):
        lp = random_lp(rng, integer=bool(rng.integers(2)))
        sol = solve_lp(lp)
        if not sol.optimal:
            mismatches += 1
            continue
        res = residuals(lp, sol)
        worst_gap, worst_cs = max(worst_gap, res["gap"]), max(worst_cs, res["cs"])
        again = solve_lp(lp)
        if not (
            sol.x.tobytes() == again.x.tobytes()
            and sol.eq_duals.tobytes() == again.eq_duals.tobytes()
            and sol.ub_duals.tobytes() == again.ub_duals.tobytes()
        ):
            unstable += 1
        if lp.A_eq.shape[0] + lp.A_ub.shape[0] <= 6:
            floor = min(0.0, float(sol.eq_duals.min(initial=0.0))) - 1.0
            dv = lex_min_duals(lp, lp.labels, floor=floor, solution=sol)
            ref = lex_dual_by_enumeration(lp, sol.objective, floor)
            compared += 1
            if ref is None:
                mismatches += 1
                continue
            err = max(np.abs(dv.eq - ref[0]).max(initial=0.0), np.abs(dv.ub - ref[1]).max(initial=0.0))
            worst_dual = max(worst_dual, float(err))
            mismatches += err > 1e-8
    ok = worst_gap <= 1e-8 and worst_cs <= 1e-8 and mismatches == 0 and unstable == 0
    detail = (
        f"500 LPs; max gap {worst_gap:.1e}, max CS {worst_cs:.1e}; lex duals vs enumeration on "
        f"{compared}: max diff {worst_dual:.1e}, {mismatches} mismatches; {unstable} non-identical repeats"
    )
    assert criterion(7, ok, detail)


def test_criterion_8_steep_consumer_reduction(criterion):
    rng = np.random.default_rng(8)
    worst_x = worst_pi = 0.0
    for _ in range(50):
        sc = random_scenario(rng, max_nodes=4, max_generators=5)
        top = max(g.cost.right_derivative(0.0) for g in sc.generators) + 5.0
        prof = tuple(_random_bid(rng, top, sc.total_demand) for _ in sc.generators)
        ref = solve_bid_dispatch(sc, prof)
        reduced, consumer_bids = steep_consumer_reduction(sc)
        out = solve_double_sided(reduced, prof, consumer_bids)
        _audit(sc, prof)
        _audit(reduced, prof + consumer_bids)
        worst_x = max(worst_x, float(np.abs(out.dispatch.x - ref.x).max()))
        worst_pi = max(worst_pi, float(np.abs(out.dispatch.pi - ref.pi).max()))
    ok = worst_x <= 1e-7 and worst_pi <= 1e-7
    assert criterion(8, ok, f"50 scenarios; max |dx|={worst_x:.1e}, max |dpi|={worst_pi:.1e} (tol 1e-7)")


def test_criterion_9_kkt_audit(criterion):
    # the corpus gathered above, plus a standalone sweep so this check runs on its own
    pairs = list(AUDITED)
    rng = np.random.default_rng(9)
    for sc in _equilibrium_corpus():
        pairs.append((sc, None))
    for _ in range(50):
        sc = random_scenario(rng)
        top = max(g.cost.right_derivative(0.0) for g in sc.generators) + 5.0
        pairs += [(sc, None), (sc, tuple(_random_bid(rng, top, sc.total_demand) for _ in sc.generators))]
    worst, families = 0.0, {}
    for sc, prof in pairs:
        if prof is None:
            res = solve_economic_dispatch(sc)
        else:
            res = solve_bid_dispatch(sc, prof)
        rep = verify_kkt(sc, res, prof)
        for name, value in rep.as_dict().items():
            if isinstance(value, float):
                families[name] = max(families.get(name, 0.0), value)
        worst = max(worst, rep.max_residual)
    ok = worst <= KKT_LIMIT
    detail = f"{len(pairs)} dispatches; worst residual {worst:.1e} (tol 1e-7); " + ", ".join(
        f"{k}={v:.0e}" for k, v in sorted(families.items())
    )
    assert criterion(9, ok, detail)
