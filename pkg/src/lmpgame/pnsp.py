"""Second-price settlement over the network.

Dispatch is the same bid-cost minimization as under nodal pricing. Each
player is instead paid the externality it imposes on the others: the
others' reported cost when the player is excluded, minus their reported
cost at the actual dispatch. With consumers the "reported cost" is net of
reported valuations, and a consumer's transfer is normally negative (it
pays).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conditions import check_assumption1
from .dispatch import DispatchResult, InfeasibleDispatch, solve_bid_dispatch, solve_economic_dispatch
from .game import Mechanism, PreconditionError, _ScenarioCache
from .model import Bid, ConsumerBid, Scenario

DEFAULT_Q_GAP = 1.0


class PivotalPlayerError(PreconditionError):
    """Excluding some player leaves no feasible dispatch."""

    def __init__(self, message: str, pivotal: list[str]):
        super().__init__(message)
        self.pivotal = pivotal


def reported_net_cost(scenario: Scenario, profile, x, y, skip: int | None = None) -> float:
    """Sum of reported costs minus reported valuations, omitting player ``skip``."""
    n = scenario.n_generators
    total = 0.0
    for k, bid in enumerate(profile):
        if k == skip:
            continue
        if k < n:
            total += bid.cost(max(float(x[k]), 0.0))
        else:
            total -= bid.value(max(float(y[k - n]), 0.0))
    return total


def _exclude(scenario: Scenario, profile, k: int) -> DispatchResult:
    n = scenario.n_generators
    ex = {"excluded": {k}} if k < n else {"excluded_consumers": {k - n}}
    return solve_bid_dispatch(scenario, profile, with_prices=False, **ex)


@dataclass
class PnspSettlement:
    """Dispatch, transfers and payoffs with the exclusion audit trail.

    ``payments[k]`` is the transfer to player k (negative means k pays).
    """

    dispatch: DispatchResult
    payments: np.ndarray
    payoffs: np.ndarray
    exclusions: list[DispatchResult]
    exclusion_objectives: np.ndarray  # others' reported net cost at x^{-k}
    actual_objectives: np.ndarray  # others' reported net cost at x
    profile: tuple

    @property
    def imbalance(self) -> float:
        """Total transfers paid out; positive means the operator runs a deficit."""
        return float(self.payments.sum())

    def audit(self, scenario: Scenario) -> np.ndarray:
        """Recompute the transfers from the stored exclusion dispatches."""
        out = []
        for k, ex in enumerate(self.exclusions):
            a = reported_net_cost(scenario, self.profile, ex.x, ex.y, skip=k)
            b = reported_net_cost(scenario, self.profile, self.dispatch.x, self.dispatch.y, skip=k)
            out.append(a - b)
        return np.array(out)


def _require_assumption1(scenario: Scenario):
    report = check_assumption1(scenario)
    if not report:
        raise PivotalPlayerError(
            f"Assumption 1 fails: removing {', '.join(report.pivotal)} leaves no feasible dispatch",
            report.pivotal,
        )


def pnsp_settle(scenario: Scenario, profile) -> PnspSettlement:
    """Solve the bid dispatch and one exclusion dispatch per player."""
    profile = tuple(profile)
    _require_assumption1(scenario)
    res = solve_bid_dispatch(scenario, profile, with_prices=False)
    n = scenario.n_generators
    exclusions, ex_obj, act_obj = [], [], []
    for k in range(scenario.n_players):
        try:
            ex = _exclude(scenario, profile, k)
        except InfeasibleDispatch as err:
            pid = (scenario.generators[k].id if k < n else scenario.consumers[k - n].id)
            raise PivotalPlayerError(f"excluding {pid} is infeasible: {err}", [pid]) from err
        exclusions.append(ex)
        ex_obj.append(reported_net_cost(scenario, profile, ex.x, ex.y, skip=k))
        act_obj.append(reported_net_cost(scenario, profile, res.x, res.y, skip=k))
    ex_obj, act_obj = np.array(ex_obj), np.array(act_obj)
    payments = ex_obj - act_obj
    payoffs = payments.copy()
    for k, c in enumerate(scenario.model_costs):
        payoffs[k] -= c(max(res.x[k], 0.0))
    for m, c in enumerate(scenario.consumers):
        payoffs[n + m] += c.valuation(max(res.y[m], 0.0))
    return PnspSettlement(res, payments, payoffs, exclusions, ex_obj, act_obj, profile)


class PnspMechanism(Mechanism):
    """Second-price payoffs under the shared mechanism contract.

    A player's exclusion dispatch depends only on the others' bids, so it is
    cached across that player's candidate deviations.
    """

    name = "PNSP"

    def __init__(self, check: bool = True):
        self.check = check
        self._dispatch = _ScenarioCache()
        self._excl = _ScenarioCache()
        self._checked: set[int] = set()

    def dispatch(self, scenario, profile):
        profile = tuple(profile)
        table = self._dispatch.table(scenario)
        hit = table.get(profile)
        if hit is None:
            hit = table[profile] = solve_bid_dispatch(scenario, profile, with_prices=False)
        return hit

    def _exclusion_cost(self, scenario, profile, k):
        key = (k, profile[:k] + profile[k + 1:])
        table = self._excl.table(scenario)
        hit = table.get(key)
        if hit is None:
            ex = _exclude(scenario, profile, k)
            hit = table[key] = reported_net_cost(scenario, profile, ex.x, ex.y, skip=k)
        return hit

    def payoff(self, scenario, profile, player):
        profile = tuple(profile)
        if self.check and id(scenario) not in self._checked:
            _require_assumption1(scenario)
            self._checked.add(id(scenario))
        res = self.dispatch(scenario, profile)
        w = self._exclusion_cost(scenario, profile, player) - reported_net_cost(
            scenario, profile, res.x, res.y, skip=player
        )
        n = scenario.n_generators
        if player < n:
            return float(w - scenario.model_costs[player](max(res.x[player], 0.0)))
        c = scenario.consumers[player - n]
        return float(w + c.valuation(max(res.y[player - n], 0.0)))


PNSP = PnspMechanism


def construct_pnsp_efficient_bids(scenario: Scenario, q_gap: float = DEFAULT_Q_GAP) -> tuple:
    """Bids that make the efficient dispatch an equilibrium under second pricing.

    Each generator bids its marginal cost at the efficient output up to that
    output, then a steeper slope. At a kink the first slope is the left
    derivative (the right one at zero output) and the second slope sits
    ``q_gap`` above the right derivative. Consumers mirror this with their
    marginal valuations.
    """
    if not q_gap > 0:
        raise ValueError("q_gap must be > 0")
    _require_assumption1(scenario)
    ed = solve_economic_dispatch(scenario, with_prices=False)
    bids = []
    for n, cost in enumerate(scenario.model_costs):
        x = max(float(ed.x[n]), 0.0)
        right = cost.right_derivative(x)
        p = cost.left_derivative(x) if x > 1e-12 else right
        bids.append(Bid(p, x, max(right, p) + q_gap))
    for m, c in enumerate(scenario.consumers):
        y = max(float(ed.y[m]), 0.0)
        left = c.valuation.left_derivative(y) if y > 1e-12 else c.valuation.right_derivative(0.0)
        right = c.valuation.right_derivative(y)
        w = max(min(right, left) - q_gap, 0.0)
        bids.append(ConsumerBid(left, y, w))
    return tuple(bids)
