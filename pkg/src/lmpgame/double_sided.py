"""Markets where consumers bid too: reported-surplus dispatch and its payoffs."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dispatch import DispatchResult, cost_segments, solve_bid_dispatch
from .model import Consumer, ConsumerBid, PiecewiseLinearValuation, Scenario


@dataclass
class DoubleSidedOutcome:
    dispatch: DispatchResult
    generator_payoffs: np.ndarray
    consumer_payoffs: np.ndarray
    surplus: float  # reported valuations minus reported costs

    @property
    def payoffs(self) -> np.ndarray:
        return np.concatenate([self.generator_payoffs, self.consumer_payoffs])


def solve_double_sided(scenario: Scenario, gen_bids, consumer_bids) -> DoubleSidedOutcome:
    """Maximize reported surplus; payoffs use true costs and valuations at the LMPs.

    Raises :class:`UnboundedDispatch` when some consumer would buy without
    limit, i.e. its last bid slope beats every generator's and it has no cap.
    """
    profile = tuple(gen_bids) + tuple(consumer_bids)
    res = solve_bid_dispatch(scenario, profile)
    pi = res.pi
    gp = np.array([pi[g.node] * res.x[n] - c(max(res.x[n], 0.0)) for n, (g, c) in enumerate(zip(scenario.generators, scenario.model_costs))])
    cp = np.array([c.valuation(max(res.y[m], 0.0)) - pi[c.node] * res.y[m] for m, c in enumerate(scenario.consumers)])
    return DoubleSidedOutcome(res, gp, cp, -res.objective)


def max_marginal_cost(scenario: Scenario) -> float:
    """Largest true marginal-cost slope over the dispatch range."""
    return max((s for segs in cost_segments(scenario) for s, _ in segs), default=0.0)


def steep_consumer_reduction(scenario: Scenario, factor: float = 10.0):
    """Replace each positive inelastic demand by a consumer that wants exactly it.

    The consumer bids ``r = factor * max slope`` up to the demand and
    ``w = 0`` beyond, and is capped at the demand so the program stays
    bounded. Returns the new scenario and the consumer bids.
    """
    r = factor * max(max_marginal_cost(scenario), 1.0)
    consumers, bids = list(scenario.consumers), []
    for i, nd in enumerate(scenario.nodes):
        if nd.demand > 0:
            val = PiecewiseLinearValuation((nd.demand,), (r, 0.0))
            consumers.append(Consumer(f"load-{nd.id}", i, val, nd.demand))
            bids.append(ConsumerBid(r, nd.demand, 0.0))
    reduced = replace(scenario, nodes=tuple(replace(nd, demand=0.0) for nd in scenario.nodes), consumers=tuple(consumers))
    return reduced, tuple(bids)


__all__ = [
    "DoubleSidedOutcome",
    "solve_double_sided",
    "steep_consumer_reduction",
    "max_marginal_cost",
]
