"""Strategic bidding: mechanisms, best responses, equilibrium checks, dynamics.

Players are the scenario's generators followed by its consumers; a profile
is a tuple holding one :class:`Bid` per generator and one
:class:`ConsumerBid` per consumer in that order.

The bid space is continuous, so every search here runs over a finite
:class:`BidGrid`. A profile that survives :func:`verify_epsilon_ne` is a
*grid* ε-equilibrium; it is evidence for, not proof of, an equilibrium of
the continuous game.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from .conditions import check_assumption1, check_monopoly_free
from .dispatch import (
    DispatchResult,
    check_congestion_free,
    solve_bid_dispatch,
    solve_economic_dispatch,
    true_cost,
)
from .model import Bid, ConsumerBid, QuadraticCost, Scenario

DEFAULT_EPS = 1e-6
TIE_TOL = 1e-9


class PreconditionError(ValueError):
    """A construction or analysis was asked for outside its hypotheses."""


# --------------------------------------------------------------------------
# mechanisms


class _ScenarioCache:
    """Memo keyed by scenario identity then by an arbitrary hashable key."""

    def __init__(self, limit: int = 200_000):
        self._store: dict[int, tuple[Scenario, dict]] = {}
        self.limit = limit

    def table(self, scenario: Scenario) -> dict:
        entry = self._store.get(id(scenario))
        if entry is None or entry[0] is not scenario:
            entry = (scenario, {})
            self._store[id(scenario)] = entry
        if len(entry[1]) > self.limit:
            entry[1].clear()
        return entry[1]


class Mechanism:
    """Maps (scenario, profile) to a dispatch and one payoff per player."""

    name = "mechanism"

    def dispatch(self, scenario: Scenario, profile) -> DispatchResult:
        raise NotImplementedError

    def payoff(self, scenario: Scenario, profile, player: int) -> float:
        raise NotImplementedError

    def payoffs(self, scenario: Scenario, profile) -> np.ndarray:
        return np.array([self.payoff(scenario, profile, k) for k in range(scenario.n_players)])


class LmpMechanism(Mechanism):
    """Nodal pricing: generators earn ``pi x - c(x)``, consumers ``v(y) - pi y``."""

    name = "LMP"

    def __init__(self):
        self._cache = _ScenarioCache()

    def _evaluate(self, scenario, profile):
        table = self._cache.table(scenario)
        hit = table.get(profile)
        if hit is None:
            res = solve_bid_dispatch(scenario, profile)
            hit = (res, lmp_outcome_payoffs(scenario, res))
            table[profile] = hit
        return hit

    def dispatch(self, scenario, profile):
        return self._evaluate(scenario, tuple(profile))[0]

    def payoff(self, scenario, profile, player):
        return float(self._evaluate(scenario, tuple(profile))[1][player])

    def payoffs(self, scenario, profile):
        return self._evaluate(scenario, tuple(profile))[1].copy()


def lmp_outcome_payoffs(scenario: Scenario, result: DispatchResult) -> np.ndarray:
    pi = result.pi
    gens = [
        pi[g.node] * result.x[n] - c(max(result.x[n], 0.0))
        for n, (g, c) in enumerate(zip(scenario.generators, scenario.model_costs))
    ]
    cons = [c.valuation(max(result.y[m], 0.0)) - pi[c.node] * result.y[m] for m, c in enumerate(scenario.consumers)]
    return np.array(gens + cons)


LMP = LmpMechanism


# --------------------------------------------------------------------------
# bid grid


def _round(v: float) -> float:
    return round(float(v), 10)


@dataclass(frozen=True)
class BidGrid:
    """Finite action set for best-response search.

    Prices run over ``0, price_step, ...`` up to the ceiling (the scenario
    bid cap unless given). With ``augment`` the set also holds every bid
    price in the profile and the player's own marginal-cost slopes, each
    shifted by ``±micro_step``. Two-piece bids
    (``p < q``) pair prices from the critical set (augmentation values, zero
    and the ceiling) unless ``two_piece_prices="full"``, with breakpoints on
    the quantity grid.
    """

    price_step: float = 0.5
    price_ceiling: float | None = None
    quantity_step: float | None = None
    quantity_ceiling: float | None = None
    augment: bool = True
    micro_step: float = 1e-4
    linear_only: bool = False
    two_piece_prices: str = "critical"

    def __post_init__(self):
        if not self.price_step > 0:
            raise ValueError("price_step must be > 0")
        if self.quantity_step is not None and not self.quantity_step > 0:
            raise ValueError("quantity_step must be > 0")
        for name in ("price_ceiling", "quantity_ceiling"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be > 0")
        if self.two_piece_prices not in ("critical", "full"):
            raise ValueError("two_piece_prices must be 'critical' or 'full'")

    def refined(self, factor: int = 2) -> "BidGrid":
        """A grid whose price levels contain this grid's levels."""
        return replace(self, price_step=self.price_step / factor)

    # -- ceilings

    def ceiling(self, scenario: Scenario, profile=()) -> float:
        if self.price_ceiling is not None:
            return self.price_ceiling
        if scenario.bid_cap is not None:
            return scenario.bid_cap
        prices = _true_slopes(scenario) + _profile_prices(profile)
        top = max(prices, default=0.0)
        return 1.5 * top if top > 0 else 1.0

    def q_ceiling(self, scenario: Scenario) -> float:
        if self.quantity_ceiling is not None:
            return self.quantity_ceiling
        total = scenario.total_demand + sum(c.cap or 0.0 for c in scenario.consumers)
        return total if total > 0 else 1.0

    # -- levels

    def critical_prices(self, scenario: Scenario, profile, player: int, coarse: bool = False) -> list[float]:
        """Bid prices in the profile and the player's own cost slopes, each ``±micro_step``.

        Other players' true costs never enter the player's payoff, so their
        slopes are left out. ``coarse`` keeps only the end slopes of a
        linearized quadratic.
        """
        top = self.ceiling(scenario, profile)
        base = _own_slopes(scenario, player, coarse) + _profile_prices(profile)
        out = set()
        for v in base:
            for d in (-self.micro_step, 0.0, self.micro_step):
                w = v + d
                if 0 <= w <= top:
                    out.add(_round(w))
        return sorted(out)

    def price_levels(self, scenario: Scenario, profile=(), player: int | None = None) -> list[float]:
        top = self.ceiling(scenario, profile)
        k = int(np.floor(top / self.price_step + 1e-9))
        levels = {_round(i * self.price_step) for i in range(k + 1)}
        levels.add(_round(top))
        if self.augment and player is not None:
            levels.update(self.critical_prices(scenario, profile, player))
        return sorted(levels)

    def quantity_levels(self, scenario: Scenario, profile=(), player: int | None = None) -> list[float]:
        top = self.q_ceiling(scenario)
        step = self.quantity_step or top / 4
        k = int(np.floor(top / step + 1e-9))
        levels = {_round(i * step) for i in range(1, k + 1)}
        levels.add(_round(top))
        if self.augment:
            extra = [nd.demand for nd in scenario.nodes] + [ln.capacity for ln in scenario.lines]
            extra += [c.cap for c in scenario.consumers if c.cap is not None]
            extra += [getattr(b, "s", getattr(b, "t", 0.0)) for b in profile]
            levels.update(_round(v) for v in extra if 0 < v <= top)
        return sorted(levels)

    def candidates(self, scenario: Scenario, profile, player: int) -> list:
        """Sorted candidate bids for ``player``, including its current bid."""
        profile = tuple(profile)
        prices = self.price_levels(scenario, profile, player)
        consumer = player >= scenario.n_generators
        make = ConsumerBid if consumer else Bid
        out = {make(p, 0.0, p) for p in prices}
        if not self.linear_only:
            if self.two_piece_prices == "full":
                pair_prices = prices
            else:
                pair_prices = sorted(
                    set(self.critical_prices(scenario, profile, player, coarse=True) if self.augment else [])
                    | {0.0, _round(self.ceiling(scenario, profile))}
                )
            quantities = self.quantity_levels(scenario, profile, player)
            for lo, hi in itertools.combinations(pair_prices, 2):
                for s in quantities:
                    out.add(ConsumerBid(hi, s, lo) if consumer else Bid(lo, s, hi))
        if profile:
            out.add(profile[player])
        return sorted(out)


def _true_slopes(scenario: Scenario) -> list[float]:
    from .dispatch import cost_segments, valuation_segments

    slopes = []
    for segs in cost_segments(scenario) + valuation_segments(scenario):
        slopes.extend(s for s, _ in segs)
    return slopes


def _own_slopes(scenario: Scenario, player: int, coarse: bool = False) -> list[float]:
    from .dispatch import cost_segments, valuation_segments

    n = scenario.n_generators
    if player < n:
        segs = cost_segments(scenario)[player]
    else:
        segs = valuation_segments(scenario)[player - n]
    slopes = [s for s, _ in segs]
    if coarse and len(slopes) > 2 and player < n and isinstance(scenario.generators[player].cost, QuadraticCost):
        slopes = [slopes[0], slopes[-1]]
    return slopes


def _profile_prices(profile) -> list[float]:
    out = []
    for b in profile:
        if isinstance(b, Bid):
            out += [b.p, b.q]
        else:
            out += [b.r, b.w]
    return out


# --------------------------------------------------------------------------
# best response and equilibrium checks


@dataclass
class BestResponse:
    player: int
    bid: object
    payoff: float
    current_payoff: float
    evaluated: int
    ceiling_binding: bool = False

    @property
    def gain(self) -> float:
        return self.payoff - self.current_payoff


def best_response(
    scenario: Scenario, profile, player: int, mech: Mechanism, grid: BidGrid
) -> BestResponse:
    """Best grid bid for ``player`` with the others fixed.

    Ties go to the lexicographically smallest bid.
    """
    profile = tuple(profile)
    current = mech.payoff(scenario, profile, player)
    best_bid, best_val = None, -np.inf
    cands = grid.candidates(scenario, profile, player)
    for bid in cands:
        trial = profile[:player] + (bid,) + profile[player + 1:]
        val = mech.payoff(scenario, trial, player)
        if val > best_val + TIE_TOL:
            best_bid, best_val = bid, val
    top = grid.ceiling(scenario, profile)
    high = best_bid.q if isinstance(best_bid, Bid) else best_bid.r
    return BestResponse(player, best_bid, best_val, current, len(cands), abs(high - top) <= 1e-12)


@dataclass
class EquilibriumReport:
    verdict: str  # "grid ε-NE" or "refuted"
    eps: float
    payoffs: np.ndarray
    gains: np.ndarray
    responses: list[BestResponse]
    witness: BestResponse | None = None

    @property
    def is_equilibrium(self) -> bool:
        return self.witness is None


def verify_epsilon_ne(
    scenario: Scenario, profile, mech: Mechanism, grid: BidGrid, eps: float = DEFAULT_EPS
) -> EquilibriumReport:
    """Check every player's best grid deviation against ``eps``."""
    profile = tuple(profile)
    responses = [best_response(scenario, profile, k, mech, grid) for k in range(scenario.n_players)]
    gains = np.array([r.gain for r in responses])
    witness = None
    if gains.size and gains.max() > eps:
        witness = responses[int(gains.argmax())]
    return EquilibriumReport(
        verdict="refuted" if witness else "grid ε-NE",
        eps=eps,
        payoffs=np.array([r.current_payoff for r in responses]),
        gains=gains,
        responses=responses,
        witness=witness,
    )


def replay_deviation(scenario: Scenario, profile, mech: Mechanism, response: BestResponse) -> float:
    """Payoff change of ``response.player`` when switching to ``response.bid``."""
    profile = tuple(profile)
    k = response.player
    trial = profile[:k] + (response.bid,) + profile[k + 1:]
    return mech.payoff(scenario, trial, k) - mech.payoff(scenario, profile, k)


@dataclass
class Step:
    round: int
    player: int
    bid: object
    payoff: float
    moved: bool


@dataclass
class DynamicsReport:
    status: str  # "fixed_point", "cycle" or "max_rounds"
    steps: list[Step]
    final: tuple
    period: int | None = None  # steps between repeated states
    cycle_start: int | None = None
    n_players: int = 0

    @property
    def period_rounds(self) -> float | None:
        return None if self.period is None else self.period / self.n_players

    def cycle_profiles(self, initial) -> list[tuple]:
        """Profiles visited along the detected cycle (replayed from ``initial``)."""
        if self.cycle_start is None:
            return []
        prof, out = tuple(initial), []
        for t, st in enumerate(self.steps):
            prof = prof[: st.player] + (st.bid,) + prof[st.player + 1:]
            if t >= self.cycle_start:
                out.append(prof)
        return out


def best_response_dynamics(
    scenario: Scenario,
    init,
    mech: Mechanism,
    grid: BidGrid,
    max_rounds: int = 200,
    eps: float = DEFAULT_EPS,
) -> DynamicsReport:
    """Round-robin best responses in player order.

    A player moves only when its best response gains more than ``eps``.
    Stops at a fixed point (a full round without moves), on revisiting a
    (profile, next player) state, or after ``max_rounds`` rounds.
    """
    profile = tuple(init)
    N = scenario.n_players
    seen = {(profile, 0): 0}
    steps: list[Step] = []
    still = 0
    for t in range(max_rounds * N):
        k = t % N
        br = best_response(scenario, profile, k, mech, grid)
        moved = br.gain > eps
        if moved:
            profile = profile[:k] + (br.bid,) + profile[k + 1:]
            still = 0
        else:
            still += 1
        steps.append(Step(t // N, k, profile[k], mech.payoff(scenario, profile, k), moved))
        if still >= N:
            return DynamicsReport("fixed_point", steps, profile, n_players=N)
        state = (profile, (k + 1) % N)
        if state in seen:
            start = seen[state]
            return DynamicsReport("cycle", steps, profile, len(steps) - start, start, N)
        seen[state] = len(steps)
    return DynamicsReport("max_rounds", steps, profile, n_players=N)


def find_grid_equilibria(
    scenario: Scenario, mech: Mechanism, grid: BidGrid, eps: float, linear: bool = True
) -> tuple[list[tuple], int]:
    """Exhaustively test every linear-bid grid profile; returns (equilibria, profiles scanned)."""
    if not linear:
        raise NotImplementedError("exhaustive scans are restricted to linear bids")
    levels = grid.price_levels(scenario)
    n = scenario.n_generators
    found, count = [], 0
    for prices in itertools.product(levels, repeat=scenario.n_players):
        profile = tuple(Bid.linear(p) for p in prices[:n]) + tuple(ConsumerBid.linear(p) for p in prices[n:])
        count += 1
        if verify_epsilon_ne(scenario, profile, mech, grid, eps).is_equilibrium:
            found.append(profile)
    return found, count


def random_linear_profile(scenario: Scenario, grid: BidGrid, rng: np.random.Generator) -> tuple:
    levels = grid.price_levels(scenario)
    n = scenario.n_generators
    picks = [float(levels[i]) for i in rng.integers(0, len(levels), scenario.n_players)]
    return tuple(Bid.linear(p) for p in picks[:n]) + tuple(ConsumerBid.linear(p) for p in picks[n:])


# --------------------------------------------------------------------------
# efficient-equilibrium constructions


def _lmp_profile(scenario: Scenario, ed: DispatchResult) -> tuple:
    bids = tuple(
        Bid(ed.pi[g.node], max(ed.x[n], 0.0), ed.pi[g.node]) for n, g in enumerate(scenario.generators)
    )
    return bids


def construct_ne_congestion_free(scenario: Scenario) -> tuple:
    """Everyone bids linearly at the uniform economic-dispatch price.

    The breakpoint is set to the generator's efficient output so that the
    dispatch rule selects the efficient outcome among reported-cost ties.
    """
    if scenario.consumers:
        raise PreconditionError("the construction covers inelastic demand only")
    a1 = check_assumption1(scenario)
    if not a1:
        raise PreconditionError(f"Assumption 1 fails: pivotal generators {a1.pivotal}")
    ed = solve_economic_dispatch(scenario)
    cong = check_congestion_free(ed)
    if not cong:
        raise PreconditionError(f"congestion-free condition fails: binding lines {cong.binding}")
    return _lmp_profile(scenario, ed)


def construct_ne_monopoly_free(scenario: Scenario) -> tuple:
    """Every generator bids linearly at its node's economic-dispatch price."""
    if scenario.consumers:
        raise PreconditionError("the construction covers inelastic demand only")
    mono = check_monopoly_free(scenario)
    if not mono:
        raise PreconditionError(f"monopoly-free condition fails at nodes {mono.monopoly_nodes}")
    ed = solve_economic_dispatch(scenario)
    return _lmp_profile(scenario, ed)


# --------------------------------------------------------------------------
# price of anarchy


@dataclass
class PoaReport:
    ratio: float
    optimal_cost: float
    equilibrium_costs: list[float]
    verified: list[int]
    excluded: list[int] = field(default_factory=list)


def price_of_anarchy(
    scenario: Scenario,
    profiles,
    grid: BidGrid,
    eps: float = DEFAULT_EPS,
    mech: Mechanism | None = None,
) -> PoaReport:
    """Worst verified equilibrium cost over the optimal cost (a lower bound on the PoA)."""
    mech = mech or LmpMechanism()
    opt = true_cost(scenario, solve_economic_dispatch(scenario, with_prices=False).x)
    verified, excluded, costs = [], [], []
    for k, prof in enumerate(profiles):
        if verify_epsilon_ne(scenario, prof, mech, grid, eps).is_equilibrium:
            verified.append(k)
            costs.append(true_cost(scenario, mech.dispatch(scenario, tuple(prof)).x))
        else:
            excluded.append(k)
    if not verified:
        raise PreconditionError("no profile verified as a grid equilibrium")
    worst = max(costs)
    if opt <= 0:
        ratio = 1.0 if worst <= 0 else float("inf")
    else:
        ratio = worst / opt
    return PoaReport(ratio, opt, costs, verified, excluded)
