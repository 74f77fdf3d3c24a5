"""DC-flow economic dispatch, nodal prices, KKT audit and LMP payoffs.

Every dispatch problem is compiled to one LP over generator segment
quantities, consumer segment quantities and bus angles::

    min   sum(slope * segment) - sum(value * consumer segment)
    s.t.  injection_i - sum_j Y_ij (theta_i - theta_j) = D_i     ("balance", i)
          theta_0 = 0                                           ("gauge",)
          Y_ij (theta_i - theta_j) <= C_ij  for both directions  ("flow", i, j)

Ties among optimal dispatches are broken by, in order: filling first
segments before later ones, then lexicographically maximizing generator
outputs in index order, then consumer intakes. Prices are the
lexicographically smallest balance duals over the dual-optimal set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .lp import LinearProgram, LpStatus, lex_min_duals, solve_lp
from .model import Bid, ConsumerBid, Scenario

BINDING_TOL = 1e-7
KKT_TOL = 1e-7
_ZERO = 1e-9


class DispatchError(RuntimeError):
    status = "failed"


class InfeasibleDispatch(DispatchError):
    """Demand cannot be delivered; ``shortfall`` holds unserved MW per node id."""

    status = "infeasible"

    def __init__(self, message: str, shortfall: dict | None = None):
        super().__init__(message)
        self.shortfall = shortfall or {}


class UnboundedDispatch(DispatchError):
    status = "unbounded"


@dataclass(eq=False)
class DispatchResult:
    x: np.ndarray
    theta: np.ndarray
    flow: np.ndarray  # per line, positive from line.i to line.j
    pi: np.ndarray | None
    mu_forward: np.ndarray | None  # dual of flow i->j <= C
    mu_backward: np.ndarray | None  # dual of flow j->i <= C
    objective: float
    capacity: np.ndarray
    x_p: np.ndarray | None = None
    x_q: np.ndarray | None = None
    y: np.ndarray = field(default_factory=lambda: np.zeros(0))
    kind: str = "cost"  # "cost" (true curves) or "bid"

    @property
    def has_prices(self) -> bool:
        return self.pi is not None


# --------------------------------------------------------------------------
# compilation


def cost_segments(scenario: Scenario) -> list[list[tuple[float, float]]]:
    x_max = scenario.quantity_scale
    return [g.cost.segments(x_max) for g in scenario.generators]


def valuation_segments(scenario: Scenario) -> list[list[tuple[float, float]]]:
    return [_truncate(c.valuation.segments(), c.cap) for c in scenario.consumers]


def bid_segments(scenario: Scenario, profile) -> tuple[list, list]:
    n = scenario.n_generators
    if len(profile) != scenario.n_players:
        raise ValueError(f"profile has {len(profile)} bids for {scenario.n_players} players")
    gens = []
    for b in profile[:n]:
        if not isinstance(b, Bid):
            raise TypeError(f"generator bid expected, got {b!r}")
        gens.append(b.segments())
    cons = []
    for c, b in zip(scenario.consumers, profile[n:]):
        if not isinstance(b, ConsumerBid):
            raise TypeError(f"consumer bid expected, got {b!r}")
        cons.append(_truncate(b.segments(), c.cap))
    return gens, cons


def _truncate(segs, cap):
    if cap is None:
        return segs
    out, left = [], cap
    for slope, length in segs:
        take = min(length, left)
        out.append((slope, take))
        left -= take
    return out


@dataclass
class _Layout:
    gen_cols: list[list[int]]
    con_cols: list[list[int]]
    theta0: int
    n_vars: int


def build_dispatch_lp(
    scenario: Scenario,
    gen_segs,
    con_segs=(),
    excluded: frozenset = frozenset(),
    excluded_consumers: frozenset = frozenset(),
) -> tuple[LinearProgram, _Layout]:
    """Compile a dispatch problem. Excluded players have all segments fixed at zero."""
    I = scenario.n_nodes
    c, ub, gen_cols, con_cols = [], [], [], []
    for n, segs in enumerate(gen_segs):
        cols = []
        for slope, length in segs:
            cols.append(len(c))
            c.append(slope)
            ub.append(0.0 if n in excluded else length)
        gen_cols.append(cols)
    for m, segs in enumerate(con_segs):
        cols = []
        for value, length in segs:
            cols.append(len(c))
            c.append(-value)
            ub.append(0.0 if m in excluded_consumers else length)
        con_cols.append(cols)
    theta0 = len(c)
    nv = theta0 + I
    c = np.array(c + [0.0] * I)
    lb = np.zeros(nv)
    lb[theta0:] = -np.inf
    ub = np.array(ub + [np.inf] * I)

    A_eq = np.zeros((I + 1, nv))
    for n, cols in enumerate(gen_cols):
        A_eq[scenario.generators[n].node, cols] = 1.0
    for m, cols in enumerate(con_cols):
        A_eq[scenario.consumers[m].node, cols] = -1.0
    A_ub = np.zeros((2 * len(scenario.lines), nv))
    ub_labels = []
    for k, ln in enumerate(scenario.lines):
        i, j, y = ln.i, ln.j, ln.admittance
        # balance row i carries -sum_j Y_ij (theta_i - theta_j)
        A_eq[i, theta0 + i] -= y
        A_eq[i, theta0 + j] += y
        A_eq[j, theta0 + j] -= y
        A_eq[j, theta0 + i] += y
        A_ub[2 * k, theta0 + i], A_ub[2 * k, theta0 + j] = y, -y
        A_ub[2 * k + 1, theta0 + j], A_ub[2 * k + 1, theta0 + i] = y, -y
        ub_labels += [("flow", i, j), ("flow", j, i)]
    A_eq[I, theta0] = 1.0
    b_eq = np.append(scenario.demand, 0.0)
    b_ub = np.repeat([ln.capacity for ln in scenario.lines], 2)
    eq_labels = [("balance", i) for i in range(I)] + [("gauge",)]

    levels = []
    first_row = np.zeros(nv)
    for cols in gen_cols + con_cols:
        first_row[cols[1:]] = 1.0
    levels.append(first_row)
    for cols in gen_cols + con_cols:
        row = np.zeros(nv)
        row[cols] = -1.0
        levels.append(row)
    lp = LinearProgram(
        c=c, A_eq=A_eq, b_eq=b_eq, A_ub=A_ub, b_ub=b_ub, lb=lb, ub=ub,
        eq_labels=eq_labels, ub_labels=ub_labels, tiebreak=np.array(levels),
    )
    return lp, _Layout(gen_cols, con_cols, theta0, nv)


def _solve(scenario, gen_segs, con_segs, kind, with_prices, excluded, excluded_consumers):
    lp, layout = build_dispatch_lp(scenario, gen_segs, con_segs, excluded, excluded_consumers)
    sol = solve_lp(lp)
    if sol.status is LpStatus.INFEASIBLE:
        shortfall = diagnose_infeasibility(scenario, excluded)
        nodes = ", ".join(f"{k}: {v:.6g} MW" for k, v in shortfall.items()) or "unknown"
        raise InfeasibleDispatch(f"demand cannot be delivered; unserved at {nodes}", shortfall)
    if sol.status is LpStatus.UNBOUNDED:
        raise UnboundedDispatch("reported surplus is unbounded; add consumer caps or breakpoints")
    if not sol.optimal:
        raise DispatchError(f"solver failure: {sol.message}")
    v = sol.x
    x = np.array([v[cols].sum() for cols in layout.gen_cols])
    y = np.array([v[cols].sum() for cols in layout.con_cols])
    x_p = x_q = None
    if kind == "bid":
        x_p = np.array([v[cols[0]] for cols in layout.gen_cols])
        x_q = x - x_p
    theta = v[layout.theta0:]
    flow = np.array([ln.admittance * (theta[ln.i] - theta[ln.j]) for ln in scenario.lines])
    pi = mu_f = mu_b = None
    if with_prices:
        I = scenario.n_nodes
        vertex = sol.eq_duals[:I]
        floor = min(0.0, float(vertex.min()))
        duals = lex_min_duals(lp, lp.eq_labels[:I], floor=floor, solution=sol)
        pi = duals.eq[:I]
        mu_f = duals.ub[0::2].copy()
        mu_b = duals.ub[1::2].copy()
    return DispatchResult(
        x=x, theta=theta, flow=flow, pi=pi, mu_forward=mu_f, mu_backward=mu_b,
        objective=sol.objective, capacity=np.array([ln.capacity for ln in scenario.lines]),
        x_p=x_p, x_q=x_q, y=y, kind=kind,
    )


def diagnose_infeasibility(scenario: Scenario, excluded=frozenset()) -> dict:
    """Minimum unserved demand per node (by node id) when supply cannot reach load."""
    gen_segs = [[(0.0, math.inf)] for _ in scenario.generators]
    lp, layout = build_dispatch_lp(scenario, gen_segs, (), excluded)
    I = scenario.n_nodes
    nv = layout.n_vars
    # append one shed variable per node, costed at 1
    c = np.concatenate([np.zeros(nv), np.ones(I)])
    A_eq = np.hstack([lp.A_eq, np.vstack([np.eye(I), np.zeros((1, I))])])
    A_ub = np.hstack([lp.A_ub, np.zeros((lp.A_ub.shape[0], I))])
    relaxed = LinearProgram(
        c=c, A_eq=A_eq, b_eq=lp.b_eq, A_ub=A_ub, b_ub=lp.b_ub,
        lb=np.concatenate([lp.lb, np.zeros(I)]), ub=np.concatenate([lp.ub, np.full(I, np.inf)]),
    )
    sol = solve_lp(relaxed)
    if not sol.optimal:
        return {}
    shed = sol.x[nv:]
    return {scenario.nodes[i].id: float(shed[i]) for i in range(I) if shed[i] > 1e-9}


def solve_economic_dispatch(
    scenario: Scenario,
    with_prices: bool = True,
    excluded=frozenset(),
    excluded_consumers=frozenset(),
) -> DispatchResult:
    """Minimize true cost (maximize true surplus when consumers exist)."""
    return _solve(
        scenario, cost_segments(scenario), valuation_segments(scenario), "cost",
        with_prices, frozenset(excluded), frozenset(excluded_consumers),
    )


def solve_bid_dispatch(
    scenario: Scenario,
    profile,
    with_prices: bool = True,
    excluded=frozenset(),
    excluded_consumers=frozenset(),
) -> DispatchResult:
    """Dispatch against reported bids. ``profile`` lists generator bids, then consumer bids."""
    gen_segs, con_segs = bid_segments(scenario, tuple(profile))
    return _solve(
        scenario, gen_segs, con_segs, "bid", with_prices,
        frozenset(excluded), frozenset(excluded_consumers),
    )


def is_feasible(scenario: Scenario, excluded=frozenset(), excluded_consumers=frozenset()) -> bool:
    gen_segs = [[(0.0, math.inf)] for _ in scenario.generators]
    con_segs = [[(0.0, math.inf)] for _ in scenario.consumers]
    lp, _ = build_dispatch_lp(scenario, gen_segs, con_segs, frozenset(excluded), frozenset(excluded_consumers))
    lp.tiebreak = np.zeros((0, lp.n))
    return solve_lp(lp).status is LpStatus.OPTIMAL


# --------------------------------------------------------------------------
# audits


@dataclass
class KktReport:
    generator_stationarity: float
    consumer_stationarity: float
    network_stationarity: float
    primal_feasibility: float
    dual_feasibility: float
    complementary_slackness: float
    worst_generator: int | None = None

    @property
    def max_residual(self) -> float:
        return max(
            self.generator_stationarity, self.consumer_stationarity, self.network_stationarity,
            self.primal_feasibility, self.dual_feasibility, self.complementary_slackness,
        )

    def ok(self, tol: float = KKT_TOL) -> bool:
        return self.max_residual <= tol

    def as_dict(self) -> dict:
        return {
            "generator_stationarity": self.generator_stationarity,
            "consumer_stationarity": self.consumer_stationarity,
            "network_stationarity": self.network_stationarity,
            "primal_feasibility": self.primal_feasibility,
            "dual_feasibility": self.dual_feasibility,
            "complementary_slackness": self.complementary_slackness,
        }


def _subgradient(segs, x, tol=_ZERO):
    """(left, right) derivative of a segment curve at ``x``.

    A kink within ``tol`` of ``x`` widens the interval; ``left`` is -inf at
    zero and ``right`` is +inf at the end of a finite curve.
    """
    segs = [(s, length) for s, length in segs if length > tol]
    if not segs:
        return -math.inf, math.inf
    if x <= tol:
        return -math.inf, segs[0][0]
    start = 0.0
    for k, (slope, length) in enumerate(segs):
        end = start + length
        if x < end - tol:
            return slope, slope
        if x <= end + tol:
            return slope, segs[k + 1][0] if k + 1 < len(segs) else math.inf
        start = end
    return segs[-1][0], math.inf


def verify_kkt(scenario: Scenario, result: DispatchResult, profile=None) -> KktReport:
    """Residuals of the optimality conditions of ``result``.

    ``profile=None`` audits against the dispatched true-cost curves,
    otherwise against the bid curves.
    """
    if profile is None:
        gen_segs, con_segs = cost_segments(scenario), valuation_segments(scenario)
    else:
        gen_segs, con_segs = bid_segments(scenario, tuple(profile))
    pi, x, y = result.pi, result.x, result.y
    gen_res, worst = 0.0, None
    for n, g in enumerate(scenario.generators):
        left, right = _subgradient(gen_segs[n], x[n])
        price = pi[g.node]
        r = max(0.0, left - price, price - right)
        if r > gen_res:
            gen_res, worst = r, n
    con_res = 0.0
    for m, cons in enumerate(scenario.consumers):
        # concave value curve: price must lie in [right, left]
        left, right = _subgradient(con_segs[m], y[m])
        price = pi[cons.node]
        upper = math.inf if left == -math.inf else left
        lower = -math.inf if right == math.inf else right
        con_res = max(con_res, lower - price, price - upper)
    Y = scenario.admittance_matrix()
    I = scenario.n_nodes
    mu = np.zeros((I, I))
    for k, ln in enumerate(scenario.lines):
        mu[ln.i, ln.j] = result.mu_forward[k]
        mu[ln.j, ln.i] = result.mu_backward[k]
    net = np.array([(Y[i] * (pi[i] - pi + mu[i] - mu[:, i])).sum() for i in range(I)])
    injection = np.zeros(I)
    np.add.at(injection, [g.node for g in scenario.generators], x)
    if scenario.consumers:
        np.add.at(injection, [c.node for c in scenario.consumers], -y)
    theta = result.theta
    line_out = np.array([(Y[i] * (theta[i] - theta)).sum() for i in range(I)])
    balance = injection - scenario.demand - line_out
    flows_f = result.flow
    primal = max(
        float(np.abs(balance).max()),
        float(np.maximum(flows_f - result.capacity, 0).max(initial=0.0)),
        float(np.maximum(-flows_f - result.capacity, 0).max(initial=0.0)),
        float(np.maximum(-x, 0).max(initial=0.0)),
        float(np.maximum(-y, 0).max(initial=0.0)),
    )
    dual = float(np.maximum(-np.concatenate([result.mu_forward, result.mu_backward]), 0).max(initial=0.0))
    cs = float(
        np.abs(
            np.concatenate(
                [result.mu_forward * (result.capacity - flows_f), result.mu_backward * (result.capacity + flows_f)]
            )
        ).max(initial=0.0)
    )
    return KktReport(
        generator_stationarity=gen_res,
        consumer_stationarity=con_res,
        network_stationarity=float(np.abs(net).max()),
        primal_feasibility=primal,
        dual_feasibility=dual,
        complementary_slackness=cs,
        worst_generator=worst,
    )


@dataclass
class CongestionReport:
    holds: bool
    binding: list  # (line index, direction) pairs, direction +1 for i->j

    def __bool__(self) -> bool:
        return self.holds


def check_congestion_free(result: DispatchResult, binding_tol: float = BINDING_TOL) -> CongestionReport:
    binding = []
    for k, (f, cap) in enumerate(zip(result.flow, result.capacity)):
        if f >= cap - binding_tol:
            binding.append((k, 1))
        elif -f >= cap - binding_tol:
            binding.append((k, -1))
    return CongestionReport(not binding, binding)


def lmp_payoffs(scenario: Scenario, result: DispatchResult) -> np.ndarray:
    """``pi[node] * x - c(x)`` per generator, with the dispatched cost curves."""
    return np.array(
        [result.pi[g.node] * result.x[n] - c(max(result.x[n], 0.0))
         for n, (g, c) in enumerate(zip(scenario.generators, scenario.model_costs))]
    )


def true_cost(scenario: Scenario, x) -> float:
    """Total generation cost under the dispatched cost curves."""
    return float(sum(c(max(float(xn), 0.0)) for c, xn in zip(scenario.model_costs, x)))


def with_prices(result: DispatchResult, pi) -> DispatchResult:
    return replace(result, pi=np.asarray(pi, dtype=float))
