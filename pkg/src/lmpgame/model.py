"""Networks, cost and valuation curves, bids, and scenario documents.

Scenario documents are JSON with power in MW, prices in $/MWh and
admittances in per-unit::

    {
      "nodes": [{"id": "1", "demand": 0.0}, ...],
      "lines": [{"from": "1", "to": "2", "admittance": 1.0, "capacity": 1.0}, ...],
      "generators": [{"id": "g1", "node": "1", "cost": {"kind": "linear", "params": {"a": 1.0}}}, ...],
      "consumers": [{"id": "c1", "node": "2", "valuation": {...}, "cap": 5.0}, ...],
      "bid_cap": 10.0
    }

Cost kinds are ``linear`` (params ``a``), ``quadratic`` (``a``, ``b``) and
``piecewise`` (``breakpoints``, ``slopes``). Valuations accept ``linear``
and ``piecewise`` with nonincreasing slopes.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Union

import numpy as np

QUAD_SEGMENTS = 64
# quantities this close to a breakpoint are treated as sitting on it
KINK_TOL = 1e-9


class ScenarioError(ValueError):
    """A scenario or bid document is malformed or violates an invariant."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


# --------------------------------------------------------------------------
# curves


@dataclass(frozen=True)
class PiecewiseLinearCost:
    """Convex piecewise-linear cost through the origin.

    ``slopes[k]`` applies on ``[breakpoints[k-1], breakpoints[k]]``; the last
    slope extends to infinity.
    """

    breakpoints: tuple[float, ...]
    slopes: tuple[float, ...]
    kind = "piecewise"

    def __post_init__(self):
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        object.__setattr__(self, "slopes", tuple(float(s) for s in self.slopes))
        if len(self.slopes) != len(self.breakpoints) + 1:
            raise ScenarioError("piecewise cost needs len(slopes) == len(breakpoints) + 1")
        if any(b <= 0 for b in self.breakpoints) or any(
            b2 <= b1 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])
        ):
            raise ScenarioError("breakpoints must be positive and increasing")
        if self.slopes[0] < 0 or any(s2 < s1 for s1, s2 in zip(self.slopes, self.slopes[1:])):
            raise ScenarioError("cost slopes must be nonnegative and nondecreasing")

    def __call__(self, x: float) -> float:
        return _pwl_value(self.breakpoints, self.slopes, x)

    def left_derivative(self, x: float) -> float:
        if x <= 0:
            return self.slopes[0]
        k = int(np.searchsorted(self.breakpoints, x - KINK_TOL, side="left"))
        return self.slopes[k]

    def right_derivative(self, x: float) -> float:
        k = int(np.searchsorted(self.breakpoints, x + KINK_TOL, side="right"))
        return self.slopes[k]

    def segments(self, x_max: float | None = None) -> list[tuple[float, float]]:
        return _pwl_segments(self.breakpoints, self.slopes)

    def to_dict(self) -> dict:
        return {"kind": "piecewise", "params": {"breakpoints": list(self.breakpoints), "slopes": list(self.slopes)}}


@dataclass(frozen=True)
class LinearCost:
    a: float
    kind = "linear"

    def __post_init__(self):
        if not self.a >= 0:
            raise ScenarioError("linear cost slope must be >= 0")

    def __call__(self, x: float) -> float:
        return self.a * x

    def left_derivative(self, x: float) -> float:
        return self.a

    def right_derivative(self, x: float) -> float:
        return self.a

    def segments(self, x_max: float | None = None) -> list[tuple[float, float]]:
        return [(self.a, math.inf)]

    def to_dict(self) -> dict:
        return {"kind": "linear", "params": {"a": self.a}}


@dataclass(frozen=True)
class QuadraticCost:
    """``a*x + b*x**2``; dispatched through a chord linearization."""

    a: float
    b: float
    kind = "quadratic"

    def __post_init__(self):
        if not (self.a >= 0 and self.b >= 0):
            raise ScenarioError("quadratic cost needs a >= 0 and b >= 0")

    def __call__(self, x: float) -> float:
        return self.a * x + self.b * x * x

    def left_derivative(self, x: float) -> float:
        return self.a + 2 * self.b * x

    right_derivative = left_derivative

    def segments(self, x_max: float | None = None) -> list[tuple[float, float]]:
        if self.b == 0 or not x_max or x_max <= 0:
            return [(self.a, math.inf)]
        h = x_max / QUAD_SEGMENTS
        segs = [(self.a + self.b * h * (2 * k + 1), h) for k in range(QUAD_SEGMENTS)]
        segs.append((self.a + 2 * self.b * x_max, math.inf))
        return segs

    def interpolant(self, x_max: float | None) -> "PiecewiseLinearCost | LinearCost":
        """The chord curve the dispatch actually prices."""
        segs = self.segments(x_max)
        if len(segs) == 1:
            return LinearCost(self.a)
        breaks = tuple(float(b) for b in np.cumsum([w for _, w in segs[:-1]]))
        return PiecewiseLinearCost(breaks, tuple(s for s, _ in segs))

    def to_dict(self) -> dict:
        return {"kind": "quadratic", "params": {"a": self.a, "b": self.b}}


CostFunction = Union[LinearCost, QuadraticCost, PiecewiseLinearCost]


@dataclass(frozen=True)
class LinearValuation:
    r: float
    kind = "linear"

    def __post_init__(self):
        if not self.r >= 0:
            raise ScenarioError("valuation slope must be >= 0")

    def __call__(self, y: float) -> float:
        return self.r * y

    def left_derivative(self, y: float) -> float:
        return self.r

    def right_derivative(self, y: float) -> float:
        return self.r

    def segments(self, y_max: float | None = None) -> list[tuple[float, float]]:
        return [(self.r, math.inf)]

    def to_dict(self) -> dict:
        return {"kind": "linear", "params": {"r": self.r}}


@dataclass(frozen=True)
class PiecewiseLinearValuation:
    """Concave piecewise-linear valuation through the origin."""

    breakpoints: tuple[float, ...]
    slopes: tuple[float, ...]
    kind = "piecewise"

    def __post_init__(self):
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        object.__setattr__(self, "slopes", tuple(float(s) for s in self.slopes))
        if len(self.slopes) != len(self.breakpoints) + 1:
            raise ScenarioError("piecewise valuation needs len(slopes) == len(breakpoints) + 1")
        if any(b <= 0 for b in self.breakpoints) or any(
            b2 <= b1 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])
        ):
            raise ScenarioError("breakpoints must be positive and increasing")
        if self.slopes[-1] < 0 or any(s2 > s1 for s1, s2 in zip(self.slopes, self.slopes[1:])):
            raise ScenarioError("valuation slopes must be nonnegative and nonincreasing")

    def __call__(self, y: float) -> float:
        return _pwl_value(self.breakpoints, self.slopes, y)

    def left_derivative(self, y: float) -> float:
        if y <= 0:
            return self.slopes[0]
        return self.slopes[int(np.searchsorted(self.breakpoints, y - KINK_TOL, side="left"))]

    def right_derivative(self, y: float) -> float:
        return self.slopes[int(np.searchsorted(self.breakpoints, y + KINK_TOL, side="right"))]

    def segments(self, y_max: float | None = None) -> list[tuple[float, float]]:
        return _pwl_segments(self.breakpoints, self.slopes)

    def to_dict(self) -> dict:
        return {"kind": "piecewise", "params": {"breakpoints": list(self.breakpoints), "slopes": list(self.slopes)}}


Valuation = Union[LinearValuation, PiecewiseLinearValuation]


def _pwl_value(breakpoints, slopes, x):
    if x < 0:
        raise ValueError("quantity must be >= 0")
    total, prev = 0.0, 0.0
    for b, s in zip(breakpoints, slopes):
        if x <= b:
            return total + s * (x - prev)
        total += s * (b - prev)
        prev = b
    return total + slopes[-1] * (x - prev)


def _pwl_segments(breakpoints, slopes):
    edges = (0.0,) + breakpoints
    segs = [(s, b - a) for s, a, b in zip(slopes, edges, breakpoints)]
    segs.append((slopes[-1], math.inf))
    return segs


# --------------------------------------------------------------------------
# bids


@dataclass(frozen=True, order=True)
class Bid:
    """Generator offer: slope ``p`` up to ``s`` MW, slope ``q >= p`` beyond."""

    p: float
    s: float
    q: float

    def __post_init__(self):
        for name in ("p", "s", "q"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (0 <= self.p <= self.q and self.s >= 0):
            raise ScenarioError(f"bid needs 0 <= p <= q and s >= 0, got {self}")

    @classmethod
    def linear(cls, price: float) -> "Bid":
        return cls(price, 0.0, price)

    def cost(self, x: float) -> float:
        return bid_cost(self, x)

    def segments(self) -> list[tuple[float, float]]:
        return [(self.p, self.s), (self.q, math.inf)]

    def left_derivative(self, x: float) -> float:
        return self.p if x <= self.s else self.q

    def right_derivative(self, x: float) -> float:
        return self.p if x < self.s else self.q

    def to_dict(self) -> dict:
        return {"p": self.p, "s": self.s, "q": self.q}


def bid_cost(bid: Bid, x: float) -> float:
    """Reported cost of producing ``x`` under ``bid``."""
    if x < 0:
        raise ValueError("quantity must be >= 0")
    if x <= bid.s:
        return bid.p * x
    return bid.q * x + (bid.p - bid.q) * bid.s


@dataclass(frozen=True, order=True)
class ConsumerBid:
    """Consumer bid: value ``r`` per MW up to ``t`` MW, ``w <= r`` beyond."""

    r: float
    t: float
    w: float

    def __post_init__(self):
        for name in ("r", "t", "w"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (0 <= self.w <= self.r and self.t >= 0):
            raise ScenarioError(f"consumer bid needs 0 <= w <= r and t >= 0, got {self}")

    @classmethod
    def linear(cls, price: float) -> "ConsumerBid":
        return cls(price, 0.0, price)

    def value(self, y: float) -> float:
        if y < 0:
            raise ValueError("quantity must be >= 0")
        if y <= self.t:
            return self.r * y
        return self.w * y + (self.r - self.w) * self.t

    def segments(self) -> list[tuple[float, float]]:
        return [(self.r, self.t), (self.w, math.inf)]

    def left_derivative(self, y: float) -> float:
        return self.r if y <= self.t else self.w

    def right_derivative(self, y: float) -> float:
        return self.r if y < self.t else self.w

    def to_dict(self) -> dict:
        return {"r": self.r, "t": self.t, "w": self.w}


# --------------------------------------------------------------------------
# scenario


@dataclass(frozen=True)
class Node:
    id: str
    demand: float = 0.0


@dataclass(frozen=True)
class Line:
    i: int
    j: int
    admittance: float
    capacity: float


@dataclass(frozen=True)
class Generator:
    id: str
    node: int
    cost: CostFunction


@dataclass(frozen=True)
class Consumer:
    id: str
    node: int
    valuation: Valuation
    cap: float | None = None


@dataclass(frozen=True)
class Scenario:
    nodes: tuple[Node, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    consumers: tuple[Consumer, ...] = ()
    bid_cap: float | None = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        problems = _validate(self)
        if problems:
            raise ScenarioError(problems)

    @property
    def quantity_scale(self) -> float:
        """Span over which quadratic costs are linearized."""
        total = self.total_demand + sum(c.cap or 0.0 for c in self.consumers)
        return total if total > 0 else 1.0

    @cached_property
    def model_costs(self) -> tuple:
        """Cost curves as dispatched: quadratics become their chord interpolants."""
        return tuple(
            g.cost.interpolant(self.quantity_scale) if isinstance(g.cost, QuadraticCost) else g.cost
            for g in self.generators
        )

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_generators(self) -> int:
        return len(self.generators)

    @property
    def n_players(self) -> int:
        return len(self.generators) + len(self.consumers)

    @property
    def demand(self) -> np.ndarray:
        return np.array([nd.demand for nd in self.nodes])

    @property
    def total_demand(self) -> float:
        return float(sum(nd.demand for nd in self.nodes))

    def node_index(self, node_id: str) -> int:
        for k, nd in enumerate(self.nodes):
            if nd.id == node_id:
                return k
        raise KeyError(node_id)

    def generator_index(self, gen_id: str) -> int:
        for k, g in enumerate(self.generators):
            if g.id == gen_id:
                return k
        raise KeyError(gen_id)

    def player_index(self, player_id: str) -> int:
        ids = [g.id for g in self.generators] + [c.id for c in self.consumers]
        return ids.index(player_id)

    def generators_at(self, i: int) -> list[int]:
        return [k for k, g in enumerate(self.generators) if g.node == i]

    def admittance_matrix(self) -> np.ndarray:
        Y = np.zeros((self.n_nodes, self.n_nodes))
        for ln in self.lines:
            Y[ln.i, ln.j] = Y[ln.j, ln.i] = ln.admittance
        return Y

    def with_demand(self, demand) -> "Scenario":
        nodes = tuple(replace(nd, demand=float(d)) for nd, d in zip(self.nodes, demand))
        return replace(self, nodes=nodes)

    def with_capacity(self, capacity) -> "Scenario":
        if np.isscalar(capacity):
            capacity = [capacity] * len(self.lines)
        lines = tuple(replace(ln, capacity=float(c)) for ln, c in zip(self.lines, capacity))
        return replace(self, lines=lines)

    def with_bid_cap(self, cap: float | None) -> "Scenario":
        return replace(self, bid_cap=cap)

    def digest(self) -> str:
        return hashlib.sha256(dump_scenario(self).encode()).hexdigest()


def _validate(sc: Scenario) -> list[str]:
    problems = []
    n = len(sc.nodes)
    if n == 0:
        problems.append("nodes: at least one node is required")
    ids = [nd.id for nd in sc.nodes]
    if len(set(ids)) != len(ids):
        problems.append("nodes: ids must be unique")
    for k, nd in enumerate(sc.nodes):
        if not (nd.demand >= 0 and math.isfinite(nd.demand)):
            problems.append(f"nodes[{k}].demand: must be a finite number >= 0, got {nd.demand}")
    pairs = set()
    for k, ln in enumerate(sc.lines):
        if not (0 <= ln.i < n and 0 <= ln.j < n) or ln.i == ln.j:
            problems.append(f"lines[{k}]: endpoints must be two distinct nodes")
            continue
        key = frozenset((ln.i, ln.j))
        if key in pairs:
            problems.append(f"lines[{k}]: duplicate line between {ids[ln.i]} and {ids[ln.j]}")
        pairs.add(key)
        if not ln.admittance > 0:
            problems.append(f"lines[{k}].admittance: must be > 0")
        if not ln.capacity > 0:
            problems.append(f"lines[{k}].capacity: must be > 0")
    if n and not problems and not _connected(n, sc.lines):
        problems.append("lines: the network must be connected")
    gids = [g.id for g in sc.generators] + [c.id for c in sc.consumers]
    if len(set(gids)) != len(gids):
        problems.append("generators/consumers: ids must be unique")
    for k, g in enumerate(sc.generators):
        if not 0 <= g.node < n:
            problems.append(f"generators[{k}].node: unknown node")
    for k, c in enumerate(sc.consumers):
        if not 0 <= c.node < n:
            problems.append(f"consumers[{k}].node: unknown node")
        if c.cap is not None and not c.cap >= 0:
            problems.append(f"consumers[{k}].cap: must be >= 0")
    if sc.bid_cap is not None and not sc.bid_cap > 0:
        problems.append("bid_cap: must be > 0")
    return problems


def _connected(n: int, lines) -> bool:
    adj = {k: set() for k in range(n)}
    for ln in lines:
        adj[ln.i].add(ln.j)
        adj[ln.j].add(ln.i)
    seen, stack = {0}, [0]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == n


# --------------------------------------------------------------------------
# documents


def cost_from_dict(d: dict) -> CostFunction:
    kind, params = d.get("kind"), d.get("params", {})
    if kind == "linear":
        return LinearCost(float(params["a"]))
    if kind == "quadratic":
        return QuadraticCost(float(params["a"]), float(params["b"]))
    if kind == "piecewise":
        return PiecewiseLinearCost(tuple(params["breakpoints"]), tuple(params["slopes"]))
    raise ScenarioError(f"unknown cost kind {kind!r}")


def valuation_from_dict(d: dict) -> Valuation:
    kind, params = d.get("kind"), d.get("params", {})
    if kind == "linear":
        return LinearValuation(float(params["r"]))
    if kind == "piecewise":
        return PiecewiseLinearValuation(tuple(params["breakpoints"]), tuple(params["slopes"]))
    raise ScenarioError(f"unknown valuation kind {kind!r}")


def scenario_from_dict(doc: dict, name: str = "") -> Scenario:
    problems = []
    for key in ("nodes", "lines", "generators"):
        if not isinstance(doc.get(key), list):
            problems.append(f"{key}: required array missing")
    if problems:
        raise ScenarioError(problems)
    try:
        nodes = tuple(Node(str(nd["id"]), float(nd.get("demand", 0.0))) for nd in doc["nodes"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"nodes: malformed entry ({exc})") from None
    index = {nd.id: k for k, nd in enumerate(nodes)}

    def node_ref(where, ref):
        try:
            return index[str(ref)]
        except KeyError:
            problems.append(f"{where}: unknown node {ref!r}")
            return -1

    lines, gens, cons = [], [], []
    for k, ln in enumerate(doc["lines"]):
        try:
            i = node_ref(f"lines[{k}].from", ln["from"])
            j = node_ref(f"lines[{k}].to", ln["to"])
            lines.append(Line(i, j, float(ln["admittance"]), float(ln["capacity"])))
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"lines[{k}]: malformed entry ({exc})")
    for k, g in enumerate(doc["generators"]):
        try:
            gens.append(Generator(str(g["id"]), node_ref(f"generators[{k}].node", g["node"]), cost_from_dict(g["cost"])))
        except ScenarioError as exc:
            problems.append(f"generators[{k}].cost: {exc}")
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"generators[{k}]: malformed entry ({exc})")
    for k, c in enumerate(doc.get("consumers") or []):
        try:
            cap = c.get("cap")
            cons.append(
                Consumer(
                    str(c["id"]),
                    node_ref(f"consumers[{k}].node", c["node"]),
                    valuation_from_dict(c["valuation"]),
                    None if cap is None else float(cap),
                )
            )
        except ScenarioError as exc:
            problems.append(f"consumers[{k}].valuation: {exc}")
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"consumers[{k}]: malformed entry ({exc})")
    if problems:
        raise ScenarioError(problems)
    cap = doc.get("bid_cap")
    return Scenario(
        nodes, tuple(lines), tuple(gens), tuple(cons), None if cap is None else float(cap), name=name
    )


def scenario_to_dict(sc: Scenario) -> dict:
    ids = [nd.id for nd in sc.nodes]
    doc = {
        "units": {"power": "MW", "price": "$/MWh", "admittance": "p.u."},
        "nodes": [{"id": nd.id, "demand": nd.demand} for nd in sc.nodes],
        "lines": [
            {"from": ids[ln.i], "to": ids[ln.j], "admittance": ln.admittance, "capacity": ln.capacity}
            for ln in sc.lines
        ],
        "generators": [{"id": g.id, "node": ids[g.node], "cost": g.cost.to_dict()} for g in sc.generators],
    }
    if sc.consumers:
        doc["consumers"] = []
        for c in sc.consumers:
            entry = {"id": c.id, "node": ids[c.node], "valuation": c.valuation.to_dict()}
            if c.cap is not None:
                entry["cap"] = c.cap
            doc["consumers"].append(entry)
    if sc.bid_cap is not None:
        doc["bid_cap"] = sc.bid_cap
    return doc


def load_scenario(text: str, name: str = "") -> Scenario:
    """Parse a scenario JSON document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"parse error: {exc}") from None
    if not isinstance(doc, dict):
        raise ScenarioError("parse error: top level must be an object")
    return scenario_from_dict(doc, name=name)


def dump_scenario(sc: Scenario) -> str:
    return json.dumps(scenario_to_dict(sc), indent=2, sort_keys=True)


def read_scenario(path) -> Scenario:
    with open(path) as fh:
        return load_scenario(fh.read(), name=str(path))


Profile = tuple  # tuple[Bid | ConsumerBid, ...], generators first


def load_bids(text: str, scenario: Scenario) -> Profile:
    """Parse a bid-profile document (JSON array of {generator, p, s, q}).

    Consumers appear as {consumer, r, t, w}. Every player must be present.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"parse error: {exc}") from None
    if not isinstance(doc, list):
        raise ScenarioError("bid profile must be a JSON array")
    gen_bids: dict[str, Bid] = {}
    con_bids: dict[str, ConsumerBid] = {}
    for k, entry in enumerate(doc):
        try:
            if "generator" in entry:
                gen_bids[str(entry["generator"])] = Bid(entry["p"], entry.get("s", 0.0), entry.get("q", entry["p"]))
            else:
                con_bids[str(entry["consumer"])] = ConsumerBid(entry["r"], entry.get("t", 0.0), entry.get("w", entry["r"]))
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"bids[{k}]: malformed entry ({exc})") from None
    missing = [g.id for g in scenario.generators if g.id not in gen_bids]
    missing += [c.id for c in scenario.consumers if c.id not in con_bids]
    if missing:
        raise ScenarioError(f"bids: missing players {missing}")
    profile = tuple(gen_bids[g.id] for g in scenario.generators)
    profile += tuple(con_bids[c.id] for c in scenario.consumers)
    check_bid_cap(scenario, profile)
    return profile


def dump_bids(scenario: Scenario, profile) -> str:
    out = []
    for g, b in zip(scenario.generators, profile):
        out.append({"generator": g.id, **b.to_dict()})
    for c, b in zip(scenario.consumers, profile[scenario.n_generators:]):
        out.append({"consumer": c.id, **b.to_dict()})
    return json.dumps(out, indent=2)


def check_bid_cap(scenario: Scenario, profile) -> None:
    if scenario.bid_cap is None:
        return
    for b in profile[: scenario.n_generators]:
        if b.q > scenario.bid_cap + 1e-12:
            raise ScenarioError(f"bid {b} exceeds the bid cap {scenario.bid_cap}")
