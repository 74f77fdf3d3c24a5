"""Factories for the three counterexample networks and small reference cases."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Bid, Consumer, Generator, Line, LinearCost, LinearValuation, Node, Scenario


class ExampleError(ValueError):
    """Example parameters violate a required inequality."""


@dataclass
class ExampleCase:
    scenario: Scenario
    x_star: np.ndarray
    params: dict
    ne_profile: tuple | None = None
    ne_x: np.ndarray | None = None
    ne_pi: np.ndarray | None = None
    notes: list[str] = field(default_factory=list)


def _require(ok: bool, relation: str, **vals):
    if not ok:
        shown = ", ".join(f"{k}={v:g}" for k, v in vals.items())
        raise ExampleError(f"requires {relation} (got {shown})")


def example1(C: float = 1.0, D: float = 2.0, a=(1.0, 2.0), cap: float | None = 10.0) -> ExampleCase:
    """Two nodes, one generator each, demand D at node 2 across a line of capacity C."""
    a1, a2 = map(float, a)
    _require(C > 0, "C > 0", C=C)
    _require(D > C, "D > C", D=D, C=C)
    _require(0 <= a1 < a2, "0 <= a1 < a2", a1=a1, a2=a2)
    if cap is not None:
        _require(cap > a2, "cap > a2", cap=cap, a2=a2)
    sc = Scenario(
        nodes=(Node("1", 0.0), Node("2", D)),
        lines=(Line(0, 1, 1.0, C),),
        generators=(Generator("g1", 0, LinearCost(a1)), Generator("g2", 1, LinearCost(a2))),
        bid_cap=cap,
        name="example1",
    )
    return ExampleCase(sc, np.array([C, D - C]), dict(C=C, D=D, a=[a1, a2], cap=cap))


def example1_uncongested(C: float = 10.0, D: float = 2.0, a=(1.0, 2.0), cap: float | None = 10.0) -> ExampleCase:
    """Example 1 network with line capacity at least the demand."""
    a1, a2 = map(float, a)
    _require(C >= D > 0, "C >= D > 0", C=C, D=D)
    _require(0 <= a1 < a2, "0 <= a1 < a2", a1=a1, a2=a2)
    sc = Scenario(
        nodes=(Node("1", 0.0), Node("2", D)),
        lines=(Line(0, 1, 1.0, C),),
        generators=(Generator("g1", 0, LinearCost(a1)), Generator("g2", 1, LinearCost(a2))),
        bid_cap=cap,
        name="example1-uncongested",
    )
    return ExampleCase(sc, np.array([D, 0.0]), dict(C=C, D=D, a=[a1, a2], cap=cap))


def example2(C: float = 1.0, Cp: float = 2.0, D: float = 3.0, a=(1.0, 2.0, 3.0, 4.0), cap: float | None = None) -> ExampleCase:
    """Three-node chain: g1 at 1, g2 at 2, g3 and g4 at 3; demand D at node 3."""
    a = tuple(map(float, a))
    _require(C > 0, "C > 0", C=C)
    _require(Cp > C, "C' > C", Cp=Cp, C=C)
    _require(D > Cp, "D > C'", D=D, Cp=Cp)
    _require(len(a) == 4 and 0 <= a[0] < a[1] < a[2] < a[3], "0 <= a1 < a2 < a3 < a4")
    if cap is not None:
        _require(cap > a[3], "cap > a4", cap=cap, a4=a[3])
    sc = Scenario(
        nodes=(Node("1", 0.0), Node("2", 0.0), Node("3", D)),
        lines=(Line(0, 1, 1.0, C), Line(1, 2, 1.0, Cp)),
        generators=(
            Generator("g1", 0, LinearCost(a[0])),
            Generator("g2", 1, LinearCost(a[1])),
            Generator("g3", 2, LinearCost(a[2])),
            Generator("g4", 2, LinearCost(a[3])),
        ),
        bid_cap=cap,
        name="example2",
    )
    return ExampleCase(sc, np.array([C, Cp - C, D - Cp, 0.0]), dict(C=C, Cp=Cp, D=D, a=list(a), cap=cap))


def example3(k: float = 10.0, C: float = 1.0) -> ExampleCase:
    """Two nodes with two generators each; demand 2C at node 1.

    Carries the inefficient equilibrium in which the cheap generator and the
    expensive one at node 1 bid 2k, the pair at node 2 bids k.
    """
    _require(k > 1, "k > 1", k=k)
    _require(C > 0, "C > 0", C=C)
    sc = Scenario(
        nodes=(Node("1", 2 * C), Node("2", 0.0)),
        lines=(Line(0, 1, 1.0, C),),
        generators=(
            Generator("g1", 0, LinearCost(1.0)),
            Generator("g2", 1, LinearCost(k)),
            Generator("g3", 1, LinearCost(k)),
            Generator("g4", 0, LinearCost(2 * k)),
        ),
        name="example3",
    )
    ne = tuple(Bid.linear(p) for p in (2 * k, k, k, 2 * k))
    return ExampleCase(
        sc,
        np.array([2 * C, 0.0, 0.0, 0.0]),
        dict(k=k, C=C),
        ne_profile=ne,
        ne_x=np.array([C, C, 0.0, 0.0]),
        ne_pi=np.array([2 * k, k]),
    )


def build_example(kind: int, **params) -> ExampleCase:
    """Example by number (1, 2 or 3) with keyword parameters."""
    makers = {1: example1, 2: example2, 3: example3}
    if kind not in makers:
        raise ExampleError(f"unknown example {kind!r}; choose 1, 2 or 3")
    return makers[kind](**params)


def one_node_two_generators(a=(1.0, 2.0), D: float = 1.0) -> Scenario:
    """Single node, two linear-cost generators serving demand ``D``."""
    return Scenario(
        nodes=(Node("1", D),),
        lines=(),
        generators=(Generator("g1", 0, LinearCost(a[0])), Generator("g2", 0, LinearCost(a[1]))),
        name="onenode2gen",
    )


def one_node_market(gen_slope: float = 1.0, r: float = 5.0, cap: float | None = None) -> Scenario:
    """One generator and one linear-valuation consumer at a single node."""
    return Scenario(
        nodes=(Node("1", 0.0),),
        lines=(),
        generators=(Generator("g1", 0, LinearCost(gen_slope)),),
        consumers=(Consumer("d1", 0, LinearValuation(r), cap),),
        name="onenode-market",
    )


__all__ = [
    "ExampleCase",
    "ExampleError",
    "build_example",
    "example1",
    "example1_uncongested",
    "example2",
    "example3",
    "one_node_two_generators",
    "one_node_market",
]
