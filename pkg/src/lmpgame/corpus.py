"""Seeded random scenarios for property tests and benchmarks."""

from __future__ import annotations

import numpy as np

from .conditions import check_assumption1
from .dispatch import is_feasible
from .model import Generator, Line, LinearCost, Node, PiecewiseLinearCost, QuadraticCost, Scenario


def random_cost(rng: np.random.Generator, kinds=("linear", "piecewise", "quadratic")):
    kind = kinds[rng.integers(len(kinds))]
    if kind == "linear":
        return LinearCost(float(rng.integers(1, 21)) / 2)
    if kind == "quadratic":
        return QuadraticCost(float(rng.integers(1, 11)) / 2, float(rng.integers(1, 5)) / 4)
    m = int(rng.integers(1, 3))
    breaks = np.sort(rng.choice(np.arange(1, 9), size=m, replace=False)).astype(float) / 2
    slopes = np.sort(rng.choice(np.arange(1, 21), size=m + 1, replace=False)).astype(float) / 2
    return PiecewiseLinearCost(tuple(breaks), tuple(slopes))


def random_network(rng: np.random.Generator, n_nodes: int, extra_lines: int = 2):
    """Random spanning tree plus up to ``extra_lines`` chords, as (i, j) pairs."""
    pairs = []
    order = rng.permutation(n_nodes)
    for k in range(1, n_nodes):
        pairs.append(tuple(sorted((int(order[k]), int(order[rng.integers(k)])))))
    for _ in range(extra_lines):
        if n_nodes < 3:
            break
        i, j = sorted(int(v) for v in rng.choice(n_nodes, size=2, replace=False))
        if (i, j) not in pairs:
            pairs.append((i, j))
    return pairs


def random_scenario(
    rng: np.random.Generator,
    max_nodes: int = 6,
    max_generators: int = 8,
    capacity_factor: float | None = None,
    cost_kinds=("linear", "piecewise", "quadratic"),
    bid_cap: float | None = None,
    assumption1: bool = False,
    monopoly_free: bool = False,
    max_tries: int = 200,
) -> Scenario:
    """A feasible connected scenario.

    With ``capacity_factor`` every line gets ``factor * total demand``;
    otherwise capacities are drawn at random. ``assumption1`` resamples
    until no single generator is pivotal. ``monopoly_free`` seats two
    generators at every node before placing the rest at random, so the
    generator count may exceed ``max_generators``.
    """
    for _ in range(max_tries):
        I = int(rng.integers(1, max_nodes + 1))
        lo = 2 if assumption1 else 1
        G = int(rng.integers(lo, max(lo, max_generators) + 1))
        demand = rng.integers(0, 5, size=I).astype(float) / 2
        if demand.sum() == 0:
            demand[rng.integers(I)] = 1.0
        total = float(demand.sum())
        lines = []
        for i, j in random_network(rng, I):
            cap = capacity_factor * total if capacity_factor else float(rng.integers(1, 9)) / 2
            lines.append(Line(i, j, float(rng.integers(1, 5)), cap))
        seats = [i for i in range(I) for _ in range(2)] if monopoly_free else []
        seats += [int(rng.integers(I)) for _ in range(max(G - len(seats), 0))]
        gens = tuple(
            Generator(f"g{n + 1}", node, random_cost(rng, cost_kinds)) for n, node in enumerate(seats)
        )
        sc = Scenario(
            nodes=tuple(Node(str(i + 1), float(d)) for i, d in enumerate(demand)),
            lines=tuple(lines),
            generators=gens,
            bid_cap=bid_cap,
            name="random",
        )
        if not is_feasible(sc):
            continue
        if assumption1 and not check_assumption1(sc):
            continue
        return sc
    raise RuntimeError("could not draw a feasible scenario")
