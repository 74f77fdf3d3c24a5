"""Structural conditions under which efficient equilibria are guaranteed."""

from __future__ import annotations

from dataclasses import dataclass, field

from .dispatch import CongestionReport, check_congestion_free, is_feasible, solve_economic_dispatch
from .model import Scenario


@dataclass
class AssumptionReport:
    """Feasibility of the dispatch set with each generator removed in turn."""

    holds: bool
    per_generator: dict[str, bool]
    pivotal: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.holds


def check_assumption1(scenario: Scenario) -> AssumptionReport:
    per = {}
    for n, g in enumerate(scenario.generators):
        per[g.id] = is_feasible(scenario, excluded={n})
    pivotal = [gid for gid, ok in per.items() if not ok]
    return AssumptionReport(not pivotal, per, pivotal)


@dataclass
class MonopolyReport:
    holds: bool
    counts: dict[str, int]
    monopoly_nodes: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.holds


def check_monopoly_free(scenario: Scenario) -> MonopolyReport:
    """At least two generators at every node, demand-only nodes included."""
    counts = {nd.id: len(scenario.generators_at(i)) for i, nd in enumerate(scenario.nodes)}
    short = [nid for nid, c in counts.items() if c < 2]
    return MonopolyReport(not short, counts, short)


@dataclass
class ConditionsReport:
    assumption1: AssumptionReport
    congestion_free: CongestionReport
    monopoly_free: MonopolyReport

    @property
    def all_hold(self) -> bool:
        return bool(self.assumption1 and self.congestion_free and self.monopoly_free)


def check_conditions(scenario: Scenario) -> ConditionsReport:
    """All three structural conditions; congestion is judged at the economic dispatch."""
    ed = solve_economic_dispatch(scenario, with_prices=False)
    return ConditionsReport(check_assumption1(scenario), check_congestion_free(ed), check_monopoly_free(scenario))
