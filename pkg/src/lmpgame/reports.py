"""Structured and tabular renderings of analysis results."""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from . import dispatch as _dispatch
from . import lp as _lp
from .model import Bid, Scenario


def tolerance_block() -> dict:
    return {
        "feasibility": _lp.FEAS_TOL,
        "duality_gap": _lp.GAP_TOL,
        "complementary_slackness": _lp.CS_TOL,
        "pivot": _lp.PIVOT_TOL,
        "reduced_cost": _lp.COST_TOL,
        "binding_line": _dispatch.BINDING_TOL,
        "kkt": _dispatch.KKT_TOL,
    }


def _num(v):
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return "nan"
    return 0.0 if v == 0 else v


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if hasattr(obj, "to_dict"):
        return jsonable(obj.to_dict())
    return obj


def to_json(doc) -> str:
    return json.dumps(jsonable(doc), indent=2, sort_keys=True)


def envelope(command: list[str], scenario: Scenario | None, settings: dict, result: dict) -> dict:
    return {
        "command": command,
        "scenario_digest": scenario.digest() if scenario is not None else None,
        "settings": {**settings, "tolerances": tolerance_block()},
        "result": result,
    }


def player_ids(scenario: Scenario) -> list[str]:
    return [g.id for g in scenario.generators] + [c.id for c in scenario.consumers]


def profile_payload(scenario: Scenario, profile) -> list[dict]:
    out = []
    for pid, bid in zip(player_ids(scenario), profile):
        key = "generator" if isinstance(bid, Bid) else "consumer"
        out.append({key: pid, **bid.to_dict()})
    return out


# -- dispatch


def dispatch_payload(scenario: Scenario, result, profile=None) -> dict:
    ids = [nd.id for nd in scenario.nodes]
    doc = {
        "kind": result.kind,
        "objective": result.objective,
        "true_cost": _dispatch.true_cost(scenario, result.x),
        "generators": [
            {"id": g.id, "node": ids[g.node], "x": result.x[n]} for n, g in enumerate(scenario.generators)
        ],
        "lines": [
            {"from": ids[ln.i], "to": ids[ln.j], "flow": result.flow[k], "capacity": ln.capacity}
            for k, ln in enumerate(scenario.lines)
        ],
    }
    if scenario.consumers:
        doc["consumers"] = [
            {"id": c.id, "node": ids[c.node], "y": result.y[m]} for m, c in enumerate(scenario.consumers)
        ]
    if result.has_prices:
        doc["lmp"] = {nid: result.pi[i] for i, nid in enumerate(ids)}
        for k, entry in enumerate(doc["lines"]):
            entry["mu_forward"] = result.mu_forward[k]
            entry["mu_backward"] = result.mu_backward[k]
        from .game import lmp_outcome_payoffs

        pay = lmp_outcome_payoffs(scenario, result)
        for n, entry in enumerate(doc["generators"]):
            entry["lmp_payoff"] = pay[n]
        for m, entry in enumerate(doc.get("consumers", [])):
            entry["lmp_payoff"] = pay[scenario.n_generators + m]
        doc["kkt"] = _dispatch.verify_kkt(scenario, result, profile).as_dict()
    return doc


def dispatch_csv(scenario: Scenario, result) -> str:
    from .game import lmp_outcome_payoffs

    ids = [nd.id for nd in scenario.nodes]
    pay = lmp_outcome_payoffs(scenario, result)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "id", "node", "quantity", "lmp", "payoff"])
    for n, g in enumerate(scenario.generators):
        w.writerow(["generator", g.id, ids[g.node], _num(result.x[n]), _num(result.pi[g.node]), _num(pay[n])])
    for m, c in enumerate(scenario.consumers):
        k = scenario.n_generators + m
        w.writerow(["consumer", c.id, ids[c.node], _num(result.y[m]), _num(result.pi[c.node]), _num(pay[k])])
    for k, ln in enumerate(scenario.lines):
        w.writerow(["line", f"{ids[ln.i]}-{ids[ln.j]}", "", _num(result.flow[k]), "", ""])
    return buf.getvalue()


# -- conditions


def conditions_payload(scenario: Scenario, report) -> dict:
    a1, cf, mf = report.assumption1, report.congestion_free, report.monopoly_free
    ids = [nd.id for nd in scenario.nodes]
    binding = [
        {"line": f"{ids[scenario.lines[k].i]}-{ids[scenario.lines[k].j]}", "direction": "forward" if d > 0 else "backward"}
        for k, d in cf.binding
    ]
    return {
        "assumption1": {
            "holds": a1.holds,
            "pivotal": a1.pivotal,
            "explanation": "no single generator is pivotal" if a1.holds
            else f"removing {', '.join(a1.pivotal)} leaves demand unserved",
        },
        "congestion_free": {
            "holds": cf.holds,
            "binding": binding,
            "explanation": "no line binds at the economic dispatch" if cf.holds
            else f"{len(binding)} line limit(s) bind at the economic dispatch",
        },
        "monopoly_free": {
            "holds": mf.holds,
            "generators_per_node": mf.counts,
            "explanation": "every node hosts at least two generators" if mf.holds
            else f"nodes with fewer than two generators: {', '.join(mf.monopoly_nodes)}",
        },
    }


# -- game


def best_response_payload(scenario: Scenario, br) -> dict:
    return {
        "player": player_ids(scenario)[br.player],
        "bid": br.bid.to_dict(),
        "payoff": br.payoff,
        "current_payoff": br.current_payoff,
        "gain": br.gain,
        "ceiling_binding": br.ceiling_binding,
        "candidates": br.evaluated,
    }


def equilibrium_payload(scenario: Scenario, report) -> dict:
    ids = player_ids(scenario)
    doc = {
        "verdict": report.verdict,
        "eps": report.eps,
        "payoffs": dict(zip(ids, report.payoffs)),
        "max_gain": dict(zip(ids, report.gains)),
    }
    if report.witness is not None:
        doc["witness"] = best_response_payload(scenario, report.witness)
    return doc


def equilibrium_csv(scenario: Scenario, report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["player", "payoff", "best_gain", "best_bid"])
    for pid, br in zip(player_ids(scenario), report.responses):
        w.writerow([pid, _num(br.current_payoff), _num(br.gain), json.dumps(br.bid.to_dict(), sort_keys=True)])
    return buf.getvalue()


def _bid_triplet(bid):
    d = bid.to_dict()
    return [d.get("p", d.get("r")), d.get("s", d.get("t")), d.get("q", d.get("w"))]


def dynamics_payload(scenario: Scenario, report) -> dict:
    ids = player_ids(scenario)
    return {
        "status": report.status,
        "period_steps": report.period,
        "period_rounds": report.period_rounds,
        "cycle_start": report.cycle_start,
        "steps": [
            {"round": st.round, "player": ids[st.player], "bid": _bid_triplet(st.bid), "payoff": st.payoff, "moved": st.moved}
            for st in report.steps
        ],
        "final": profile_payload(scenario, report.final),
    }


def trajectory_csv(scenario: Scenario, report) -> str:
    ids = player_ids(scenario)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["round", "generator", "p", "s", "q", "payoff"])
    for st in report.steps:
        w.writerow([st.round, ids[st.player], *(_num(v) for v in _bid_triplet(st.bid)), _num(st.payoff)])
    return buf.getvalue()


def poa_payload(report) -> dict:
    return {
        "ratio": report.ratio,
        "optimal_cost": report.optimal_cost,
        "equilibrium_costs": report.equilibrium_costs,
        "verified_profiles": report.verified,
        "excluded_profiles": report.excluded,
        "note": "lower bound on the price of anarchy over the verified grid equilibria",
    }


# -- second pricing


def settlement_payload(scenario: Scenario, st) -> dict:
    ids = player_ids(scenario)
    qty = list(st.dispatch.x) + list(st.dispatch.y)
    return {
        "players": [
            {
                "id": pid,
                "quantity": qty[k],
                "payment": st.payments[k],
                "payoff": st.payoffs[k],
                "exclusion_objective": st.exclusion_objectives[k],
                "actual_objective": st.actual_objectives[k],
            }
            for k, pid in enumerate(ids)
        ],
        "dispatch": dispatch_payload(scenario, st.dispatch),
        "imbalance": st.imbalance,
        "exclusions": {pid: list(ex.x) for pid, ex in zip(ids, st.exclusions)},
    }


def settlement_csv(scenario: Scenario, st) -> str:
    ids = player_ids(scenario)
    qty = list(st.dispatch.x) + list(st.dispatch.y)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["player", "x", "w", "u", "exclusion_objective"])
    for k, pid in enumerate(ids):
        w.writerow([pid, _num(qty[k]), _num(st.payments[k]), _num(st.payoffs[k]), _num(st.exclusion_objectives[k])])
    return buf.getvalue()
