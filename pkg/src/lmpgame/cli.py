"""Command-line front end.

Exit codes: 0 ok or verified, 1 a finding (refuted equilibrium, failed
condition, cycle, refused precondition), 2 input error, 3 infeasible,
4 unbounded, 5 solver failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import reports
from .cases import ExampleError, build_example
from .conditions import check_conditions
from .dispatch import DispatchError, InfeasibleDispatch, UnboundedDispatch, solve_bid_dispatch, solve_economic_dispatch
from .game import (
    BidGrid,
    LmpMechanism,
    PreconditionError,
    best_response,
    best_response_dynamics,
    construct_ne_congestion_free,
    construct_ne_monopoly_free,
    price_of_anarchy,
    random_linear_profile,
    verify_epsilon_ne,
)
from .model import ScenarioError, dump_bids, dump_scenario, load_bids, load_scenario
from .pnsp import PnspMechanism, construct_pnsp_efficient_bids, pnsp_settle

EXIT_OK, EXIT_FINDING, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_UNBOUNDED, EXIT_SOLVER = range(6)


class InputError(Exception):
    pass


def _read_text(path: str) -> tuple[str, str]:
    """File contents; ``@name`` reads a bundled data file."""
    if path.startswith("@"):
        name = path[1:]
        if not name.endswith(".json"):
            name += ".json"
        try:
            return resources.files("lmpgame.data").joinpath(name).read_text(), path
        except (FileNotFoundError, OSError):
            raise InputError(f"no bundled file {path!r}") from None
    try:
        return Path(path).read_text(), path
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None


def _scenario(args):
    text, name = _read_text(args.scenario)
    sc = load_scenario(text, name=name)
    cap = getattr(args, "cap", None)
    return sc.with_bid_cap(cap) if cap is not None else sc


def _bids(args, sc, required=False):
    if not getattr(args, "bids", None):
        if required:
            raise InputError("--bids is required for this action")
        return None
    text, _ = _read_text(args.bids)
    return load_bids(text, sc)


def _grid(args, augment_default=True) -> BidGrid:
    augment = augment_default if args.augment is None else args.augment
    args.augment = augment
    return BidGrid(
        price_step=args.grid,
        price_ceiling=args.price_ceiling,
        quantity_step=args.quantity_step,
        augment=augment,
        linear_only=args.linear_only,
    )


def _mechanism(args):
    return PnspMechanism() if args.mechanism == "pnsp" else LmpMechanism()


def _emit(args, doc: dict, csv_text: str | None = None):
    if getattr(args, "format", "json") == "csv" and csv_text is not None:
        sys.stdout.write(csv_text)
    else:
        sys.stdout.write(reports.to_json(doc) + "\n")


def _settings(args, **extra) -> dict:
    keys = ("grid", "price_ceiling", "quantity_step", "augment", "linear_only", "eps", "mechanism",
            "max_rounds", "seed", "threads", "cap", "q_gap")
    out = {k: getattr(args, k) for k in keys if hasattr(args, k)}
    out.update(extra)
    return out


# -- commands


def cmd_dispatch(args) -> int:
    sc = _scenario(args)
    profile = _bids(args, sc)
    res = solve_economic_dispatch(sc) if profile is None else solve_bid_dispatch(sc, profile)
    doc = reports.envelope(args.argv, sc, _settings(args), reports.dispatch_payload(sc, res, profile))
    _emit(args, doc, reports.dispatch_csv(sc, res))
    return EXIT_OK


def cmd_check(args) -> int:
    sc = _scenario(args)
    rep = check_conditions(sc)
    _emit(args, reports.envelope(args.argv, sc, _settings(args), reports.conditions_payload(sc, rep)))
    return EXIT_OK if rep.all_hold else EXIT_FINDING


def _player(sc, ref: str) -> int:
    try:
        return int(ref) - 1 if ref.isdigit() else sc.player_index(ref)
    except (KeyError, ValueError):
        raise InputError(f"unknown player {ref!r}") from None


def cmd_game(args) -> int:
    sc = _scenario(args)
    mech = _mechanism(args)
    action = args.action
    if action == "verify":
        grid = _grid(args)
        rep = verify_epsilon_ne(sc, _bids(args, sc, required=True), mech, grid, args.eps)
        doc = reports.equilibrium_payload(sc, rep)
        _emit(args, reports.envelope(args.argv, sc, _settings(args), doc), reports.equilibrium_csv(sc, rep))
        return EXIT_OK if rep.is_equilibrium else EXIT_FINDING
    if action == "best-response":
        if args.player is None:
            raise InputError("--player is required for best-response")
        k = _player(sc, args.player)
        if not 0 <= k < sc.n_players:
            raise InputError(f"player {args.player!r} out of range")
        br = best_response(sc, _bids(args, sc, required=True), k, mech, _grid(args))
        _emit(args, reports.envelope(args.argv, sc, _settings(args), reports.best_response_payload(sc, br)))
        return EXIT_OK
    if action == "dynamics":
        grid = _grid(args, augment_default=False)
        init = _bids(args, sc)
        if init is None:
            init = random_linear_profile(sc, grid, np.random.default_rng(args.seed))
        rep = best_response_dynamics(sc, init, mech, grid, args.max_rounds, args.eps)
        doc = reports.dynamics_payload(sc, rep)
        doc["initial"] = reports.profile_payload(sc, init)
        _emit(args, reports.envelope(args.argv, sc, _settings(args), doc), reports.trajectory_csv(sc, rep))
        return EXIT_OK if rep.status == "fixed_point" else EXIT_FINDING
    if action == "construct":
        makers = {
            "congestion-free": construct_ne_congestion_free,
            "monopoly-free": construct_ne_monopoly_free,
            "pnsp": lambda s: construct_pnsp_efficient_bids(s, args.q_gap),
        }
        if args.kind is None:
            raise InputError("--kind is required for construct (congestion-free, monopoly-free or pnsp)")
        profile = makers[args.kind](sc)
        if args.out:
            Path(args.out).write_text(dump_bids(sc, profile) + "\n")
        doc = {"kind": args.kind, "profile": reports.profile_payload(sc, profile)}
        _emit(args, reports.envelope(args.argv, sc, _settings(args), doc))
        return EXIT_OK
    if action == "poa":
        profiles = [load_bids(_read_text(p)[0], sc) for p in (args.bids_list or [])]
        if args.bids:
            profiles.insert(0, _bids(args, sc))
        if not profiles:
            raise InputError("--bids is required for poa")
        rep = price_of_anarchy(sc, profiles, _grid(args), args.eps, mech)
        _emit(args, reports.envelope(args.argv, sc, _settings(args), reports.poa_payload(rep)))
        return EXIT_OK
    raise InputError(f"unknown action {action!r}")


def cmd_pnsp(args) -> int:
    sc = _scenario(args)
    extra = {}
    profile = _bids(args, sc)
    if profile is None:
        profile = construct_pnsp_efficient_bids(sc, args.q_gap)
        extra["profile"] = reports.profile_payload(sc, profile)
    st = pnsp_settle(sc, profile)
    doc = {**reports.settlement_payload(sc, st), **extra}
    _emit(args, reports.envelope(args.argv, sc, _settings(args), doc), reports.settlement_csv(sc, st))
    return EXIT_OK


def cmd_examples(args) -> int:
    params = {}
    if args.kind == 1:
        params = dict(C=args.C, D=args.D if args.D is not None else 2.0, a=args.a or (1.0, 2.0), cap=args.cap)
    elif args.kind == 2:
        params = dict(C=args.C, Cp=args.Cp, D=args.D if args.D is not None else 3.0, a=args.a or (1.0, 2.0, 3.0, 4.0))
    else:
        params = dict(k=args.k, C=args.C)
    case = build_example(args.kind, **params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = {f"ex{args.kind}.json": dump_scenario(case.scenario)}
    ref = {"x_star": case.x_star, "params": case.params}
    if case.ne_profile is not None:
        files[f"ex{args.kind}_ne.json"] = dump_bids(case.scenario, case.ne_profile)
        ref.update(ne_x=case.ne_x, ne_pi=case.ne_pi)
    files[f"ex{args.kind}_reference.json"] = reports.to_json(ref)
    for name, text in files.items():
        (out / name).write_text(text + "\n")
    doc = {"written": sorted(str(out / n) for n in files), "reference": ref}
    _emit(args, reports.envelope(args.argv, case.scenario, _settings(args), doc))
    return EXIT_OK


# -- parser


def _add_grid_options(p):
    p.add_argument("--grid", type=float, default=0.5, help="price step (default 0.5)")
    p.add_argument("--price-ceiling", type=float, help="highest price level (default: bid cap)")
    p.add_argument("--quantity-step", type=float, help="breakpoint step (default: ceiling / 4)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--augment", dest="augment", action="store_true", default=None,
                   help="add rival prices and marginal costs ±1e-4 (default except for dynamics)")
    g.add_argument("--no-augment", dest="augment", action="store_false")
    p.add_argument("--linear-only", action="store_true", help="restrict candidates to p = q")
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--mechanism", choices=("lmp", "pnsp"), default="lmp")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lmpgame", description="Strategic bidding on DC power networks.")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker bound for grid searches (recorded; evaluation is sequential)")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_cmd(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("scenario", help="scenario JSON path, or @name for a bundled file")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--cap", type=float, help="override the scenario bid cap")
        return p

    p = scenario_cmd("dispatch", "economic or bid dispatch with LMPs")
    p.add_argument("--bids", help="bid profile JSON")
    p.set_defaults(func=cmd_dispatch)

    p = scenario_cmd("check", "assumption 1, congestion-free and monopoly-free verdicts")
    p.set_defaults(func=cmd_check)

    p = scenario_cmd("game", "equilibrium instruments")
    p.add_argument("action", choices=("verify", "best-response", "dynamics", "construct", "poa"))
    p.add_argument("--bids", help="bid profile JSON")
    p.add_argument("--also", dest="bids_list", action="append", help="extra profile for poa (repeatable)")
    p.add_argument("--player", help="player id or 1-based index for best-response")
    p.add_argument("--kind", choices=("congestion-free", "monopoly-free", "pnsp"))
    p.add_argument("--out", help="write the constructed profile here")
    p.add_argument("--max-rounds", type=int, default=200)
    p.add_argument("--seed", type=int, default=0, help="seed for the random start of dynamics")
    p.add_argument("--q-gap", type=float, default=1.0)
    _add_grid_options(p)
    p.set_defaults(func=cmd_game)

    p = scenario_cmd("pnsp", "second-price settlement")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--bids", help="bid profile JSON")
    g.add_argument("--construct", action="store_true", help="settle the efficient-equilibrium bids (the default without --bids)")
    p.add_argument("--q-gap", type=float, default=1.0)
    p.set_defaults(func=cmd_pnsp)

    p = sub.add_parser("examples", help="write an example scenario and its reference outcome")
    p.add_argument("kind", type=int, choices=(1, 2, 3))
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--Cp", type=float, default=2.0)
    p.add_argument("--D", type=float)
    p.add_argument("--a", type=float, nargs="+")
    p.add_argument("--k", type=float, default=10.0)
    p.add_argument("--cap", type=float, default=10.0)
    p.add_argument("--out", default=".")
    p.add_argument("--format", choices=("json",), default="json")
    p.set_defaults(func=cmd_examples)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = ["lmpgame", *argv]
    start = time.perf_counter()
    try:
        code = args.func(args)
    except (InputError, ScenarioError, ExampleError) as exc:
        return _fail(EXIT_INPUT, "input", exc)
    except InfeasibleDispatch as exc:
        return _fail(EXIT_INFEASIBLE, "infeasible", exc, shortfall=exc.shortfall)
    except UnboundedDispatch as exc:
        return _fail(EXIT_UNBOUNDED, "unbounded", exc)
    except PreconditionError as exc:
        return _fail(EXIT_FINDING, "refused", exc, pivotal=getattr(exc, "pivotal", None))
    except ValueError as exc:
        return _fail(EXIT_INPUT, "input", exc)
    except DispatchError as exc:
        return _fail(EXIT_SOLVER, "solver", exc)
    meta = {"duration_s": round(time.perf_counter() - start, 6)}
    sys.stderr.write(json.dumps({"meta": meta}) + "\n")
    return code


def _fail(code: int, kind: str, exc: Exception, **extra) -> int:
    doc = {"error": kind, "message": str(exc), **{k: v for k, v in extra.items() if v is not None}}
    sys.stderr.write(reports.to_json(doc) + "\n")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
