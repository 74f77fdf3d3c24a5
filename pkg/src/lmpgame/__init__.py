"""Strategic bidding under locational marginal pricing on DC networks.

The package solves DC economic and bid dispatch with lexicographically
chosen prices, and runs equilibrium instruments on top: best responses,
ε-equilibrium checks, best-response dynamics, efficient-equilibrium
constructions, price of anarchy, and second-price (exclusion-based)
settlement.
"""

from .cases import build_example, example1, example1_uncongested, example2, example3
from .conditions import check_assumption1, check_conditions, check_monopoly_free
from .dispatch import (
    DispatchError,
    DispatchResult,
    InfeasibleDispatch,
    UnboundedDispatch,
    check_congestion_free,
    solve_bid_dispatch,
    solve_economic_dispatch,
    true_cost,
    verify_kkt,
)
from .double_sided import solve_double_sided, steep_consumer_reduction
from .game import (
    BidGrid,
    LmpMechanism,
    PreconditionError,
    best_response,
    best_response_dynamics,
    construct_ne_congestion_free,
    construct_ne_monopoly_free,
    find_grid_equilibria,
    price_of_anarchy,
    verify_epsilon_ne,
)
from .lp import LinearProgram, lex_min_duals, solve_lp
from .model import (
    Bid,
    Consumer,
    ConsumerBid,
    Generator,
    Line,
    LinearCost,
    LinearValuation,
    Node,
    PiecewiseLinearCost,
    PiecewiseLinearValuation,
    QuadraticCost,
    Scenario,
    load_bids,
    load_scenario,
)
from .pnsp import PnspMechanism, construct_pnsp_efficient_bids, pnsp_settle

__version__ = "0.1.0"
