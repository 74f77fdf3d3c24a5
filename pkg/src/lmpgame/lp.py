"""Dense simplex LP solver with dual extraction and lexicographic tie-breaking.

Problems have the general form::

    min   c @ x
    s.t.  A_eq @ x == b_eq      (duals pi, free)
          A_ub @ x <= b_ub      (duals mu >= 0)
          lb <= x <= ub

Dual signs follow the sensitivity convention: ``pi = d(obj)/d(b_eq)`` and
``mu = -d(obj)/d(b_ub)``, so the Lagrangian stationarity reads
``c - A_eq.T @ pi + A_ub.T @ mu = reduced_costs``.

Secondary objectives (``tiebreak`` rows) are minimized lexicographically over
the optimal face inside the same simplex run: entering columns are chosen by
Bland's rule over lexicographically negative reduced-cost vectors.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

FEAS_TOL = 1e-8
GAP_TOL = 1e-8
CS_TOL = 1e-8
PIVOT_TOL = 1e-10
COST_TOL = 1e-9
DEFAULT_MAX_ITER = 10**6


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    FAILED = "failed"


class LpError(ValueError):
    """Malformed linear program."""


class LexDualError(RuntimeError):
    """The lexicographic dual problem could not be solved.

    Signals a bug or an unattainable floor: the dual-optimal set of an
    optimal LP is never empty.
    """


def _as_matrix(a, n: int, name: str) -> np.ndarray:
    if a is None:
        return np.zeros((0, n))
    a = np.asarray(a, dtype=float)
    if a.ndim == 1 and a.size == 0:
        return np.zeros((0, n))
    if a.ndim != 2 or a.shape[1] != n:
        raise LpError(f"{name} must have shape (m, {n}), got {a.shape}")
    return a


@dataclass(eq=False)
class LinearProgram:
    c: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    eq_labels: Sequence[Hashable] | None = None
    ub_labels: Sequence[Hashable] | None = None
    tiebreak: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        if self.c.ndim != 1:
            raise LpError("c must be a vector")
        n = self.c.size
        self.A_eq = _as_matrix(self.A_eq, n, "A_eq")
        self.A_ub = _as_matrix(self.A_ub, n, "A_ub")
        self.b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, dtype=float).ravel()
        self.b_ub = np.zeros(0) if self.b_ub is None else np.asarray(self.b_ub, dtype=float).ravel()
        if self.b_eq.size != self.A_eq.shape[0]:
            raise LpError(f"b_eq has {self.b_eq.size} entries for {self.A_eq.shape[0]} rows")
        if self.b_ub.size != self.A_ub.shape[0]:
            raise LpError(f"b_ub has {self.b_ub.size} entries for {self.A_ub.shape[0]} rows")
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float).ravel()
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).ravel()
        if self.lb.size != n or self.ub.size != n:
            raise LpError("bounds must match the number of variables")
        if np.any(self.lb == np.inf) or np.any(self.ub == -np.inf):
            raise LpError("lower bounds must be < +inf and upper bounds > -inf")
        if self.tiebreak is None:
            self.tiebreak = np.zeros((0, n))
        else:
            self.tiebreak = np.atleast_2d(np.asarray(self.tiebreak, dtype=float))
            if self.tiebreak.shape[1] != n:
                raise LpError("tiebreak rows must match the number of variables")
        m_eq, m_ub = self.A_eq.shape[0], self.A_ub.shape[0]
        self.eq_labels = list(range(m_eq)) if self.eq_labels is None else list(self.eq_labels)
        self.ub_labels = (
            [("ub", k) for k in range(m_ub)] if self.ub_labels is None else list(self.ub_labels)
        )
        if len(self.eq_labels) != m_eq or len(self.ub_labels) != m_ub:
            raise LpError("every constraint needs exactly one label")
        if len(set(self.eq_labels) | set(self.ub_labels)) != m_eq + m_ub:
            raise LpError("constraint labels must be unique")

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def labels(self) -> list:
        return self.eq_labels + self.ub_labels


@dataclass(eq=False)
class LpSolution:
    status: LpStatus
    x: np.ndarray | None = None
    eq_duals: np.ndarray | None = None
    ub_duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    objective: float = float("nan")
    iterations: int = 0
    message: str = ""
    labels: list = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL

    @property
    def duals(self) -> np.ndarray:
        return np.concatenate([self.eq_duals, self.ub_duals])

    def dual(self, label: Hashable) -> float:
        return float(self.duals[self.labels.index(label)])


# --------------------------------------------------------------------------
# standard form


@dataclass
class _Standard:
    A: np.ndarray  # rows: eq, ub, bound rows; columns: structural then slacks
    b: np.ndarray
    C: np.ndarray  # objective levels over all columns
    shift: np.ndarray  # x = shift + M @ x_std
    M: np.ndarray
    n_struct: int
    n_eq: int
    n_ub: int


def _standardize(lp: LinearProgram) -> _Standard:
    n = lp.n
    cols = []  # (original index, sign)
    shift = np.zeros(n)
    bound_rows = []  # (std column, width)
    for j in range(n):
        lo, hi = lp.lb[j], lp.ub[j]
        if np.isfinite(lo):
            shift[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                bound_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            shift[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    ns = len(cols)
    M = np.zeros((n, ns))
    for k, (j, sgn) in enumerate(cols):
        M[j, k] = sgn
    n_eq, n_ub, n_bd = lp.A_eq.shape[0], lp.A_ub.shape[0], len(bound_rows)
    m = n_eq + n_ub + n_bd
    n_slack = n_ub + n_bd
    A = np.zeros((m, ns + n_slack))
    b = np.zeros(m)
    A[:n_eq, :ns] = lp.A_eq @ M
    b[:n_eq] = lp.b_eq - lp.A_eq @ shift
    A[n_eq:n_eq + n_ub, :ns] = lp.A_ub @ M
    b[n_eq:n_eq + n_ub] = lp.b_ub - lp.A_ub @ shift
    for r, (k, width) in enumerate(bound_rows):
        A[n_eq + n_ub + r, k] = 1.0
        b[n_eq + n_ub + r] = width
    A[n_eq:, ns:] = np.eye(n_slack)
    levels = np.vstack([lp.c[None, :], lp.tiebreak])
    C = np.zeros((levels.shape[0], ns + n_slack))
    C[:, :ns] = levels @ M
    return _Standard(A, b, C, shift, M, ns, n_eq, n_ub)


# --------------------------------------------------------------------------
# tableau simplex


def _pivot(T: np.ndarray, r: int, j: int) -> None:
    T[r] /= T[r, j]
    col = T[:, j].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _entering(R: np.ndarray, allowed: np.ndarray) -> int:
    """Smallest allowed column whose reduced-cost vector is lexicographically negative."""
    mask = np.abs(R) > COST_TOL
    first = mask.argmax(axis=0)
    neg = mask.any(axis=0) & (R[first, np.arange(R.shape[1])] < 0) & allowed
    idx = np.flatnonzero(neg)
    return int(idx[0]) if idx.size else -1


def _leaving(T: np.ndarray, m: int, j: int, basis: np.ndarray) -> int:
    col = T[:m, j]
    pos = np.flatnonzero(col > PIVOT_TOL)
    if pos.size == 0:
        return -1
    ratios = T[pos, -1] / col[pos]
    best = ratios.min()
    tied = pos[ratios <= best + 1e-12 * max(1.0, abs(best))]
    return int(tied[np.argmin(basis[tied])])


def _run(T, basis, m, allowed, max_iter, it):
    """Iterate Bland pivots on the objective rows below row ``m``.

    Returns ("optimal" | "unbounded" | "iterations", level, iterations).
    """
    ncols = T.shape[1] - 1
    while True:
        if it >= max_iter:
            return "iterations", 0, it
        R = T[m:, :ncols]
        j = _entering(R, allowed)
        if j < 0:
            return "optimal", 0, it
        r = _leaving(T, m, j, basis)
        if r < 0:
            level = int((np.abs(R[:, j]) > COST_TOL).argmax())
            return "unbounded", level, it
        _pivot(T, r, j)
        basis[r] = j
        it += 1


def solve_lp(lp: LinearProgram, max_iter: int = DEFAULT_MAX_ITER) -> LpSolution:
    """Solve ``lp`` by two-phase dense simplex with Bland's rule.

    When ``lp.tiebreak`` has rows, the returned primal point is the
    lexicographic minimizer of (c, tiebreak[0], tiebreak[1], ...).
    Duals always refer to the primary objective ``c``.
    """
    std = _standardize(lp)
    A, b = std.A.copy(), std.b.copy()
    m, ncols = A.shape
    labels = lp.labels
    sign = np.where(b < 0, -1.0, 1.0)
    A *= sign[:, None]
    b *= sign
    n_slack = m - std.n_eq
    # slack columns that can start basic (row kept its sign)
    basis = np.full(m, -1, dtype=np.int64)
    for r in range(std.n_eq, m):
        if sign[r] > 0:
            basis[r] = std.n_struct + (r - std.n_eq)
    art_rows = np.flatnonzero(basis < 0)
    n_art = art_rows.size
    total = ncols + n_art
    K = std.C.shape[0]
    T = np.zeros((m + 1 + K, total + 1))
    T[:m, :ncols] = A
    T[:m, -1] = b
    for k, r in enumerate(art_rows):
        T[r, ncols + k] = 1.0
        basis[r] = ncols + k
    # phase-one row, then the real objective levels (all initial basics cost 0)
    T[m, :ncols] = -A[art_rows].sum(axis=0)
    T[m, -1] = -b[art_rows].sum()
    T[m + 1:, :ncols] = std.C
    allowed = np.ones(total, dtype=bool)
    allowed[ncols:] = False

    it = 0
    if n_art:
        state, _, it = _run_phase1(T, basis, m, allowed, max_iter, it)
        if state == "iterations":
            return LpSolution(LpStatus.FAILED, iterations=it, message="iteration cap reached", labels=labels)
        if -T[m, -1] > FEAS_TOL * max(1.0, np.abs(b).max()):
            return LpSolution(LpStatus.INFEASIBLE, iterations=it, message="phase one residual > 0", labels=labels)
        # drive zero-level artificials out of the basis; drop redundant rows
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if basis[r] >= ncols:
                row = np.abs(T[r, :ncols])
                j = int(row.argmax())
                if row[j] > PIVOT_TOL:
                    _pivot(T, r, j)
                    basis[r] = j
                else:
                    keep[r] = False
        rows = np.concatenate([np.flatnonzero(keep), np.arange(m + 1, m + 1 + K)])
        T = T[rows][:, list(range(ncols)) + [total]]
        basis = basis[keep]
        kept_rows = np.flatnonzero(keep)
    else:
        T = np.delete(T, m, axis=0)[:, list(range(ncols)) + [total]]
        kept_rows = np.arange(m)
    mk = kept_rows.size
    allowed = np.ones(ncols, dtype=bool)
    state, level, it = _run(T, basis, mk, allowed, max_iter, it)
    if state == "iterations":
        return LpSolution(LpStatus.FAILED, iterations=it, message="iteration cap reached", labels=labels)
    if state == "unbounded":
        if level == 0:
            return LpSolution(LpStatus.UNBOUNDED, iterations=it, message="objective unbounded below", labels=labels)
        return LpSolution(
            LpStatus.FAILED, iterations=it, message=f"tie-break level {level} unbounded", labels=labels
        )
    return _recover(lp, std, kept_rows, basis, it)


def _run_phase1(T, basis, m, allowed, max_iter, it):
    ncols = T.shape[1] - 1
    while True:
        if it >= max_iter:
            return "iterations", 0, it
        j = _entering(T[m:m + 1, :ncols], allowed)
        if j < 0:
            return "optimal", 0, it
        r = _leaving(T, m, j, basis)
        if r < 0:  # cannot happen: phase one is bounded below by zero
            return "iterations", 0, it
        _pivot(T, r, j)
        basis[r] = j
        it += 1


def _recover(lp, std, kept_rows, basis, it) -> LpSolution:
    A = std.A[kept_rows]
    b = std.b[kept_rows]
    B = A[:, basis]
    x_std = np.zeros(A.shape[1])
    try:
        x_std[basis] = np.linalg.solve(B, b)
        y_kept = np.linalg.solve(B.T, std.C[0, basis])
    except np.linalg.LinAlgError:
        return LpSolution(LpStatus.FAILED, iterations=it, message="singular final basis", labels=lp.labels)
    x_std[np.abs(x_std) < 1e-13] = 0.0
    y = np.zeros(std.A.shape[0])
    y[kept_rows] = y_kept
    x = std.shift + std.M @ x_std[: std.n_struct]
    eq_duals = y[: std.n_eq].copy()
    ub_duals = -y[std.n_eq: std.n_eq + std.n_ub]
    rc = lp.c - lp.A_eq.T @ eq_duals + lp.A_ub.T @ ub_duals
    sol = LpSolution(
        LpStatus.OPTIMAL,
        x=x,
        eq_duals=eq_duals,
        ub_duals=ub_duals,
        reduced_costs=rc,
        objective=float(lp.c @ x),
        iterations=it,
        labels=lp.labels,
    )
    res = residuals(lp, sol)
    scale = max(1.0, float(np.abs(lp.c).max(initial=0.0)), float(np.abs(std.b).max(initial=0.0)))
    if res["primal"] > FEAS_TOL * scale or res["dual"] > FEAS_TOL * scale:
        sol.status = LpStatus.FAILED
        sol.message = f"numerical residuals too large: {res}"
    return sol


def residuals(lp: LinearProgram, sol: LpSolution) -> dict:
    """Primal/dual feasibility, duality gap and complementary slackness of ``sol``."""
    x, pi, mu, rc = sol.x, sol.eq_duals, sol.ub_duals, sol.reduced_costs
    primal = 0.0
    if lp.A_eq.size:
        primal = max(primal, float(np.abs(lp.A_eq @ x - lp.b_eq).max()))
    slack = lp.b_ub - lp.A_ub @ x
    if slack.size:
        primal = max(primal, float(np.maximum(-slack, 0).max()))
    primal = max(primal, float(np.maximum(lp.lb - x, 0).max(initial=0.0)))
    primal = max(primal, float(np.maximum(x - lp.ub, 0).max(initial=0.0)))
    fin_lo, fin_hi = np.isfinite(lp.lb), np.isfinite(lp.ub)
    z_lo = np.where(fin_lo, np.maximum(rc, 0), 0.0)
    z_hi = np.where(fin_hi, np.maximum(-rc, 0), 0.0)
    dual = float(np.maximum(-mu, 0).max(initial=0.0))
    dual = max(dual, float(np.where(~fin_lo, np.maximum(rc, 0), 0).max(initial=0.0)))
    dual = max(dual, float(np.where(~fin_hi, np.maximum(-rc, 0), 0).max(initial=0.0)))
    dual_obj = (
        lp.b_eq @ pi
        - lp.b_ub @ mu
        + np.where(fin_lo, lp.lb, 0) @ z_lo
        - np.where(fin_hi, lp.ub, 0) @ z_hi
    )
    gap = abs(float(lp.c @ x) - float(dual_obj))
    cs = float(np.abs(mu * slack).max(initial=0.0))
    cs = max(cs, float(np.abs(z_lo * np.where(fin_lo, x - lp.lb, 0)).max(initial=0.0)))
    cs = max(cs, float(np.abs(z_hi * np.where(fin_hi, lp.ub - x, 0)).max(initial=0.0)))
    return {"primal": primal, "dual": dual, "gap": gap, "cs": cs, "dual_objective": float(dual_obj)}


# --------------------------------------------------------------------------
# lexicographic duals


@dataclass(eq=False)
class DualVector:
    eq: np.ndarray
    ub: np.ndarray
    ordered: np.ndarray
    objective: float
    labels: list

    def __getitem__(self, label: Hashable) -> float:
        return float(np.concatenate([self.eq, self.ub])[self.labels.index(label)])


def lex_min_duals(
    lp: LinearProgram,
    ordered_labels: Sequence[Hashable],
    floor: float = 0.0,
    solution: LpSolution | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
) -> DualVector:
    """Lexicographically smallest dual vector over the dual-optimal set.

    The dual problem is solved with the dual objective as the first level
    and the duals of ``ordered_labels`` as subsequent minimization levels,
    so the dual objective stays at its optimum throughout. Each ordered
    coordinate is bounded below by ``floor``; a final level minimizes the
    sum of inequality duals so the returned vector is unique.
    """
    labels = lp.labels
    index = {lab: k for k, lab in enumerate(labels)}
    try:
        order = [index[lab] for lab in ordered_labels]
    except KeyError as exc:
        raise LpError(f"unknown constraint label {exc.args[0]!r}") from None
    m_eq, m_ub, n = lp.A_eq.shape[0], lp.A_ub.shape[0], lp.n
    fin_lo = np.flatnonzero(np.isfinite(lp.lb))
    fin_hi = np.flatnonzero(np.isfinite(lp.ub))
    nv = m_eq + m_ub + fin_lo.size + fin_hi.size
    # stationarity: A_eq.T pi - A_ub.T mu + z_lo - z_hi = c
    Aeq = np.zeros((n, nv))
    Aeq[:, :m_eq] = lp.A_eq.T
    Aeq[:, m_eq:m_eq + m_ub] = -lp.A_ub.T
    o = m_eq + m_ub
    Aeq[fin_lo, o + np.arange(fin_lo.size)] = 1.0
    o2 = o + fin_lo.size
    Aeq[fin_hi, o2 + np.arange(fin_hi.size)] = -1.0
    obj = np.zeros(nv)
    obj[:m_eq] = -lp.b_eq
    obj[m_eq:o] = lp.b_ub
    obj[o:o2] = -lp.lb[fin_lo]
    obj[o2:] = lp.ub[fin_hi]
    lb = np.zeros(nv)
    lb[:m_eq] = -np.inf
    for k in order:
        lb[k] = floor if k < m_eq else max(floor, 0.0)
    levels = np.zeros((len(order) + 1, nv))
    for lvl, k in enumerate(order):
        levels[lvl, k] = 1.0
    levels[-1, m_eq:o] = 1.0
    dual_lp = LinearProgram(c=obj, A_eq=Aeq, b_eq=lp.c, lb=lb, tiebreak=levels)
    sol = solve_lp(dual_lp, max_iter=max_iter)
    if not sol.optimal:
        raise LexDualError(f"lexicographic dual problem {sol.status.value}: {sol.message}")
    dual_value = -sol.objective
    if solution is not None and solution.optimal:
        scale = max(1.0, abs(solution.objective))
        if abs(dual_value - solution.objective) > GAP_TOL * scale:
            raise LexDualError(
                f"dual optimum {dual_value!r} disagrees with primal optimum {solution.objective!r}"
            )
    v = sol.x
    eq = v[:m_eq].copy()
    ub = v[m_eq:o].copy()
    full = np.concatenate([eq, ub])
    return DualVector(eq=eq, ub=ub, ordered=full[order], objective=dual_value, labels=labels)
