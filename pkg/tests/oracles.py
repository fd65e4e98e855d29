"""Independent reference implementations used only by the test suite.

These deliberately share no code with the package solver: a full dense
tableau simplex with Bland's rule throughout, plus exhaustive enumeration
for small MILPs.  Slow and simple on purpose.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

TOL = 1e-9


def _pivot(tableau: np.ndarray, basis: list[int], row: int, col: int) -> None:
    tableau[row] /= tableau[row, col]
    for i in range(tableau.shape[0]):
        if i != row and abs(tableau[i, col]) > 0.0:
            tableau[i] -= tableau[i, col] * tableau[row]
    basis[row] = col


def _bland_min(cost_row: np.ndarray, allowed: np.ndarray) -> int | None:
    for j in range(cost_row.shape[0]):
        if allowed[j] and cost_row[j] < -TOL:
            return j
    return None


def _run_simplex(tableau: np.ndarray, basis: list[int], cost: np.ndarray, allowed: np.ndarray):
    """Minimize cost over the canonical tableau with Bland's rule."""
    m = tableau.shape[0]
    n = cost.shape[0]
    while True:
        cb = cost[basis]
        reduced = cost - cb @ tableau[:, :n]
        enter = _bland_min(reduced, allowed)
        if enter is None:
            x = np.zeros(n)
            x[basis] = tableau[:, -1]
            return "optimal", x
        ratios = [
            (tableau[i, -1] / tableau[i, enter], i)
            for i in range(m)
            if tableau[i, enter] > TOL
        ]
        if not ratios:
            return "unbounded", None
        theta = min(r for r, _ in ratios)
        candidates = [i for r, i in ratios if r <= theta + TOL]
        leave = min(candidates, key=lambda i: basis[i])
        _pivot(tableau, basis, leave, enter)


def oracle_lp(c, a_ub=None, b_ub=None, a_eq=None, b_eq=None, bounds=None):
    """Dense-tableau two-phase simplex for min c'x.

    bounds: list of (lower, upper) per variable; lower must be finite,
    upper may be inf.  Returns (status, objective, x).
    """
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    if bounds is None:
        bounds = [(0.0, math.inf)] * n
    a_rows = []
    b_vals = []
    senses = []
    if a_ub is not None:
        for row, rhs in zip(np.atleast_2d(a_ub), np.atleast_1d(b_ub)):
            a_rows.append(np.asarray(row, dtype=float))
            b_vals.append(float(rhs))
            senses.append("<=")
    if a_eq is not None:
        for row, rhs in zip(np.atleast_2d(a_eq), np.atleast_1d(b_eq)):
            a_rows.append(np.asarray(row, dtype=float))
            b_vals.append(float(rhs))
            senses.append("=")

    # Shift lower bounds to zero, add explicit rows for finite uppers.
    shift = np.array([lo for lo, _ in bounds], dtype=float)
    if np.any(~np.isfinite(shift)):
        raise ValueError("oracle requires finite lower bounds")
    for j, (lo, hi) in enumerate(bounds):
        if math.isfinite(hi):
            row = np.zeros(n)
            row[j] = 1.0
            a_rows.append(row)
            b_vals.append(hi)
            senses.append("<=")

    m = len(a_rows)
    a = np.vstack(a_rows) if m else np.zeros((0, n))
    b = np.array(b_vals) - a @ shift

    n_slack = sum(1 for s in senses if s == "<=")
    total = n + n_slack + m  # structural + slacks + artificials
    big = np.zeros((m, total))
    big[:, :n] = a
    slack_idx = n
    for i, sense in enumerate(senses):
        if sense == "<=":
            big[i, slack_idx] = 1.0
            slack_idx += 1
    # Normalize rhs signs, then add one artificial per row.
    for i in range(m):
        if b[i] < 0.0:
            big[i] *= -1.0
            b[i] *= -1.0
    for i in range(m):
        big[i, n + n_slack + i] = 1.0

    tableau = np.hstack([big, b.reshape(-1, 1)])
    basis = list(range(n + n_slack, n + n_slack + m))

    phase1_cost = np.zeros(total)
    phase1_cost[n + n_slack:] = 1.0
    allowed = np.ones(total, dtype=bool)
    status, _ = _run_simplex(tableau, basis, phase1_cost, allowed)
    assert status == "optimal"
    infeas = float(phase1_cost[basis] @ tableau[:, -1])
    if infeas > 1e-7:
        return "infeasible", math.nan, None

    # Drive lingering artificials out of the basis (or drop their rows).
    keep_rows = []
    for i in range(m):
        if basis[i] >= n + n_slack:
            pivot_col = next(
                (j for j in range(n + n_slack) if abs(tableau[i, j]) > 1e-9), None
            )
            if pivot_col is None:
                continue  # redundant row
            _pivot(tableau, basis, i, pivot_col)
        keep_rows.append(i)
    if len(keep_rows) < m:
        tableau = tableau[keep_rows]
        basis = [basis[i] for i in keep_rows]
        m = len(keep_rows)

    phase2_cost = np.zeros(total)
    phase2_cost[:n] = c
    allowed = np.ones(total, dtype=bool)
    allowed[n + n_slack:] = False
    status, y = _run_simplex(tableau, basis, phase2_cost, allowed)
    if status == "unbounded":
        return "unbounded", -math.inf, None
    x = y[:n] + shift
    return "optimal", float(c @ x), x


def oracle_milp(c, binaries, a_ub=None, b_ub=None, a_eq=None, b_eq=None, bounds=None):
    """Exhaustive enumeration over binary assignments, LP oracle underneath."""
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    if bounds is None:
        bounds = [(0.0, math.inf)] * n
    best_obj = math.inf
    best_x = None
    for assignment in itertools.product((0.0, 1.0), repeat=len(binaries)):
        fixed = list(bounds)
        for col, val in zip(binaries, assignment):
            fixed[col] = (val, val)
        status, obj, x = oracle_lp(c, a_ub, b_ub, a_eq, b_eq, fixed)
        if status == "unbounded":
            return "unbounded", -math.inf, None
        if status == "optimal" and obj < best_obj - 1e-12:
            best_obj = obj
            best_x = x
    if best_x is None:
        return "infeasible", math.nan, None
    return "optimal", best_obj, best_x
