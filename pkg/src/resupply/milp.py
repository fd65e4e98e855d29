"""Generic MILP container, reference solver, and LP-format text interface.

The reference solver is a bounded-variable primal simplex (see
``_simplex``) under a best-bound branch-and-bound on binary columns with
most-fractional branching and deterministic tie-breaks.  It targets desk
scale; larger instances go through ``export_lp`` to an external solver and
come back through ``import_solution``.

File formats (both byte-stable for identical problems):

* LP export: standard ``Minimize / Subject To / Bounds / Binary / End``
  sections, insertion order, coefficients printed with 17 significant
  digits.
* Solution import: one ``<column-name> <value>`` pair per line; ``#`` or
  ``\\`` lines are comments; columns absent from the file default to zero.
"""

from __future__ import annotations

import heapq
import math
import re
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from . import _simplex
from ._simplex import SimplexEngine

__all__ = [
    "LinExpr",
    "MilpProblem",
    "SolveResult",
    "NameCollision",
    "InfeasibleImport",
    "OPTIMAL",
    "INFEASIBLE",
    "UNBOUNDED",
    "GAP_LIMIT",
    "ITERATION_LIMIT",
    "solve_lp",
    "solve_milp",
    "BranchAndBound",
    "export_lp",
    "import_solution",
]

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"
GAP_LIMIT = "GapLimit"
ITERATION_LIMIT = "IterationLimit"

INTEGRALITY_TOL = 1e-6
FEASIBILITY_CHECK_TOL = 1e-6


class NameCollision(ValueError):
    """Two distinct columns or rows collide after name sanitization."""


class InfeasibleImport(ValueError):
    """An imported solution violates a constraint row or bound."""


class LinExpr:
    """Sparse affine expression over problem columns: sum(coef * col) + const."""

    __slots__ = ("terms", "const")

    def __init__(self, terms: dict[int, float] | None = None, const: float = 0.0):
        self.terms = dict(terms) if terms else {}
        self.const = float(const)

    @classmethod
    def col(cls, index: int, coef: float = 1.0) -> "LinExpr":
        return cls({index: float(coef)})

    @classmethod
    def constant(cls, value: float) -> "LinExpr":
        return cls({}, value)

    def copy(self) -> "LinExpr":
        return LinExpr(self.terms, self.const)

    @property
    def is_constant(self) -> bool:
        return not self.terms

    def add(self, other: "LinExpr", scale: float = 1.0) -> "LinExpr":
        out = self.copy()
        for idx, coef in other.terms.items():
            out.terms[idx] = out.terms.get(idx, 0.0) + scale * coef
            if out.terms[idx] == 0.0:
                del out.terms[idx]
        out.const += scale * other.const
        return out

    def add_col(self, index: int, coef: float) -> "LinExpr":
        return self.add(LinExpr.col(index, coef))

    def scaled(self, factor: float) -> "LinExpr":
        return LinExpr({i: c * factor for i, c in self.terms.items()}, self.const * factor)

    def shifted(self, value: float) -> "LinExpr":
        return LinExpr(self.terms, self.const + value)

    def resolve(self, x: np.ndarray) -> float:
        return float(sum(c * x[i] for i, c in self.terms.items()) + self.const)

    def __repr__(self):
        return f"LinExpr({self.terms}, const={self.const})"


@dataclass(frozen=True)
class Column:
    name: str
    kind: str  # continuous | binary
    lower: float
    upper: float
    objective: float


@dataclass(frozen=True)
class Row:
    name: str
    coeffs: tuple[tuple[int, float], ...]
    sense: str  # <= | = | >=
    rhs: float


@dataclass
class SolveResult:
    """Solver outcome: status, objective, incumbent values, and bound/gap."""

    status: str
    objective: float
    values: dict[str, float]
    bound: float
    gap: float
    x: np.ndarray | None = None
    nodes: int = 0
    iterations: int = 0
    warnings: list[str] = field(default_factory=list)


class MilpProblem:
    """A minimization MILP with named continuous and binary columns."""

    def __init__(self, name: str = "problem"):
        self.name = name
        self.columns: list[Column] = []
        self.rows: list[Row] = []
        self.objective_offset = 0.0
        self._col_index: dict[str, int] = {}
        self._row_index: dict[str, int] = {}
        self._engine: SimplexEngine | None = None

    # -- construction ---------------------------------------------------

    def add_column(
        self,
        name: str,
        kind: str = "continuous",
        lower: float = 0.0,
        upper: float = math.inf,
        objective: float = 0.0,
    ) -> int:
        if name in self._col_index:
            raise NameCollision(f"duplicate column name {name!r}")
        if kind not in ("continuous", "binary"):
            raise ValueError(f"column kind must be continuous|binary, got {kind!r}")
        if kind == "binary":
            lower, upper = max(0.0, lower), min(1.0, upper)
        if lower > upper:
            raise ValueError(f"column {name!r}: lower {lower} exceeds upper {upper}")
        self.columns.append(Column(name, kind, float(lower), float(upper), float(objective)))
        self._col_index[name] = len(self.columns) - 1
        self._engine = None
        return len(self.columns) - 1

    def add_row(
        self, name: str, coeffs: list[tuple[int, float]], sense: str, rhs: float
    ) -> int:
        if name in self._row_index:
            raise NameCollision(f"duplicate row name {name!r}")
        if sense not in ("<=", "=", ">="):
            raise ValueError(f"row sense must be <=, =, or >=, got {sense!r}")
        merged: dict[int, float] = {}
        for idx, coef in coeffs:
            if not (0 <= idx < len(self.columns)):
                raise IndexError(f"row {name!r} references unknown column {idx}")
            if coef != 0.0:
                merged[idx] = merged.get(idx, 0.0) + float(coef)
        self.rows.append(Row(name, tuple(sorted(merged.items())), sense, float(rhs)))
        self._row_index[name] = len(self.rows) - 1
        self._engine = None
        return len(self.rows) - 1

    def set_column_bounds(self, index: int, lower: float, upper: float) -> None:
        """Rebound a column in place; bounds are per-solve data, so the
        cached engine stays valid."""
        col = self.columns[index]
        if lower > upper:
            raise ValueError(f"column {col.name!r}: lower {lower} exceeds upper {upper}")
        self.columns[index] = Column(col.name, col.kind, float(lower), float(upper), col.objective)

    def set_objective_coefficient(self, index: int, coefficient: float) -> None:
        col = self.columns[index]
        self.columns[index] = Column(col.name, col.kind, col.lower, col.upper, float(coefficient))

    def add_linear(self, name: str, expr: LinExpr, sense: str, rhs: float) -> int | None:
        """Add ``expr sense rhs``, folding the expression constant into the rhs.

        Constant expressions are checked immediately; a satisfied constant
        row is dropped, a violated one raises.
        """
        adjusted = rhs - expr.const
        if expr.is_constant:
            ok = {
                "<=": 0.0 <= adjusted + 1e-12,
                ">=": 0.0 >= adjusted - 1e-12,
                "=": abs(adjusted) <= 1e-12,
            }[sense]
            if not ok:
                raise ValueError(f"constant row {name!r} is infeasible: 0 {sense} {adjusted}")
            return None
        return self.add_row(name, list(expr.terms.items()), sense, adjusted)

    # -- accessors --------------------------------------------------------

    @property
    def n_cols(self) -> int:
        return len(self.columns)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def column_index(self, name: str) -> int:
        return self._col_index[name]

    def binaries(self) -> list[int]:
        return [i for i, c in enumerate(self.columns) if c.kind == "binary"]

    def objective_array(self) -> np.ndarray:
        return np.array([c.objective for c in self.columns], dtype=float)

    def bounds_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([c.lower for c in self.columns], dtype=float)
        hi = np.array([c.upper for c in self.columns], dtype=float)
        return lo, hi

    def engine(self) -> SimplexEngine:
        """Build (or reuse) the simplex engine over this problem's rows."""
        if self._engine is None:
            data, rows, cols = [], [], []
            senses = []
            rhs = np.zeros(len(self.rows))
            for i, row in enumerate(self.rows):
                flip = -1.0 if row.sense == ">=" else 1.0
                senses.append("E" if row.sense == "=" else "L")
                rhs[i] = flip * row.rhs
                for idx, coef in row.coeffs:
                    data.append(flip * coef)
                    rows.append(i)
                    cols.append(idx)
            a = scipy.sparse.csc_matrix(
                (data, (rows, cols)), shape=(len(self.rows), len(self.columns))
            )
            self._engine = SimplexEngine(a, senses, rhs)
        return self._engine

    def row_violations(self, x: np.ndarray) -> list[tuple[str, float]]:
        """Constraint violations of a candidate point, in insertion order."""
        out = []
        for row in self.rows:
            activity = sum(coef * x[idx] for idx, coef in row.coeffs)
            if row.sense == "<=":
                violation = activity - row.rhs
            elif row.sense == ">=":
                violation = row.rhs - activity
            else:
                violation = abs(activity - row.rhs)
            if violation > 0.0:
                out.append((row.name, float(violation)))
        return out

    def values_dict(self, x: np.ndarray) -> dict[str, float]:
        values = {}
        for i, col in enumerate(self.columns):
            v = float(x[i])
            if col.kind == "binary" and abs(v - round(v)) <= INTEGRALITY_TOL:
                v = float(round(v))
            values[col.name] = v
        return values


def _certify(problem: MilpProblem, x: np.ndarray) -> None:
    bad = [(n, v) for n, v in problem.row_violations(x) if v > FEASIBILITY_CHECK_TOL]
    if bad:
        name, violation = bad[0]
        raise ArithmeticError(
            f"solver returned a point violating row {name!r} by {violation:.3e}"
        )


def solve_lp(problem: MilpProblem, max_iter: int | None = None) -> SolveResult:
    """Solve the LP relaxation (binaries relaxed to their [0, 1] boxes).

    Returns Infeasible/Unbounded statuses rather than raising for
    well-formed inputs; an Optimal result is re-verified against every row
    before it is returned.
    """
    engine = problem.engine()
    lo, hi = problem.bounds_arrays()
    res = engine.solve(problem.objective_array(), lo, hi, warm=False, max_iter=max_iter)
    status = {
        _simplex.OPTIMAL: OPTIMAL,
        _simplex.INFEASIBLE: INFEASIBLE,
        _simplex.UNBOUNDED: UNBOUNDED,
        _simplex.ITERATION_LIMIT: ITERATION_LIMIT,
    }[res.status]
    objective = res.objective + problem.objective_offset
    if status == OPTIMAL:
        _certify(problem, res.x)
        return SolveResult(
            status, objective, problem.values_dict(res.x), objective, 0.0, res.x,
            iterations=res.iterations,
        )
    return SolveResult(status, math.nan, {}, -math.inf, math.inf, None, iterations=res.iterations)


class BranchAndBound:
    """Best-bound branch-and-bound over one problem's binaries.

    The same instance can solve repeatedly under different objective vectors
    or bound overrides (the simplex engine state carries over between node
    solves, which keeps re-solves short).  Node selection is best-bound with
    creation-order tie-break; branching picks the most fractional binary,
    ties broken by lowest column index.
    """

    def __init__(self, problem: MilpProblem):
        self.problem = problem
        self.engine = problem.engine()
        self.binaries = problem.binaries()

    def _solve_node(self, cost, lo, hi, fixings) -> "_simplex.EngineResult":
        if fixings:
            lo = lo.copy()
            hi = hi.copy()
            for col, val in fixings:
                lo[col] = val
                hi[col] = val
        return self.engine.solve(cost, lo, hi, warm=True)

    def _fractional(self, x: np.ndarray) -> list[tuple[int, float]]:
        out = []
        for col in self.binaries:
            frac = abs(x[col] - round(x[col]))
            if frac > INTEGRALITY_TOL:
                out.append((col, frac))
        return out

    def _branch_column(self, x: np.ndarray) -> int:
        best_col, best_score = -1, -1.0
        for col in self.binaries:
            frac = x[col] - math.floor(x[col])
            score = 0.5 - abs(frac - 0.5)
            if score > best_score + 1e-12:
                best_col, best_score = col, score
        return best_col

    def solve(
        self,
        objective: np.ndarray | None = None,
        bounds: dict[int, tuple[float, float]] | None = None,
        gap_limit: float = 1e-6,
        node_limit: int = 200_000,
        time_limit: float | None = None,
    ) -> SolveResult:
        problem = self.problem
        cost = problem.objective_array() if objective is None else np.asarray(objective, float)
        lo, hi = problem.bounds_arrays()
        if bounds:
            for col, (l, h) in bounds.items():
                lo[col], hi[col] = l, h
        offset = problem.objective_offset
        deadline = None if time_limit is None else time.monotonic() + time_limit

        root = self._solve_node(cost, lo, hi, ())
        nodes = 0
        iterations = root.iterations
        if root.status == _simplex.INFEASIBLE:
            return SolveResult(INFEASIBLE, math.nan, {}, -math.inf, math.inf, None)
        if root.status == _simplex.UNBOUNDED:
            return SolveResult(UNBOUNDED, -math.inf, {}, -math.inf, math.inf, None)
        if root.status == _simplex.ITERATION_LIMIT:
            return SolveResult(ITERATION_LIMIT, math.nan, {}, -math.inf, math.inf, None)

        incumbent_x: np.ndarray | None = None
        incumbent_obj = math.inf

        def consider(x: np.ndarray, obj: float):
            nonlocal incumbent_x, incumbent_obj
            if obj < incumbent_obj - 1e-12:
                incumbent_obj = obj
                incumbent_x = x.copy()

        if not self._fractional(root.x):
            consider(root.x, root.objective)
            obj = incumbent_obj + offset
            return SolveResult(
                OPTIMAL, obj, problem.values_dict(incumbent_x), obj, 0.0, incumbent_x,
                nodes=0, iterations=iterations,
            )

        # Greedy dive from the root for a first incumbent: repeatedly pin the
        # most fractional binary to its nearest value, backing off once per
        # column if that child is infeasible.
        dive_fix: list[tuple[int, float]] = []
        dive_x = root.x
        for _ in range(len(self.binaries) + 4):
            col = self._branch_column(dive_x)
            preferred = float(round(dive_x[col]))
            advanced = False
            last = None
            for val in (preferred, 1.0 - preferred):
                res = self._solve_node(cost, lo, hi, tuple(dive_fix + [(col, val)]))
                iterations += res.iterations
                if res.status == _simplex.OPTIMAL:
                    dive_fix.append((col, val))
                    dive_x = res.x
                    last = res
                    advanced = True
                    break
            if not advanced:
                break
            if not self._fractional(dive_x):
                consider(dive_x, last.objective)
                break

        counter = 0
        heap: list[tuple[float, int, tuple[tuple[int, float], ...]]] = []
        root_frac_col = self._branch_column(root.x)
        for val in (0.0, 1.0):
            heap.append((root.objective, counter, ((root_frac_col, val),)))
            counter += 1
        heapq.heapify(heap)

        status = OPTIMAL
        best_bound = root.objective
        while heap:
            bound, _, fixings = heap[0]
            best_bound = bound
            if incumbent_x is not None:
                gap = (incumbent_obj - best_bound) / max(1.0, abs(incumbent_obj))
                if gap <= gap_limit:
                    break
            if nodes >= node_limit or (deadline is not None and time.monotonic() > deadline):
                status = ITERATION_LIMIT
                break
            heapq.heappop(heap)
            if incumbent_x is not None and bound >= incumbent_obj - 1e-9:
                continue
            res = self._solve_node(cost, lo, hi, fixings)
            nodes += 1
            iterations += res.iterations
            if res.status == _simplex.INFEASIBLE:
                continue
            if res.status != _simplex.OPTIMAL:
                status = ITERATION_LIMIT
                break
            if incumbent_x is not None and res.objective >= incumbent_obj - 1e-9:
                continue
            fracs = self._fractional(res.x)
            if not fracs:
                consider(res.x, res.objective)
                continue
            col = self._branch_column(res.x)
            for val in (0.0, 1.0):
                heapq.heappush(heap, (res.objective, counter, fixings + ((col, val),)))
                counter += 1

        if incumbent_x is None:
            if status == ITERATION_LIMIT:
                return SolveResult(ITERATION_LIMIT, math.nan, {}, best_bound + offset, math.inf,
                                   None, nodes=nodes, iterations=iterations)
            return SolveResult(INFEASIBLE, math.nan, {}, -math.inf, math.inf, None,
                               nodes=nodes, iterations=iterations)

        if not heap:
            best_bound = incumbent_obj
        gap = (incumbent_obj - best_bound) / max(1.0, abs(incumbent_obj))
        gap = max(gap, 0.0)
        if status != ITERATION_LIMIT:
            status = OPTIMAL if gap <= 1e-6 else GAP_LIMIT
        obj = incumbent_obj + offset
        x = incumbent_x
        return SolveResult(
            status, obj, problem.values_dict(x), best_bound + offset, gap, x,
            nodes=nodes, iterations=iterations,
        )


def solve_milp(
    problem: MilpProblem,
    time_limit: float | None = None,
    gap_limit: float = 1e-6,
    node_limit: int = 200_000,
) -> SolveResult:
    """Branch-and-bound solve; binaries must be the only integer columns."""
    result = BranchAndBound(problem).solve(
        gap_limit=gap_limit, node_limit=node_limit, time_limit=time_limit
    )
    if result.status == OPTIMAL and result.x is not None:
        _certify(problem, result.x)
    return result


# ----------------------------------------------------------------------
# LP-format text interface
# ----------------------------------------------------------------------

_SANITIZE_RE = re.compile(r"[^A-Za-z0-9_]")


def _sanitize_names(names: list[str], what: str) -> list[str]:
    out = []
    seen: dict[str, str] = {}
    for name in names:
        clean = _SANITIZE_RE.sub("_", name)
        if not clean or clean[0].isdigit() or clean[0] in ".eE":
            clean = "_" + clean
        if clean in seen and seen[clean] != name:
            raise NameCollision(
                f"{what} names {seen[clean]!r} and {name!r} both sanitize to {clean!r}"
            )
        seen[clean] = name
        out.append(clean)
    return out


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def _fmt_terms(coeffs: list[tuple[str, float]]) -> str:
    parts: list[str] = []
    for name, coef in coeffs:
        if not parts:
            parts.append(f"{_fmt(coef)} {name}" if coef >= 0 else f"- {_fmt(-coef)} {name}")
        elif coef >= 0:
            parts.append(f"+ {_fmt(coef)} {name}")
        else:
            parts.append(f"- {_fmt(-coef)} {name}")
    return " ".join(parts)


def export_lp(problem: MilpProblem) -> str:
    """Serialize to LP-format text, byte-identical for identical problems."""
    col_names = _sanitize_names([c.name for c in problem.columns], "column")
    row_names = _sanitize_names([r.name for r in problem.rows], "row")

    lines = [f"\\ Problem: {problem.name}", "Minimize"]
    obj_terms = [
        (col_names[i], c.objective) for i, c in enumerate(problem.columns) if c.objective != 0.0
    ]
    obj = _fmt_terms(obj_terms)
    if problem.objective_offset != 0.0:
        const = problem.objective_offset
        obj = f"{obj} {'+' if const >= 0 else '-'} {_fmt(abs(const))}" if obj else _fmt(const)
    lines.append(f" obj: {obj}" if obj else " obj:")
    lines.append("Subject To")
    for name, row in zip(row_names, problem.rows):
        terms = _fmt_terms([(col_names[i], coef) for i, coef in row.coeffs])
        if not terms:
            terms = "0 " + col_names[0] if problem.columns else "0"
        lines.append(f" {name}: {terms} {row.sense} {_fmt(row.rhs)}")

    bound_lines = []
    for cname, col in zip(col_names, problem.columns):
        lo, hi = col.lower, col.upper
        if col.kind == "binary" and lo == 0.0 and hi == 1.0:
            continue
        if lo == 0.0 and math.isinf(hi):
            continue
        if lo == hi:
            bound_lines.append(f" {cname} = {_fmt(lo)}")
        elif math.isinf(hi) and not math.isinf(lo):
            bound_lines.append(f" {cname} >= {_fmt(lo)}")
        elif math.isinf(lo) and math.isinf(hi):
            bound_lines.append(f" {cname} free")
        elif math.isinf(lo):
            bound_lines.append(f" -infinity <= {cname} <= {_fmt(hi)}")
        else:
            bound_lines.append(f" {_fmt(lo)} <= {cname} <= {_fmt(hi)}")
    if bound_lines:
        lines.append("Bounds")
        lines.extend(bound_lines)

    binary_names = [col_names[i] for i in problem.binaries()]
    if binary_names:
        lines.append("Binary")
        lines.append(" " + " ".join(binary_names))
    lines.append("End")
    return "\n".join(lines) + "\n"


def import_solution(text: str, problem: MilpProblem) -> SolveResult:
    """Parse ``name value`` lines and validate them against the problem.

    Columns missing from the file default to zero (flagged in warnings);
    any constraint or bound violated beyond 1e-6 raises InfeasibleImport.
    The result carries no optimality proof: status is GapLimit with an
    unknown bound.
    """
    col_names = _sanitize_names([c.name for c in problem.columns], "column")
    index = {name: i for i, name in enumerate(col_names)}
    for i, col in enumerate(problem.columns):
        index.setdefault(col.name, i)

    x = np.zeros(problem.n_cols)
    seen: set[int] = set()
    warnings: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith("\\"):
            continue
        parts = line.split()
        if len(parts) < 2:
            raise ValueError(f"line {lineno}: expected '<name> <value>', got {raw!r}")
        name, value = parts[0], parts[1]
        if name == "=obj=" or name.lower() in ("objective", "obj"):
            continue
        if name not in index:
            warnings.append(f"line {lineno}: unknown column {name!r} ignored")
            continue
        x[index[name]] = float(value)
        seen.add(index[name])
    missing = [problem.columns[i].name for i in range(problem.n_cols) if i not in seen]
    if missing:
        warnings.append(f"{len(missing)} column(s) missing from file, assumed 0: "
                        + ", ".join(missing[:8]) + ("..." if len(missing) > 8 else ""))

    for i, col in enumerate(problem.columns):
        if x[i] < col.lower - FEASIBILITY_CHECK_TOL or x[i] > col.upper + FEASIBILITY_CHECK_TOL:
            raise InfeasibleImport(
                f"column {col.name!r} value {x[i]} outside [{col.lower}, {col.upper}]"
            )
    violated = [(n, v) for n, v in problem.row_violations(x) if v > FEASIBILITY_CHECK_TOL]
    if violated:
        name, violation = violated[0]
        raise InfeasibleImport(f"row {name!r} violated by {violation:.3e}")

    objective = float(problem.objective_array() @ x) + problem.objective_offset
    return SolveResult(
        GAP_LIMIT, objective, problem.values_dict(x), -math.inf, math.inf, x,
        warnings=warnings,
    )
