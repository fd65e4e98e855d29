"""Bounded-variable revised primal simplex engine.

Internal solver behind the public ``solve_lp`` / ``solve_milp`` surface.

Design notes
------------
* Computational form: ``A x = b`` with per-column bounds, after appending a
  slack column to every inequality row and a fixed-at-zero artificial column
  to every equality row.  The artificial doubles as the equality row's
  starting basic column; phase 1 drives it back inside its [0, 0] box.
* Phase 1 minimizes the total bound violation of the basic variables with
  piecewise-linear costs (-1 below the lower bound, +1 above the upper
  bound), re-priced every iteration.  This also handles warm starts after
  bound changes without re-introducing artificials.
* Pricing is Dantzig (steepest reduced cost) with a deterministic
  lowest-index tie-break; a stall counter flips the engine into Bland's
  rule, which guarantees termination on degenerate cycles.
* The basis inverse is held as a dense LU factorization plus a chain of
  product-form eta updates, refactorized periodically.  Row/column scaling
  uses powers of two so integral inputs stay exactly representable.
* Everything is deterministic: identical inputs produce identical pivot
  sequences, bases, and solutions.  Warm solves continue from whatever
  basis the engine last held, so bound/objective sweeps stay cheap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse

AT_LOWER = 0
AT_UPPER = 1
BASIC = 2
FREE = 3

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"

_PIVOT_TOL = 1e-9
_RATIO_TOL = 1e-9
_STALL_LIMIT = 400
_STALL_EPS = 1e-12


@dataclass
class EngineResult:
    status: str
    x: np.ndarray  # structural columns, original scale
    objective: float  # over structural columns, original scale
    iterations: int


def _pow2_scale(values: np.ndarray) -> np.ndarray:
    """Nearest power of two to 1/value, with zeros left unscaled."""
    safe = np.where(values > 0.0, values, 1.0)
    return np.exp2(-np.round(np.log2(safe)))


def _nonzero_min_per(axis_idx: np.ndarray, data: np.ndarray, size: int) -> np.ndarray:
    out = np.full(size, np.inf)
    np.minimum.at(out, axis_idx, data)
    out[~np.isfinite(out)] = 1.0
    return out


class SimplexEngine:
    """Reusable simplex state over a fixed constraint matrix.

    Bounds and objective may change between ``solve`` calls (the basis and
    factorization carry over); the matrix may not.
    """

    def __init__(
        self,
        a_struct: scipy.sparse.spmatrix,
        senses: list[str],
        rhs: np.ndarray,
        feas_tol: float = 1e-7,
        opt_tol: float = 1e-7,
    ):
        a_struct = scipy.sparse.csc_matrix(a_struct)
        m, n = a_struct.shape
        rhs = np.asarray(rhs, dtype=float)
        if len(senses) != m or rhs.shape != (m,):
            raise ValueError("row metadata does not match the matrix")
        if any(s not in ("L", "E") for s in senses):
            raise ValueError("senses must be normalized to L/E before the engine")
        self.m = m
        self.n_struct = n
        self.senses = list(senses)

        coo = a_struct.tocoo()
        abs_data = np.abs(coo.data)
        row_max = np.zeros(m)
        col_max = np.zeros(n)
        if coo.nnz:
            np.maximum.at(row_max, coo.row, abs_data)
        row_min = _nonzero_min_per(coo.row, abs_data, m) if coo.nnz else np.ones(m)
        row_max = np.where(row_max > 0, row_max, 1.0)
        self.row_scale = _pow2_scale(np.sqrt(row_max * row_min))

        scaled_data = coo.data * self.row_scale[coo.row]
        abs_scaled = np.abs(scaled_data)
        if coo.nnz:
            np.maximum.at(col_max, coo.col, abs_scaled)
        col_min = _nonzero_min_per(coo.col, abs_scaled, n) if coo.nnz else np.ones(n)
        col_max = np.where(col_max > 0, col_max, 1.0)
        self.col_scale = _pow2_scale(np.sqrt(col_max * col_min))
        scaled_data = scaled_data * self.col_scale[coo.col]
        scaled = scipy.sparse.csc_matrix((scaled_data, (coo.row, coo.col)), shape=(m, n))

        self.slack_of_row = np.full(m, -1, dtype=int)
        self.art_of_row = np.full(m, -1, dtype=int)
        cols = []
        rows = []
        idx = n
        for i, sense in enumerate(self.senses):
            rows.append(i)
            cols.append(idx)
            if sense == "L":
                self.slack_of_row[i] = idx
            else:
                self.art_of_row[i] = idx
            idx += 1
        extra = scipy.sparse.csc_matrix(
            (np.ones(m), (np.array(rows), np.array(cols) - n)), shape=(m, m)
        )
        self.A = scipy.sparse.hstack([scaled, extra], format="csc")
        self.AT = self.A.T.tocsr()
        self.N = self.A.shape[1]
        self.b = rhs * self.row_scale

        self.lo = np.zeros(self.N)
        self.hi = np.full(self.N, np.inf)
        art_cols = self.art_of_row[self.art_of_row >= 0]
        self.hi[art_cols] = 0.0
        self.cost = np.zeros(self.N)

        self.basis = np.where(self.slack_of_row >= 0, self.slack_of_row, self.art_of_row)
        self.vstat = np.full(self.N, AT_LOWER, dtype=np.int8)
        self.vstat[self.basis] = BASIC
        self.x = np.zeros(self.N)

        self.feas_tol = feas_tol
        self.opt_tol = opt_tol
        self.eta_cap = max(128, m // 8)
        self._lu = None
        self._etas: list[tuple[int, np.ndarray, float]] = []
        self._have_state = False
        self.total_iterations = 0
        self._iter = 0
        self._bland = False
        self._stall = 0
        self._last_merit = np.inf

    # ------------------------------------------------------------------
    # factorization
    # ------------------------------------------------------------------

    def _refactorize(self):
        dense = self.A[:, self.basis].toarray()
        lu, piv = scipy.linalg.lu_factor(dense, check_finite=False)
        if np.any(np.abs(np.diag(lu)) < 1e-11):
            raise ArithmeticError("singular basis during refactorization")
        self._lu = (lu, piv)
        self._etas = []

    def _ftran(self, v: np.ndarray) -> np.ndarray:
        w = scipy.linalg.lu_solve(self._lu, v, check_finite=False)
        for r, z, zr in self._etas:
            t = w[r] / zr
            if t != 0.0:
                w -= z * t
            w[r] = t
        return w

    def _btran(self, v: np.ndarray) -> np.ndarray:
        w = v.copy()
        for r, z, zr in reversed(self._etas):
            w[r] -= (z @ w - w[r]) / zr
        return scipy.linalg.lu_solve(self._lu, w, trans=1, check_finite=False)

    def _column(self, j: int) -> np.ndarray:
        start, end = self.A.indptr[j], self.A.indptr[j + 1]
        col = np.zeros(self.m)
        col[self.A.indices[start:end]] = self.A.data[start:end]
        return col

    def _recompute_basics(self):
        tmp = self.x.copy()
        tmp[self.basis] = 0.0
        residual = self.b - self.A @ tmp
        self.x[self.basis] = self._ftran(residual)

    # ------------------------------------------------------------------
    # solve
    # ------------------------------------------------------------------

    def solve(
        self,
        cost: np.ndarray,
        lo: np.ndarray,
        hi: np.ndarray,
        warm: bool = True,
        max_iter: int | None = None,
    ) -> EngineResult:
        """Minimize cost over structural columns within [lo, hi].

        All three arrays are in original (unscaled) units and cover the
        structural columns only.
        """
        cost = np.asarray(cost, dtype=float)
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        for name, arr in (("cost", cost), ("lo", lo), ("hi", hi)):
            if arr.shape != (self.n_struct,):
                raise ValueError(f"{name} must have shape ({self.n_struct},)")
        self.cost[: self.n_struct] = cost * self.col_scale
        with np.errstate(invalid="ignore"):
            self.lo[: self.n_struct] = lo / self.col_scale
            self.hi[: self.n_struct] = hi / self.col_scale

        if max_iter is None:
            max_iter = 5000 + 60 * (self.m + self.n_struct)
        self._iter = 0
        self._bland = False
        self._stall = 0
        self._last_merit = np.inf

        if warm and self._have_state:
            self._snap_nonbasics()
            self._recompute_basics()
        else:
            self._cold_start()

        status = self._phase(max_iter, phase1=True)
        if status == "feasible":
            status = self._phase(max_iter, phase1=False)
        self._have_state = True
        self.total_iterations += self._iter

        x_struct = self.x[: self.n_struct] * self.col_scale
        objective = float(self.cost[: self.n_struct] @ self.x[: self.n_struct])
        engine_status = {
            "feasible": OPTIMAL,  # unreachable, kept for mapping completeness
            "optimal": OPTIMAL,
            "infeasible": INFEASIBLE,
            "unbounded": UNBOUNDED,
            "iteration_limit": ITERATION_LIMIT,
        }[status]
        return EngineResult(engine_status, x_struct, objective, self._iter)

    def _cold_start(self):
        self.basis = np.where(self.slack_of_row >= 0, self.slack_of_row, self.art_of_row)
        self.vstat = np.full(self.N, AT_LOWER, dtype=np.int8)
        lo_inf = ~np.isfinite(self.lo)
        hi_fin = np.isfinite(self.hi)
        self.vstat[lo_inf & hi_fin] = AT_UPPER
        self.vstat[lo_inf & ~hi_fin] = FREE
        self.vstat[self.basis] = BASIC
        self.x = np.where(self.vstat == AT_UPPER, self.hi, np.where(self.vstat == FREE, 0.0, self.lo))
        self.x[~np.isfinite(self.x)] = 0.0
        self._refactorize()
        self._recompute_basics()

    def _snap_nonbasics(self):
        nonbasic = self.vstat != BASIC
        to_lower = nonbasic & (self.vstat == AT_LOWER)
        to_upper = nonbasic & (self.vstat == AT_UPPER)
        # bound changes may have invalidated a stored status
        bad_lower = to_lower & ~np.isfinite(self.lo)
        bad_upper = to_upper & ~np.isfinite(self.hi)
        self.vstat[bad_lower & np.isfinite(self.hi)] = AT_UPPER
        self.vstat[bad_lower & ~np.isfinite(self.hi)] = FREE
        self.vstat[bad_upper & np.isfinite(self.lo)] = AT_LOWER
        self.vstat[bad_upper & ~np.isfinite(self.lo)] = FREE
        at_lower = self.vstat == AT_LOWER
        at_upper = self.vstat == AT_UPPER
        self.x[at_lower] = self.lo[at_lower]
        self.x[at_upper] = self.hi[at_upper]
        free = self.vstat == FREE
        self.x[free] = 0.0

    # ------------------------------------------------------------------
    # iteration core
    # ------------------------------------------------------------------

    def _phase(self, max_iter: int, phase1: bool) -> str:
        while True:
            if self._iter >= max_iter:
                return "iteration_limit"

            if phase1:
                xb = self.x[self.basis]
                lob = self.lo[self.basis]
                hib = self.hi[self.basis]
                below = xb < lob - self.feas_tol
                above = xb > hib + self.feas_tol
                merit = float(np.sum(lob[below] - xb[below]) + np.sum(xb[above] - hib[above]))
                if merit <= 0.0:
                    return "feasible"
                cost = np.zeros(self.N)
                cost[self.basis[below]] = -1.0
                cost[self.basis[above]] = 1.0
            else:
                cost = self.cost
                merit = float(cost @ self.x)

            if merit < self._last_merit - _STALL_EPS * (1.0 + abs(merit)):
                self._last_merit = merit
                self._stall = 0
                self._bland = False
            else:
                self._stall += 1
                if self._stall > _STALL_LIMIT:
                    self._bland = True

            entering = self._price(cost)
            if entering is None:
                return "infeasible" if phase1 else "optimal"
            j, sigma = entering

            outcome = self._step(j, sigma, phase1)
            self._iter += 1
            if outcome == "unbounded":
                if phase1:
                    raise ArithmeticError("phase-1 ray: total infeasibility unbounded below")
                return "unbounded"

    def _price(self, cost: np.ndarray):
        y = self._btran(cost[self.basis])
        d = cost - self.AT @ y
        d[self.basis] = 0.0
        span = self.hi - self.lo
        fixed = span <= 1e-12
        elig_lo = (self.vstat == AT_LOWER) & ~fixed & (d < -self.opt_tol)
        elig_hi = (self.vstat == AT_UPPER) & ~fixed & (d > self.opt_tol)
        elig_fr = (self.vstat == FREE) & (np.abs(d) > self.opt_tol)
        any_mask = elig_lo | elig_hi | elig_fr
        if not any_mask.any():
            return None
        if self._bland:
            j = int(np.flatnonzero(any_mask)[0])
        else:
            score = np.where(any_mask, np.abs(d), 0.0)
            j = int(np.argmax(score))
        if elig_lo[j]:
            sigma = 1
        elif elig_hi[j]:
            sigma = -1
        else:
            sigma = 1 if d[j] < 0 else -1
        return j, sigma

    def _step(self, j: int, sigma: int, phase1: bool) -> str:
        z = self._ftran(self._column(j))
        delta = -sigma * z

        xb = self.x[self.basis]
        lob = self.lo[self.basis]
        hib = self.hi[self.basis]
        below = xb < lob - self.feas_tol
        above = xb > hib + self.feas_tol
        feas = ~below & ~above

        theta = np.full(self.m, np.inf)
        up = delta > _PIVOT_TOL
        down = delta < -_PIVOT_TOL

        mask = feas & up & np.isfinite(hib)
        theta[mask] = (hib[mask] - xb[mask]) / delta[mask]
        mask = below & up
        theta[mask] = (lob[mask] - xb[mask]) / delta[mask]
        mask = feas & down & np.isfinite(lob)
        theta[mask] = (lob[mask] - xb[mask]) / delta[mask]
        mask = above & down
        theta[mask] = (hib[mask] - xb[mask]) / delta[mask]
        np.maximum(theta, 0.0, out=theta)

        span_j = self.hi[j] - self.lo[j]
        theta_flip = span_j if np.isfinite(span_j) else np.inf

        theta_basis = float(theta.min()) if self.m else np.inf
        theta_star = min(theta_basis, theta_flip)
        if not np.isfinite(theta_star):
            return "unbounded"

        if theta_flip <= theta_basis + _RATIO_TOL:
            # bound flip: entering runs to its opposite bound, basis unchanged
            self.x[self.basis] = xb + delta * theta_flip
            if sigma > 0:
                self.x[j] = self.hi[j]
                self.vstat[j] = AT_UPPER
            else:
                self.x[j] = self.lo[j]
                self.vstat[j] = AT_LOWER
            return "flip"

        candidates = np.flatnonzero(theta <= theta_star + _RATIO_TOL)
        if self._bland:
            r = int(candidates[np.argmin(self.basis[candidates])])
        else:
            zc = np.abs(z[candidates])
            best = zc.max()
            stable = candidates[zc >= 0.5 * best]
            r = int(stable[np.argmin(self.basis[stable])])
        if abs(z[r]) < 1e-8 and self._etas:
            # suspicious pivot through accumulated updates: refactorize and retry
            self._refactorize()
            self._recompute_basics()
            return self._step(j, sigma, phase1)

        leaving = int(self.basis[r])
        self.x[self.basis] = xb + delta * theta_star
        self.x[j] = self.x[j] + sigma * theta_star
        if delta[r] > 0:
            hit_upper = not below[r]
        else:
            hit_upper = above[r]
        if hit_upper:
            self.x[leaving] = self.hi[leaving]
            self.vstat[leaving] = AT_UPPER
        else:
            self.x[leaving] = self.lo[leaving]
            self.vstat[leaving] = AT_LOWER

        self.basis[r] = j
        self.vstat[j] = BASIC
        self._etas.append((r, z, z[r]))
        if len(self._etas) > self.eta_cap:
            self._refactorize()
            self._recompute_basics()
        return "pivot"
