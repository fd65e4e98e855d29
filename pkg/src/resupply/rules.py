"""Safety-stock decision rules: forward simulator and MILP linearization.

The rule for a station is "top the stock up to ``R_l`` kilograms on the
launch before launch ``l``".  After launch ``l-1`` lifts off (and its delay
is known), the leftover stock ``b`` determines the extra supply
``u = max(R_l - b, 0)`` added to that launch's manifest.  During launch
``l``'s delay the station runs on the available stock ``r = u + b``; days
not covered turn into weighted operating-time loss ``h``.

``simulate_rule`` evaluates that recursion exactly.  ``build_rule_block``
emits the equivalent mixed-integer linear rows, using indicator binaries
``alpha`` (stock ran out) and ``beta`` (no top-up needed) with
family-specific big-M constants.  Structurally determined pieces are folded
away instead of emitted: launch 1 has no stock by construction, so its loss
is a constant; a zero-delay launch leaves ``b = r`` with no indicators.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .milp import LinExpr, MilpProblem
from .network import CommodityList
from .scenarios import LaunchTimeline, Scenario, ScenarioSet

__all__ = [
    "DecisionRuleSet",
    "SimulationTrace",
    "BigMBounds",
    "RuleBlock",
    "ZeroRateShortage",
    "TimelineGap",
    "simulate_rule",
    "big_m_bounds",
    "build_rule_block",
    "verify_big_m",
]


class ZeroRateShortage(ValueError):
    """A commodity has a shortage penalty but no consumption rate."""


class TimelineGap(ValueError):
    """The timeline does not provide a launch day needed by the rule block."""


def _check_rates(commodities: CommodityList) -> None:
    for c in commodities:
        if c.shortage_penalty > 0.0 and c.consumption_rate <= 0.0:
            raise ZeroRateShortage(
                f"commodity {c.id!r} has shortage penalty {c.shortage_penalty} "
                "but zero consumption rate; shortage days are undefined"
            )


@dataclass(frozen=True)
class DecisionRuleSet:
    """Per-station safety-stock targets, launches 1..L (first row all zero)."""

    station: str
    commodities: CommodityList
    targets: np.ndarray  # shape (L, eps); row l-1 is R_l
    max_delay: float = 90.0

    def __post_init__(self):
        targets = np.asarray(self.targets, dtype=float)
        if targets.ndim != 2 or targets.shape[1] != len(self.commodities):
            raise ValueError(f"targets must be (launches, {len(self.commodities)})")
        if np.any(targets < -1e-12):
            raise ValueError("safety-stock targets must be nonnegative")
        if np.any(np.abs(targets[0]) > 1e-12):
            raise ValueError("no stock can precede the first launch: R_1 must be 0")
        ceiling = self.max_delay * self.commodities.eta
        if np.any(targets > ceiling[None, :] + 1e-6):
            raise ValueError(
                "targets exceed the full-coverage ceiling max_delay * consumption_rate"
            )
        object.__setattr__(self, "targets", targets)

    @property
    def n_launches(self) -> int:
        return self.targets.shape[0]

    @classmethod
    def zeros(cls, station: str, commodities: CommodityList, n_launches: int,
              max_delay: float = 90.0) -> "DecisionRuleSet":
        return cls(station, commodities, np.zeros((n_launches, len(commodities))), max_delay)

    def to_json(self) -> str:
        launches = []
        for l0 in range(1, self.n_launches):
            row = {
                c.id: float(v)
                for c, v in zip(self.commodities, self.targets[l0])
                if v != 0.0
            }
            launches.append({"l": l0 + 1, "R": row})
        return json.dumps({"station": self.station, "launches": launches},
                          indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str, commodities: CommodityList, n_launches: int,
                  max_delay: float = 90.0) -> "DecisionRuleSet":
        payload = json.loads(text)
        targets = np.zeros((n_launches, len(commodities)))
        for entry in payload["launches"]:
            l0 = int(entry["l"]) - 1
            if not (1 <= l0 < n_launches):
                raise ValueError(f"launch index {entry['l']} out of range")
            for commodity_id, value in entry["R"].items():
                targets[l0, commodities.index(commodity_id)] = float(value)
        return cls(payload["station"], commodities, targets, max_delay)


@dataclass
class SimulationTrace:
    """Exact rule dynamics for one scenario: all arrays are (L, eps)."""

    delays: np.ndarray
    supply: np.ndarray  # u: top-up launched on the previous launch
    available: np.ndarray  # r = u + previous leftover
    loss: np.ndarray  # h: weighted operating-time loss, days
    leftover: np.ndarray  # b: stock remaining after the delay
    stock_ran_out: np.ndarray  # alpha, 0/1
    no_topup_needed: np.ndarray  # beta, 0/1
    total_loss: float  # Z = sum of loss weighted by the commodity loss weights


def simulate_rule(
    rules: DecisionRuleSet, scenario: Scenario, commodities: CommodityList
) -> SimulationTrace:
    """Run the stock recursion for one scenario.

    For launch l (1-based): ``u_l = max(R_l - b_{l-1}, 0)`` (zero for l=1),
    ``r_l = u_l + b_{l-1}``, ``h_l = max((D_l - r_l/eta) * psi, 0)``,
    ``b_l = max(r_l - D_l * eta, 0)``, elementwise per commodity.
    """
    _check_rates(commodities)
    if len(scenario.delays) != rules.n_launches:
        raise ValueError(
            f"scenario has {len(scenario.delays)} delays, rules cover {rules.n_launches}"
        )
    eps = len(commodities)
    n = rules.n_launches
    eta = commodities.eta
    psi = commodities.psi
    weights = commodities.loss_weight
    consuming = eta > 0.0

    delays = np.asarray(scenario.delays, dtype=float)
    supply = np.zeros((n, eps))
    available = np.zeros((n, eps))
    loss = np.zeros((n, eps))
    leftover = np.zeros((n, eps))
    alpha = np.zeros((n, eps))
    beta = np.zeros((n, eps))

    b_prev = np.zeros(eps)
    for l0 in range(n):
        d = delays[l0]
        if l0 == 0:
            u = np.zeros(eps)
        else:
            u = np.maximum(rules.targets[l0] - b_prev, 0.0)
            beta[l0] = (b_prev > rules.targets[l0] + 1e-12).astype(float)
        r = u + b_prev
        shortage_days = np.zeros(eps)
        shortage_days[consuming] = d - r[consuming] / eta[consuming]
        loss[l0][consuming] = np.maximum(shortage_days[consuming] * psi[consuming], 0.0)
        alpha[l0][consuming] = (shortage_days[consuming] > 1e-12).astype(float)
        b = np.maximum(r - d * eta, 0.0)
        b[~consuming] = 0.0

        supply[l0] = u
        available[l0] = r
        leftover[l0] = b
        b_prev = b

    total = float(np.sum(loss @ weights))
    return SimulationTrace(
        delays=delays,
        supply=supply,
        available=available,
        loss=loss,
        leftover=leftover,
        stock_ran_out=alpha,
        no_topup_needed=beta,
        total_loss=total,
    )


@dataclass(frozen=True)
class BigMBounds:
    """Family-specific big-M constants, one entry per commodity.

    ``m_u`` bounds top-up/leftover magnitudes, ``m_h`` bounds weighted loss,
    ``m_day`` bounds shortage-day expressions.  Each strictly exceeds the
    largest value its constrained expression can take under the stock
    recursion (stock never exceeds the full-coverage ceiling).
    """

    max_delay: float
    m_u: np.ndarray
    m_h: np.ndarray
    m_day: np.ndarray

    def doubled(self) -> "BigMBounds":
        return BigMBounds(self.max_delay, self.m_u * 2.0, self.m_h * 2.0, self.m_day * 2.0)


def big_m_bounds(
    commodities: CommodityList,
    max_delay: float,
    overrides: dict[str, float] | None = None,
) -> BigMBounds:
    """Derive the per-commodity big-M families from rates and the delay cap.

    m_u = m_b = max_delay*eta + ceiling (ceiling = max_delay*eta),
    m_h = max_delay*psi, m_day = max_delay + m_u/eta.  Commodities without a
    consumption rate get zeros (they never enter a rule block).
    """
    eta = commodities.eta
    psi = commodities.psi
    ceiling = max_delay * eta
    m_u = max_delay * eta + ceiling
    m_h = max_delay * psi
    m_day = np.zeros(len(commodities))
    consuming = eta > 0.0
    m_day[consuming] = max_delay + m_u[consuming] / eta[consuming]
    if overrides:
        if "m_u" in overrides:
            m_u = np.where(consuming, float(overrides["m_u"]), 0.0)
        if "m_h" in overrides:
            m_h = np.where(psi > 0.0, float(overrides["m_h"]), 0.0)
        if "m_day" in overrides:
            m_day = np.where(consuming, float(overrides["m_day"]), 0.0)
    return BigMBounds(max_delay=max_delay, m_u=m_u, m_h=m_h, m_day=m_day)


@dataclass
class RuleBlock:
    """Metadata for one station's rule rows inside a shared problem.

    ``target_columns[(l, e)]`` maps 1-based launch index and commodity slot
    to the R column; the expression maps resolve any (scenario, launch,
    commodity) triple to its value in a solution vector, whether it was a
    real column or was folded to a constant/affine alias at build time.
    """

    station: str
    commodities: CommodityList
    n_launches: int
    bounds: BigMBounds
    target_columns: dict[tuple[int, int], int] = field(default_factory=dict)
    supply_exprs: dict[tuple[int, int, int], LinExpr] = field(default_factory=dict)
    loss_exprs: dict[tuple[int, int, int], LinExpr] = field(default_factory=dict)
    leftover_exprs: dict[tuple[int, int, int], LinExpr] = field(default_factory=dict)
    alpha_exprs: dict[tuple[int, int, int], LinExpr] = field(default_factory=dict)
    beta_exprs: dict[tuple[int, int, int], LinExpr] = field(default_factory=dict)
    scenario_loss: dict[int, LinExpr] = field(default_factory=dict)
    expected_loss: LinExpr = field(default_factory=LinExpr)
    u_interface: dict[tuple[int, str, int], list[tuple[str, LinExpr]]] = field(default_factory=dict)
    big_m_rows: list[tuple[int, int, float]] = field(default_factory=list)  # row, binary, relax value

    def targets_from_solution(self, x: np.ndarray) -> DecisionRuleSet:
        targets = np.zeros((self.n_launches, len(self.commodities)))
        for (l, e), col in self.target_columns.items():
            targets[l - 1, e] = max(0.0, float(x[col]))
        return DecisionRuleSet(self.station, self.commodities, targets, self.bounds.max_delay)

    def trace_values(self, scenario_id: int, x: np.ndarray) -> dict[str, np.ndarray]:
        """Resolve (u, h, b) for one scenario from a solution vector."""
        eps = len(self.commodities)
        out = {
            "supply": np.zeros((self.n_launches, eps)),
            "loss": np.zeros((self.n_launches, eps)),
            "leftover": np.zeros((self.n_launches, eps)),
        }
        table = {
            "supply": self.supply_exprs,
            "loss": self.loss_exprs,
            "leftover": self.leftover_exprs,
        }
        for name, exprs in table.items():
            for (k, l, e), expr in exprs.items():
                if k == scenario_id:
                    out[name][l - 1, e] = expr.resolve(x)
        return out


def build_rule_block(
    problem: MilpProblem,
    station: str,
    scenario_set: ScenarioSet,
    timeline: LaunchTimeline,
    commodities: CommodityList,
    bounds: BigMBounds,
) -> RuleBlock:
    """Emit one station's decision-rule columns and rows into ``problem``.

    Continuous columns: R (per launch >= 2, shared across scenarios), u, h,
    b; binary columns: alpha, beta.  The top-up expressions are exported per
    (scenario, station, launch-day) for the flow model's balance rows.
    """
    _check_rates(commodities)
    if scenario_set.n_launches != timeline.n_launches:
        raise TimelineGap(
            f"timeline has {timeline.n_launches} launches, scenarios have "
            f"{scenario_set.n_launches}"
        )
    n = timeline.n_launches
    eta = commodities.eta
    psi = commodities.psi
    weights = commodities.loss_weight
    stockable = commodities.stockable_indices()
    ceiling = bounds.max_delay * eta

    block = RuleBlock(station=station, commodities=commodities, n_launches=n, bounds=bounds)

    for l in range(2, n + 1):
        for e in stockable:
            name = f"R_{station}_l{l}_{commodities[e].id}"
            block.target_columns[(l, e)] = problem.add_column(name, lower=0.0, upper=ceiling[e])

    expected = LinExpr()
    for scenario in scenario_set:
        k = scenario.scenario_id
        zeta = timeline.realized_times(scenario)
        p = scenario.probability
        z_expr = LinExpr()
        b_prev: dict[int, LinExpr] = {e: LinExpr.constant(0.0) for e in stockable}

        for l in range(1, n + 1):
            d = float(scenario.delays[l - 1])
            tag = f"{station}_k{k}_l{l}"
            for e in stockable:
                cid = commodities[e].id
                prev = b_prev[e]

                if l == 1:
                    u_expr = LinExpr.constant(0.0)
                    beta_expr = LinExpr.constant(0.0)
                else:
                    r_col = block.target_columns[(l, e)]
                    if prev.is_constant and prev.const == 0.0:
                        # max(R - 0, 0) = R: the top-up is the target itself
                        u_expr = LinExpr.col(r_col)
                        beta_expr = LinExpr.constant(0.0)
                    else:
                        u_col = problem.add_column(f"u_{tag}_{cid}", lower=0.0, upper=ceiling[e])
                        beta_col = problem.add_column(f"beta_{tag}_{cid}", kind="binary")
                        u_expr = LinExpr.col(u_col)
                        beta_expr = LinExpr.col(beta_col)
                        m = bounds.m_u[e]
                        gap = u_expr.add(LinExpr.col(r_col), -1.0).add(prev)  # u - R + b_prev
                        problem.add_linear(f"topup_lb_{tag}_{cid}", gap, ">=", 0.0)
                        # implied by u = max(R - b_prev, 0): never top up past the target
                        problem.add_linear(
                            f"topup_cap_{tag}_{cid}",
                            u_expr.add(LinExpr.col(r_col), -1.0),
                            "<=",
                            0.0,
                        )
                        row = problem.add_linear(
                            f"topup_ub_{tag}_{cid}", gap.add_col(beta_col, -m), "<=", 0.0
                        )
                        block.big_m_rows.append((row, beta_col, 1.0))
                        row = problem.add_linear(
                            f"topup_off_{tag}_{cid}", u_expr.add_col(beta_col, m), "<=", m
                        )
                        block.big_m_rows.append((row, beta_col, 0.0))
                        surplus = prev.add(LinExpr.col(r_col), -1.0)  # b_prev - R
                        row = problem.add_linear(
                            f"surplus_lb_{tag}_{cid}", surplus.add_col(beta_col, -m), ">=", -m
                        )
                        block.big_m_rows.append((row, beta_col, 0.0))
                        row = problem.add_linear(
                            f"surplus_ub_{tag}_{cid}", surplus.add_col(beta_col, -m), "<=", 0.0
                        )
                        block.big_m_rows.append((row, beta_col, 1.0))

                r_expr = u_expr.add(prev)

                if not u_expr.is_constant:
                    epoch = zeta[l - 2]
                    block.u_interface.setdefault((k, station, epoch), []).append((cid, u_expr))

                needs_alpha = (not r_expr.is_constant) and d > 0.0
                if needs_alpha:
                    alpha_col = problem.add_column(f"alpha_{tag}_{cid}", kind="binary")
                    alpha_expr = LinExpr.col(alpha_col)
                    inv = 1.0 / eta[e]
                    m_day = bounds.m_day[e]
                    days = r_expr.scaled(inv)  # r / eta
                    row = problem.add_linear(
                        f"ranout_lb_{tag}_{cid}", days.add_col(alpha_col, m_day), "<=", m_day + d
                    )
                    block.big_m_rows.append((row, alpha_col, 0.0))
                    row = problem.add_linear(
                        f"ranout_ub_{tag}_{cid}", days.add_col(alpha_col, m_day), ">=", d
                    )
                    block.big_m_rows.append((row, alpha_col, 1.0))
                elif r_expr.is_constant:
                    short = d - (r_expr.const / eta[e] if eta[e] > 0 else 0.0)
                    alpha_expr = LinExpr.constant(1.0 if short > 1e-12 else 0.0)
                else:
                    alpha_expr = LinExpr.constant(0.0)  # d == 0: stock always suffices

                # loss h
                if psi[e] > 0.0:
                    if d == 0.0:
                        h_expr = LinExpr.constant(0.0)
                    elif r_expr.is_constant:
                        h_expr = LinExpr.constant(
                            max((d - r_expr.const / eta[e]) * psi[e], 0.0)
                        )
                    else:
                        h_col = problem.add_column(
                            f"loss_{tag}_{cid}", lower=0.0, upper=d * psi[e]
                        )
                        h_expr = LinExpr.col(h_col)
                        m_h = bounds.m_h[e]
                        scaled_days = r_expr.scaled(psi[e] / eta[e])  # (r/eta) * psi
                        problem.add_linear(
                            f"loss_lb_{tag}_{cid}", h_expr.add(scaled_days), ">=", d * psi[e]
                        )
                        row = problem.add_linear(
                            f"loss_ub_{tag}_{cid}",
                            h_expr.add(scaled_days).add(alpha_expr, m_h),
                            "<=",
                            m_h + d * psi[e],
                        )
                        if not alpha_expr.is_constant:
                            block.big_m_rows.append((row, next(iter(alpha_expr.terms)), 0.0))
                        row = problem.add_linear(
                            f"loss_off_{tag}_{cid}", h_expr.add(alpha_expr, -m_h), "<=", 0.0
                        )
                        if not alpha_expr.is_constant:
                            block.big_m_rows.append((row, next(iter(alpha_expr.terms)), 1.0))
                else:
                    h_expr = LinExpr.constant(0.0)

                # leftover b
                if r_expr.is_constant:
                    b_expr = LinExpr.constant(max(r_expr.const - d * eta[e], 0.0))
                elif d == 0.0:
                    b_expr = r_expr
                else:
                    b_col = problem.add_column(f"stock_{tag}_{cid}", lower=0.0, upper=ceiling[e])
                    b_expr = LinExpr.col(b_col)
                    m_b = bounds.m_u[e]
                    drained = b_expr.add(r_expr, -1.0)  # b - r
                    problem.add_linear(f"stock_lb_{tag}_{cid}", drained, ">=", -d * eta[e])
                    # implied by b = max(r - D*eta, 0): leftovers never exceed
                    # what was delivered plus carried
                    problem.add_linear(f"stock_cap_{tag}_{cid}", drained, "<=", 0.0)
                    row = problem.add_linear(
                        f"stock_ub_{tag}_{cid}", drained.add(alpha_expr, -m_b), "<=", -d * eta[e]
                    )
                    if not alpha_expr.is_constant:
                        block.big_m_rows.append((row, next(iter(alpha_expr.terms)), 1.0))
                    row = problem.add_linear(
                        f"stock_off_{tag}_{cid}", b_expr.add(alpha_expr, m_b), "<=", m_b
                    )
                    if not alpha_expr.is_constant:
                        block.big_m_rows.append((row, next(iter(alpha_expr.terms)), 0.0))

                block.supply_exprs[(k, l, e)] = u_expr
                block.loss_exprs[(k, l, e)] = h_expr
                block.leftover_exprs[(k, l, e)] = b_expr
                block.alpha_exprs[(k, l, e)] = alpha_expr
                block.beta_exprs[(k, l, e)] = beta_expr
                z_expr = z_expr.add(h_expr, weights[e])
                b_prev[e] = b_expr

        block.scenario_loss[k] = z_expr
        expected = expected.add(z_expr, p)

    block.expected_loss = expected
    return block


def verify_big_m(problem: MilpProblem, x: np.ndarray, block: RuleBlock,
                 tol: float = 1e-6) -> list[str]:
    """Names of big-M rows that are tight while their binary sits on the
    relaxing side: any hit means the M constant clipped a real value."""
    flagged = []
    for row_idx, binary_col, relax_value in block.big_m_rows:
        if abs(x[binary_col] - relax_value) > tol:
            continue
        row = problem.rows[row_idx]
        activity = sum(coef * x[idx] for idx, coef in row.coeffs)
        if abs(activity - row.rhs) <= tol:
            flagged.append(row.name)
    return flagged
