"""Weighted-sum optimization: assembly, gamma sweep, held-out evaluation.

One assembled problem serves the whole sweep: the constraint rows never
change with the cost/loss weighting ``gamma``, only the objective vector
does (and, for the infinity anchor, the safety-stock target bounds), so
every solve reuses the same branch-and-bound wrapper and warm simplex
state.

``gamma = 0`` prices loss at nothing and recovers the plan-for-the-best
anchor with no safety stock.  The ``"inf"`` sentinel is the
plan-for-the-worst anchor: stock targets for every loss-bearing commodity
are pinned at the full-coverage ceiling (enough for the longest admissible
delay), and the launched mass is minimized under that coverage.  Points in
between trace the Pareto front.  All points are re-evaluated on a held-out
scenario set for reporting; the in-sample optimizer terms are kept
alongside for monotonicity checks.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .config import GAMMA_INF, SolverLimits
from .logistics import (
    DemandSchedule,
    LogisticsBlock,
    build_logistics_block,
    demand_schedule_from_config,
)
from .milp import GAP_LIMIT, OPTIMAL, BranchAndBound, LinExpr, MilpProblem, SolveResult
from .network import TimeExpandedNetwork
from .rules import (
    BigMBounds,
    DecisionRuleSet,
    RuleBlock,
    big_m_bounds,
    build_rule_block,
    simulate_rule,
    verify_big_m,
)
from .scenarios import LaunchTimeline, ScenarioSet, TimeWindows, build_time_windows

__all__ = [
    "GammaSweepConfig",
    "CampaignProblem",
    "GammaSolution",
    "EvaluationReport",
    "ParetoPoint",
    "ScenarioInfeasible",
    "SolveFailed",
    "assemble",
    "build_campaign_problem",
    "evaluate_rules",
    "sweep_pareto",
    "mark_dominated",
]

logger = logging.getLogger(__name__)


class ScenarioInfeasible(RuntimeError):
    """A held-out scenario's flow model has no feasible plan."""

    def __init__(self, scenario_id: int, detail: str):
        self.scenario_id = scenario_id
        super().__init__(f"scenario {scenario_id}: {detail}")


class SolveFailed(RuntimeError):
    """The optimizer did not return a usable incumbent."""


@dataclass(frozen=True)
class GammaSweepConfig:
    """Sweep specification: weights plus operating/evaluation scenario sets."""

    gamma_values: tuple
    operating_set: ScenarioSet
    evaluation_set: ScenarioSet

    def __post_init__(self):
        finite = [g for g in self.gamma_values if g != GAMMA_INF]
        if any(g < 0 for g in finite):
            raise ValueError("gamma values must be nonnegative")
        if finite != sorted(finite):
            raise ValueError("finite gamma values must be increasing")
        if self.operating_set.n_launches != self.evaluation_set.n_launches:
            raise ValueError("operating and evaluation sets must share the launch count")


@dataclass
class GammaSolution:
    gamma: float | str
    result: SolveResult
    rules: dict[str, DecisionRuleSet]
    in_sample_cost: float
    in_sample_loss: float
    per_scenario: list[tuple[float, float]]  # (cost_k, loss_k) by scenario id

    @property
    def weighted_objective(self) -> float:
        if self.gamma == GAMMA_INF:
            return math.inf
        return self.in_sample_cost + float(self.gamma) * self.in_sample_loss


@dataclass
class CampaignProblem:
    """The assembled flow + rule MILP for one operating scenario set."""

    problem: MilpProblem
    network: TimeExpandedNetwork
    timeline: LaunchTimeline
    operating_set: ScenarioSet
    windows: TimeWindows
    demands: DemandSchedule
    rule_blocks: dict[str, RuleBlock]
    logistics: LogisticsBlock
    m_bounds: BigMBounds
    _bnb: BranchAndBound | None = None
    _loss_vector: np.ndarray | None = None

    @property
    def bnb(self) -> BranchAndBound:
        if self._bnb is None:
            self._bnb = BranchAndBound(self.problem)
        return self._bnb

    def expected_loss_expr(self) -> LinExpr:
        total = LinExpr()
        for block in self.rule_blocks.values():
            total = total.add(block.expected_loss)
        return total

    def loss_vector(self) -> tuple[np.ndarray, float]:
        expr = self.expected_loss_expr()
        vec = np.zeros(self.problem.n_cols)
        for col, coef in expr.terms.items():
            vec[col] += coef
        return vec, expr.const

    def infinity_bounds(self) -> dict[int, tuple[float, float]]:
        """Pin loss-bearing targets at full coverage, all others at zero."""
        overrides: dict[int, tuple[float, float]] = {}
        for block in self.rule_blocks.values():
            commodities = block.commodities
            for (l, e), col in block.target_columns.items():
                if commodities.psi[e] > 0.0:
                    ceiling = block.bounds.max_delay * commodities.eta[e]
                    overrides[col] = (ceiling, ceiling)
                else:
                    overrides[col] = (0.0, 0.0)
        return overrides

    def solve_gamma(self, gamma, limits: SolverLimits = SolverLimits()) -> GammaSolution:
        """Optimize one weighted-sum point (or the infinity anchor)."""
        base = self.problem.objective_array()
        bounds = None
        if gamma == GAMMA_INF or (isinstance(gamma, float) and math.isinf(gamma)):
            gamma = GAMMA_INF
            objective = base
            bounds = self.infinity_bounds()
        else:
            loss_vec, _ = self.loss_vector()
            objective = base + float(gamma) * loss_vec
        result = self.bnb.solve(
            objective=objective,
            bounds=bounds,
            gap_limit=limits.gap_limit,
            node_limit=limits.node_limit,
            time_limit=limits.time_limit,
        )
        if result.status not in (OPTIMAL, GAP_LIMIT):
            raise SolveFailed(f"gamma={gamma}: solver returned {result.status}")
        flagged = []
        for block in self.rule_blocks.values():
            flagged.extend(verify_big_m(self.problem, result.x, block))
        if flagged:
            # Any hit means a constant clipped a real quantity; callers
            # rebuild with doubled bounds (see sweep_pareto).
            logger.warning("big-M bound(s) binding at optimum: %s", flagged[:5])
            raise _BigMBinding(flagged)

        x = result.x
        rules = {s: b.targets_from_solution(x) for s, b in self.rule_blocks.items()}
        cost_in = self.logistics.expected_cost.resolve(x)
        loss_in = self.expected_loss_expr().resolve(x)
        per_scenario = []
        for scenario in self.operating_set:
            k = scenario.scenario_id
            cost_k = self.logistics.scenario_cost[k].resolve(x)
            loss_k = math.fsum(
                b.scenario_loss[k].resolve(x) for b in self.rule_blocks.values()
            )
            per_scenario.append((cost_k, loss_k))
        return GammaSolution(gamma, result, rules, cost_in, loss_in, per_scenario)


class _BigMBinding(RuntimeError):
    def __init__(self, rows):
        self.rows = rows
        super().__init__(f"{len(rows)} big-M rows binding")


def build_campaign_problem(
    network: TimeExpandedNetwork,
    operating_set: ScenarioSet,
    demands: DemandSchedule,
    timeline: LaunchTimeline,
    m_bounds: BigMBounds | None = None,
    big_m_overrides: dict[str, float] | None = None,
) -> CampaignProblem:
    """Assemble rule blocks (one per station) plus the flow block."""
    if m_bounds is None:
        m_bounds = big_m_bounds(
            network.commodities, float(network.horizon_end - network.mission_end),
            overrides=big_m_overrides,
        )
    problem = MilpProblem("campaign")
    windows = build_time_windows(timeline, network, operating_set)
    rule_blocks: dict[str, RuleBlock] = {}
    u_columns: dict = {}
    for station in network.station_nodes:
        block = build_rule_block(
            problem, station.node_id, operating_set, timeline, network.commodities, m_bounds
        )
        rule_blocks[station.node_id] = block
        u_columns.update(block.u_interface)
    logistics = build_logistics_block(
        problem, network, operating_set, windows, demands, u_columns
    )
    return CampaignProblem(
        problem=problem,
        network=network,
        timeline=timeline,
        operating_set=operating_set,
        windows=windows,
        demands=demands,
        rule_blocks=rule_blocks,
        logistics=logistics,
        m_bounds=m_bounds,
    )


def assemble(
    gamma,
    network: TimeExpandedNetwork,
    operating_set: ScenarioSet,
    demands: DemandSchedule,
    timeline: LaunchTimeline,
) -> tuple[CampaignProblem, np.ndarray, dict[int, tuple[float, float]] | None]:
    """Spec surface for one weighted-sum point.

    Returns the assembled campaign plus the objective vector and bound
    overrides that realize the requested gamma on it.
    """
    campaign = build_campaign_problem(network, operating_set, demands, timeline)
    base = campaign.problem.objective_array()
    if gamma == GAMMA_INF or (isinstance(gamma, float) and math.isinf(gamma)):
        return campaign, base, campaign.infinity_bounds()
    loss_vec, _ = campaign.loss_vector()
    return campaign, base + float(gamma) * loss_vec, None


@dataclass
class EvaluationReport:
    expected_cost: float
    expected_loss: float
    per_scenario: list[tuple[float, float]]  # (cost_k, loss_k) in scenario order

    def loss_standard_error(self) -> float:
        losses = np.array([z for _, z in self.per_scenario])
        if losses.size < 2:
            return 0.0
        return float(losses.std(ddof=1) / math.sqrt(losses.size))


def evaluate_rules(
    rules_by_station: dict[str, DecisionRuleSet],
    evaluation_set: ScenarioSet,
    network: TimeExpandedNetwork,
    demands: DemandSchedule,
    timeline: LaunchTimeline,
) -> EvaluationReport:
    """Score fixed rules on a held-out set.

    Per scenario the rule recursion fixes every top-up, the remaining flow
    problem is a plain LP (no binaries), and the loss comes straight from
    the simulated trace.  Raises ScenarioInfeasible (with the scenario id)
    if some scenario's flows cannot satisfy the demands plus top-ups.
    """
    from .milp import solve_lp
    from .scenarios import Scenario

    commodities = network.commodities
    per_scenario: list[tuple[float, float]] = []
    for scenario in evaluation_set:
        k = scenario.scenario_id
        realized = timeline.realized_times(scenario)
        u_columns: dict = {}
        loss_k = 0.0
        for station_id, rules in rules_by_station.items():
            trace = simulate_rule(rules, scenario, commodities)
            loss_k += trace.total_loss
            for l in range(2, rules.n_launches + 1):
                epoch = realized[l - 2]
                entries = u_columns.setdefault((k, station_id, epoch), [])
                for e in commodities.stockable_indices():
                    entries.append(
                        (commodities[e].id, LinExpr.constant(trace.supply[l - 1, e]))
                    )
        single = ScenarioSet(
            (Scenario(k, scenario.delays, 1.0),), seed=evaluation_set.seed,
            role=evaluation_set.role,
        )
        problem = MilpProblem(f"eval_k{k}")
        windows = build_time_windows(timeline, network, single)
        block = build_logistics_block(problem, network, single, windows, demands, u_columns)
        result = solve_lp(problem)
        if result.status != OPTIMAL:
            raise ScenarioInfeasible(k, f"flow model status {result.status}")
        cost_k = block.scenario_cost[k].resolve(result.x)
        per_scenario.append((cost_k, loss_k))

    weights = [s.probability for s in evaluation_set]
    expected_cost = math.fsum(w * c for w, (c, _) in zip(weights, per_scenario))
    expected_loss = math.fsum(w * z for w, (_, z) in zip(weights, per_scenario))
    return EvaluationReport(expected_cost, expected_loss, per_scenario)


@dataclass
class ParetoPoint:
    gamma: float | str
    rules: dict[str, DecisionRuleSet] | None
    expected_cost: float
    expected_loss: float
    per_scenario: list[tuple[float, float]]
    in_sample_cost: float
    in_sample_loss: float
    status: str
    dominated: bool = False
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def mark_dominated(points: list[ParetoPoint], tol: float = 1e-9) -> list[ParetoPoint]:
    """Flag points beaten on both objectives; idempotent by construction."""
    usable = [p for p in points if p.ok]
    for p in usable:
        p.dominated = any(
            q is not p
            and q.expected_cost <= p.expected_cost + tol
            and q.expected_loss <= p.expected_loss + tol
            and (
                q.expected_cost < p.expected_cost - tol
                or q.expected_loss < p.expected_loss - tol
            )
            for q in usable
        )
    return points


def sweep_pareto(
    sweep: GammaSweepConfig,
    network: TimeExpandedNetwork,
    demands: DemandSchedule,
    timeline: LaunchTimeline,
    limits: SolverLimits = SolverLimits(),
    big_m_overrides: dict[str, float] | None = None,
) -> list[ParetoPoint]:
    """Trace the front: solve each gamma in order, evaluate on the common
    held-out set, and flag dominated points.

    Per-gamma solver failures are recorded on their point and the sweep
    continues.  If a big-M constant ever binds, all constants double and the
    campaign is rebuilt (at most three times) before that gamma retries.
    """
    m_bounds = big_m_bounds(
        network.commodities, float(network.horizon_end - network.mission_end),
        overrides=big_m_overrides,
    )
    campaign = build_campaign_problem(
        network, sweep.operating_set, demands, timeline, m_bounds=m_bounds
    )
    points: list[ParetoPoint] = []
    for gamma in sweep.gamma_values:
        solution = None
        error = None
        for attempt in range(4):
            try:
                solution = campaign.solve_gamma(gamma, limits)
                break
            except _BigMBinding:
                if attempt == 3:
                    error = "big-M constants kept binding after doubling"
                    break
                m_bounds = m_bounds.doubled()
                logger.warning("doubling big-M constants (attempt %d)", attempt + 1)
                campaign = build_campaign_problem(
                    network, sweep.operating_set, demands, timeline, m_bounds=m_bounds
                )
            except SolveFailed as exc:
                error = str(exc)
                break
        if solution is None:
            points.append(
                ParetoPoint(
                    gamma=gamma, rules=None, expected_cost=math.nan,
                    expected_loss=math.nan, per_scenario=[], in_sample_cost=math.nan,
                    in_sample_loss=math.nan, status="Failed", error=error,
                )
            )
            continue
        report = evaluate_rules(
            solution.rules, sweep.evaluation_set, network, demands, timeline
        )
        points.append(
            ParetoPoint(
                gamma=gamma,
                rules=solution.rules,
                expected_cost=report.expected_cost,
                expected_loss=report.expected_loss,
                per_scenario=report.per_scenario,
                in_sample_cost=solution.in_sample_cost,
                in_sample_loss=solution.in_sample_loss,
                status=solution.result.status,
            )
        )
    return mark_dominated(points)
