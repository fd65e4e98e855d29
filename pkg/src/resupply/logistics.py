"""Flow model: per-scenario mass balance, capacity couplings, and cost.

Every scenario gets its own copy of the commodity-flow network, instantiated
only on that scenario's event days (realized launch days, arrivals,
scheduled returns, fixed demand days).  Material waits between events on
free holdover arcs, so restricting columns to event days preserves the
optimum of the full one-day grid while keeping the reference solver at desk
scale.  Flows exist only where windows are open; there is no column at all
for a closed (scenario, arc, day) combination.

Balance rows follow the "outflow - transformed inflow <= demand - topup"
convention: demands are negative, supplies positive, and the decision-rule
top-up expressions enter on the left-hand side.  Because the mission clock
is fixed, a delayed launch supplies only the remainder of its nominal
supply window; the days lost before it arrives are charged to the
decision-rule block as operating-time loss, never to the flow model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import CampaignConfig
from .milp import LinExpr, MilpProblem, SolveResult, GAP_LIMIT, OPTIMAL
from .network import Arc, CommodityList, TimeExpandedNetwork
from .scenarios import LaunchTimeline, Scenario, ScenarioSet, TimeWindows

__all__ = [
    "DemandSchedule",
    "FlowIndex",
    "LogisticsBlock",
    "UnreservedInterface",
    "DanglingDemand",
    "StatusInvalid",
    "demand_schedule_from_config",
    "build_logistics_block",
    "extract_imleo",
]


class UnreservedInterface(ValueError):
    """A station launch epoch has no reserved top-up expressions."""


class DanglingDemand(ValueError):
    """A demand references a node/day that no flow can ever serve."""


class StatusInvalid(ValueError):
    """A solution with an unusable status was passed to an extractor."""


@dataclass(frozen=True)
class WindowDemandEntry:
    commodity: str
    node: str


@dataclass(frozen=True)
class LaunchFixedEntry:
    commodity: str
    node: str
    amount: float
    launches: tuple[int, ...]
    at: str  # departure | arrival


@dataclass(frozen=True)
class FixedEntry:
    commodity: str
    node: str
    day: int
    amount: float


@dataclass
class DemandSchedule:
    """Scenario-resolvable demands plus the finite origin supply pool."""

    network: TimeExpandedNetwork
    flight_time: int
    mission_end: int
    window_entries: list[WindowDemandEntry] = field(default_factory=list)
    launch_fixed: list[LaunchFixedEntry] = field(default_factory=list)
    fixed: list[FixedEntry] = field(default_factory=list)
    origin_supply: dict[str, float] = field(default_factory=dict)

    def nominal_arrivals(self, timeline: LaunchTimeline) -> list[int]:
        return [t + self.flight_time for t in timeline.nominal_times]

    def window_ends(self, timeline: LaunchTimeline) -> list[int]:
        """Nominal end of each launch's supply window (next arrival or mission end)."""
        arrivals = self.nominal_arrivals(timeline)
        return arrivals[1:] + [self.mission_end]

    def resolve(
        self, scenario: Scenario, timeline: LaunchTimeline
    ) -> dict[tuple[str, int, int], float]:
        """Aggregate (node, day, commodity-slot) -> signed amount for one scenario."""
        commodities = self.network.commodities
        out: dict[tuple[str, int, int], float] = {}

        def put(node: str, day: int, e: int, amount: float):
            if amount == 0.0:
                return
            if day < 0 or day > self.network.horizon_end:
                raise DanglingDemand(
                    f"demand for {commodities[e].id!r} at ({node}, day {day}) is "
                    f"outside the horizon [0, {self.network.horizon_end}]"
                )
            key = (node, day, e)
            out[key] = out.get(key, 0.0) + amount

        realized = timeline.realized_times(scenario)
        ends = self.window_ends(timeline)
        for entry in self.window_entries:
            e = commodities.index(entry.commodity)
            rate = commodities[e].consumption_rate
            for l0 in range(timeline.n_launches):
                arrival = realized[l0] + self.flight_time
                remaining = max(ends[l0] - arrival, 0)
                put(entry.node, arrival, e, -rate * remaining)
        for entry in self.launch_fixed:
            e = commodities.index(entry.commodity)
            for l0 in entry.launches:
                day = realized[l0] + (self.flight_time if entry.at == "arrival" else 0)
                put(entry.node, day, e, entry.amount)
        for entry in self.fixed:
            put(entry.node, entry.day, commodities.index(entry.commodity), entry.amount)
        for commodity_id, amount in self.origin_supply.items():
            put(self.network.origin, 0, commodities.index(commodity_id), amount)
        return out


def demand_schedule_from_config(
    config: CampaignConfig, network: TimeExpandedNetwork
) -> DemandSchedule:
    """Translate config demand specs and size the finite origin supply pool.

    The origin holds a large constant supply (a configurable multiple of the
    whole campaign's needs, stock headroom included) so the flow model stays
    bounded while never binding in a sane campaign.
    """
    commodities = network.commodities
    schedule = DemandSchedule(
        network=network,
        flight_time=config.transit.flight_time_days,
        mission_end=config.mission_end_day,
    )
    for spec in config.demands:
        if spec.kind == "launch_window":
            schedule.window_entries.append(WindowDemandEntry(spec.commodity, spec.node))
        elif spec.kind == "launch_fixed":
            schedule.launch_fixed.append(
                LaunchFixedEntry(spec.commodity, spec.node, spec.amount, spec.launches, spec.at)
            )
        else:
            schedule.fixed.append(FixedEntry(spec.commodity, spec.node, spec.day, spec.amount))

    n_events = len(config.launches) + len(config.returns)
    span = config.mission_end_day
    max_delay = config.delay_model.max_delay
    basis = np.zeros(len(commodities))
    for entry in schedule.window_entries:
        e = commodities.index(entry.commodity)
        basis[e] += commodities[e].consumption_rate * span
    for entry in schedule.launch_fixed:
        if entry.amount < 0.0:
            basis[commodities.index(entry.commodity)] += -entry.amount * len(entry.launches)
    for entry in schedule.fixed:
        if entry.amount < 0.0:
            basis[commodities.index(entry.commodity)] += -entry.amount
    for i, c in enumerate(commodities):
        # safety-stock headroom for every launch
        basis[i] += max_delay * c.consumption_rate * len(config.launches)
        if c.kind == "vehicle":
            basis[i] = n_events
        elif c.kind == "propellant":
            cap = max(v.propellant_capacity for v in config.spacecraft)
            basis[i] = n_events * cap
        elif c.kind == "crew":
            basis[i] = 0.0  # crew supplies are explicit schedule entries
    for i, c in enumerate(commodities):
        if basis[i] > 0.0:
            schedule.origin_supply[c.id] = config.earth_supply_multiplier * basis[i]
    return schedule


@dataclass
class FlowIndex:
    """Bijection between instantiated (scenario, arc, day, commodity) flows
    and problem columns; closed windows have no column at all."""

    columns: dict[tuple[int, str, int, int], int] = field(default_factory=dict)

    def column(self, scenario_id: int, arc_key: str, day: int, e: int) -> int:
        return self.columns[(scenario_id, arc_key, day, e)]

    def add(self, scenario_id: int, arc_key: str, day: int, e: int, col: int) -> None:
        key = (scenario_id, arc_key, day, e)
        if key in self.columns:
            raise ValueError(f"duplicate flow column for {key}")
        self.columns[key] = col


@dataclass
class LogisticsBlock:
    """Metadata for the flow side of an assembled problem."""

    network: TimeExpandedNetwork
    scenario_set: ScenarioSet
    flow_index: FlowIndex
    scenario_cost: dict[int, LinExpr]
    expected_cost: LinExpr


def _event_days(
    network: TimeExpandedNetwork,
    scenario: Scenario,
    timeline: LaunchTimeline,
    windows: TimeWindows,
    demands: dict[tuple[str, int, int], float],
    u_days: list[int],
) -> dict[str, list[int]]:
    """Days on which anything can happen at each node, per scenario."""
    days: dict[str, set[int]] = {n.node_id: set() for n in network.nodes}
    days[network.origin].add(0)
    k = scenario.scenario_id
    for arc in network.arcs:
        if arc.kind == "launch":
            day = windows.launch_day(k, arc.launch_index)
            days[arc.origin].add(day)
            days[arc.destination].add(day + arc.flight_time)
        elif arc.kind == "return":
            days[arc.origin].add(arc.scheduled_day)
            days[arc.destination].add(arc.scheduled_day + arc.flight_time)
    for (node, day, _e) in demands:
        days[node].add(day)
    for day in u_days:
        days[network.station].add(day)
    return {node: sorted(v) for node, v in days.items()}


def build_logistics_block(
    problem: MilpProblem,
    network: TimeExpandedNetwork,
    scenario_set: ScenarioSet,
    windows: TimeWindows,
    demands: DemandSchedule,
    u_columns: dict[tuple[int, str, int], list[tuple[str, LinExpr]]] | None = None,
) -> LogisticsBlock:
    """Emit flow columns, balance rows, and capacity rows into ``problem``.

    ``u_columns`` maps (scenario, station, launch-epoch day) to the
    decision-rule top-up expressions that must ride that launch; they are
    charged to the station balance row on the launch's arrival day.  Raises
    UnreservedInterface if a station launch epoch is missing from the map.
    """
    u_columns = u_columns or {}
    commodities = network.commodities
    eps = len(commodities)
    timeline = windows.timeline
    flight = {a.launch_index: a.flight_time for a in network.arcs if a.kind == "launch"}

    # Every launch from the second onward must have its top-up reserved.
    station = network.station
    for scenario in scenario_set:
        k = scenario.scenario_id
        realized = timeline.realized_times(scenario)
        for l in range(2, timeline.n_launches + 1):
            epoch = realized[l - 2]
            if (k, station, epoch) not in u_columns:
                raise UnreservedInterface(
                    f"no top-up expressions reserved for scenario {k}, station "
                    f"{station!r}, launch epoch day {epoch}"
                )

    flow_index = FlowIndex()
    scenario_cost: dict[int, LinExpr] = {}
    expected_cost = LinExpr()

    for scenario in scenario_set:
        k = scenario.scenario_id
        p = scenario.probability
        resolved = demands.resolve(scenario, timeline)
        u_arrival: dict[tuple[str, int, int], LinExpr] = {}
        u_days = []
        for (uk, unode, epoch), entries in u_columns.items():
            if uk != k:
                continue
            arrival = epoch + demands.flight_time
            u_days.append(arrival)
            for commodity_id, expr in entries:
                e = commodities.index(commodity_id)
                key = (unode, arrival, e)
                u_arrival[key] = u_arrival.get(key, LinExpr()).add(expr)
        events = _event_days(network, scenario, timeline, windows, resolved, u_days)

        # rows keyed (node, day, e) accumulate flow terms
        terms: dict[tuple[str, int, int], LinExpr] = {}

        def touch(node: str, day: int, e: int) -> LinExpr:
            key = (node, day, e)
            if key not in terms:
                terms[key] = LinExpr()
            return terms[key]

        cost_k = LinExpr()

        def instantiate(arc: Arc, day: int):
            nonlocal cost_k
            cols = []
            for e in range(eps):
                name = f"x_k{k}_{arc.key}_t{day}_{commodities[e].id}"
                col = problem.add_column(name, objective=p * arc.cost[e])
                flow_index.add(k, arc.key, day, e, col)
                cols.append(col)
                if arc.cost[e] != 0.0:
                    cost_k = cost_k.add_col(col, arc.cost[e])
                terms_out = touch(arc.origin, day, e)
                terms_out.terms[col] = terms_out.terms.get(col, 0.0) + 1.0
            arrival_day = day + arc.flight_time
            q = arc.transformation
            for e_to in range(eps):
                row_terms = None
                for e_from in range(eps):
                    coef = q[e_to, e_from]
                    if coef != 0.0:
                        if row_terms is None:
                            row_terms = touch(arc.destination, arrival_day, e_to)
                        col = cols[e_from]
                        row_terms.terms[col] = row_terms.terms.get(col, 0.0) - coef
            for theta in range(arc.concurrency.shape[0]):
                coeffs = [
                    (cols[e], arc.concurrency[theta, e])
                    for e in range(eps)
                    if arc.concurrency[theta, e] != 0.0
                ]
                problem.add_row(f"cap_k{k}_{arc.key}_t{day}_{theta}", coeffs, "<=", 0.0)

        for arc in network.arcs:
            if arc.kind == "launch":
                instantiate(arc, windows.launch_day(k, arc.launch_index))
            elif arc.kind == "return":
                instantiate(arc, arc.scheduled_day)

        hold_excluded = set()
        if not network.station_propellant_storage:
            for e in range(eps):
                if commodities[e].kind == "propellant":
                    hold_excluded.add((network.station, e))
        for node_id, node_days in events.items():
            arc = network.holdover_arc(node_id)
            for day, next_day in zip(node_days, node_days[1:]):
                for e in range(eps):
                    if (node_id, e) in hold_excluded:
                        continue
                    name = f"x_k{k}_{arc.key}_t{day}_d{next_day - day}_{commodities[e].id}"
                    col = problem.add_column(name)
                    flow_index.add(k, arc.key, day, e, col)
                    terms_out = touch(node_id, day, e)
                    terms_out.terms[col] = terms_out.terms.get(col, 0.0) + 1.0
                    terms_in = touch(node_id, next_day, e)
                    terms_in.terms[col] = terms_in.terms.get(col, 0.0) - 1.0

        for key, expr in u_arrival.items():
            node, day, e = key
            row = touch(node, day, e)
            terms[key] = row.add(expr)

        for key in sorted(set(terms) | set(resolved), key=lambda t: (t[0], t[1], t[2])):
            node, day, e = key
            rhs = resolved.get(key, 0.0)
            expr = terms.get(key)
            if expr is None or expr.is_constant:
                const = 0.0 if expr is None else expr.const
                if const > rhs + 1e-9:
                    raise DanglingDemand(
                        f"demand of {rhs} for {commodities[e].id!r} at ({node}, day "
                        f"{day}) in scenario {k} can never be served: no flow touches it"
                    )
                continue
            problem.add_linear(
                f"bal_k{k}_{node}_t{day}_{commodities[e].id}", expr, "<=", rhs
            )

        scenario_cost[k] = cost_k
        expected_cost = expected_cost.add(cost_k, p)

    return LogisticsBlock(
        network=network,
        scenario_set=scenario_set,
        flow_index=flow_index,
        scenario_cost=scenario_cost,
        expected_cost=expected_cost,
    )


def extract_imleo(
    solution: SolveResult, block: LogisticsBlock
) -> tuple[dict[int, float], float]:
    """Per-scenario launched mass J_k and the expectation over scenarios.

    Requires an Optimal or GapLimit solution (anything else has no usable
    incumbent).
    """
    if solution.status not in (OPTIMAL, GAP_LIMIT):
        raise StatusInvalid(f"cannot extract launched mass from a {solution.status} solution")
    x = solution.x
    per_scenario = {k: expr.resolve(x) for k, expr in block.scenario_cost.items()}
    expected = sum(
        s.probability * per_scenario[s.scenario_id] for s in block.scenario_set
    )
    return per_scenario, float(expected)
