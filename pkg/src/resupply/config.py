"""Campaign configuration: schema, validation, and resolved-config echo.

Configs are plain JSON.  ``load_config`` validates every cross-reference and
materializes defaults, so a resolved config echoed to disk reproduces the
exact same run when loaded again.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

__all__ = [
    "CampaignConfig",
    "CommoditySpec",
    "NodeSpec",
    "VehicleSpec",
    "LaunchSpec",
    "ReturnSpec",
    "DemandSpec",
    "DelayModel",
    "ScenarioCounts",
    "SolverLimits",
    "ParseError",
    "ValidationError",
    "ConfigInvalid",
    "load_config",
    "config_from_dict",
    "config_sha256",
]

GAMMA_INF = "inf"
DEFAULT_GAMMAS: tuple[float | str, ...] = (0, 100, 500, 1000, 2000, 5000, 10000, GAMMA_INF)


class ParseError(ValueError):
    """Config file is not readable JSON."""


class ValidationError(ValueError):
    """Config contents violate the schema; ``path`` points at the field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class ConfigInvalid(ValidationError):
    """A validated config still cannot produce a network (cross-field issue)."""


@dataclass(frozen=True)
class CommoditySpec:
    id: str
    unit: str = "kg"  # kg | count
    consumption_rate: float = 0.0  # kg/day consumed at the station
    shortage_penalty: float = 0.0  # operating days lost per day of shortage
    loss_weight: float = 1.0  # weighting in the loss objective


@dataclass(frozen=True)
class NodeSpec:
    id: str
    station: bool = False


@dataclass(frozen=True)
class VehicleSpec:
    name: str
    dry_mass: float
    propellant_capacity: float
    payload_capacity: float
    specific_impulse: float
    crew_capacity: int | None = None


@dataclass(frozen=True)
class LaunchSpec:
    day: int
    vehicle: str
    crewed: bool = False


@dataclass(frozen=True)
class ReturnSpec:
    day: int
    vehicle: str


@dataclass(frozen=True)
class DemandSpec:
    """One demand/supply pattern; negative amounts are demands.

    kind:
      launch_window  per-launch demand at the realized arrival day, sized by
                     the commodity consumption rate times the remaining days
                     of the launch's nominal supply window
      launch_fixed   fixed amount at each listed launch's realized departure
                     or arrival day
      fixed          fixed amount at a fixed day, identical in every scenario
    """

    kind: str
    commodity: str
    node: str
    amount: float = 0.0
    day: int | None = None
    launches: tuple[int, ...] = ()
    at: str = "arrival"  # departure | arrival (launch_fixed only)


@dataclass(frozen=True)
class DelayModel:
    rate: float = 0.05
    max_delay: int = 90
    per_launch_rates: tuple[float, ...] | None = None
    samples_csv: str | None = None


@dataclass(frozen=True)
class ScenarioCounts:
    count: int
    seed: int


@dataclass(frozen=True)
class SolverLimits:
    gap_limit: float = 1e-6
    node_limit: int = 200_000
    time_limit: float | None = None


@dataclass(frozen=True)
class TransitSpec:
    flight_time_days: int = 5
    outbound_delta_v_km_s: float = 3.53
    return_delta_v_km_s: float = 3.51


@dataclass(frozen=True)
class CampaignConfig:
    name: str
    commodities: tuple[CommoditySpec, ...]
    nodes: tuple[NodeSpec, ...]
    spacecraft: tuple[VehicleSpec, ...]
    launches: tuple[LaunchSpec, ...]
    demands: tuple[DemandSpec, ...]
    mission_end_day: int
    origin: str
    station: str
    transit: TransitSpec = TransitSpec()
    returns: tuple[ReturnSpec, ...] = ()
    crew_commodity: str | None = None
    consumables_commodity: str | None = None
    consumable_rate_per_crew_day: float = 0.0
    delay_model: DelayModel = DelayModel()
    operating: ScenarioCounts = ScenarioCounts(count=8, seed=101)
    evaluation: ScenarioCounts = ScenarioCounts(count=32, seed=202)
    gammas: tuple[float | str, ...] = DEFAULT_GAMMAS
    solver: SolverLimits = SolverLimits()
    earth_supply_multiplier: float = 10.0
    station_propellant_storage: bool = True
    big_m_overrides: dict[str, float] = field(default_factory=dict)

    def commodity(self, commodity_id: str) -> CommoditySpec:
        for c in self.commodities:
            if c.id == commodity_id:
                return c
        raise KeyError(commodity_id)

    def vehicle(self, name: str) -> VehicleSpec:
        for v in self.spacecraft:
            if v.name == name:
                return v
        raise KeyError(name)

    @property
    def horizon_end(self) -> int:
        return self.mission_end_day + self.delay_model.max_delay

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def config_sha256(config: CampaignConfig) -> str:
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _req(data: dict, key: str, path: str) -> Any:
    if key not in data:
        raise ValidationError(f"{path}.{key}", "missing required field")
    return data[key]


def _num(value: Any, path: str, minimum: float | None = None, strict: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(path, f"expected a number, got {value!r}")
    v = float(value)
    if not math.isfinite(v):
        raise ValidationError(path, "must be finite")
    if minimum is not None and (v < minimum or (strict and v == minimum)):
        op = ">" if strict else ">="
        raise ValidationError(path, f"must be {op} {minimum}, got {v}")
    return v


def config_from_dict(data: dict[str, Any], name: str = "config") -> CampaignConfig:
    """Validate a raw dict and build an immutable CampaignConfig."""
    if not isinstance(data, dict):
        raise ValidationError("$", "top-level config must be a JSON object")

    commodities = []
    raw_comms = _req(data, "commodities", "$")
    if not raw_comms:
        raise ValidationError("$.commodities", "at least one commodity is required")
    for i, rc in enumerate(raw_comms):
        path = f"$.commodities[{i}]"
        unit = rc.get("unit", "kg")
        if unit not in ("kg", "count"):
            raise ValidationError(f"{path}.unit", f"must be kg|count, got {unit!r}")
        spec = CommoditySpec(
            id=str(_req(rc, "id", path)),
            unit=unit,
            consumption_rate=_num(rc.get("consumption_rate", 0.0), f"{path}.consumption_rate", 0.0),
            shortage_penalty=_num(rc.get("shortage_penalty", 0.0), f"{path}.shortage_penalty", 0.0),
            loss_weight=_num(rc.get("loss_weight", 1.0), f"{path}.loss_weight", 0.0),
        )
        if spec.shortage_penalty > 0.0 and spec.consumption_rate <= 0.0:
            raise ValidationError(
                f"{path}.shortage_penalty",
                "a commodity with a shortage penalty needs a positive consumption "
                "rate (shortage days divide by it)",
            )
        commodities.append(spec)
    ids = [c.id for c in commodities]
    if len(set(ids)) != len(ids):
        raise ValidationError("$.commodities", f"duplicate commodity ids in {ids}")

    nodes = []
    for i, rn in enumerate(_req(data, "nodes", "$")):
        nodes.append(NodeSpec(id=str(_req(rn, "id", f"$.nodes[{i}]")), station=bool(rn.get("station", False))))
    node_ids = [n.id for n in nodes]
    if len(set(node_ids)) != len(node_ids):
        raise ValidationError("$.nodes", f"duplicate node ids in {node_ids}")
    if not any(n.station for n in nodes):
        raise ValidationError("$.nodes", "at least one station node is required")

    vehicles = []
    for i, rv in enumerate(_req(data, "spacecraft", "$")):
        path = f"$.spacecraft[{i}]"
        crew_cap = rv.get("crew_capacity")
        vehicles.append(
            VehicleSpec(
                name=str(_req(rv, "name", path)),
                dry_mass=_num(_req(rv, "dry_mass", path), f"{path}.dry_mass", 0.0, strict=True),
                propellant_capacity=_num(
                    rv.get("propellant_capacity", 0.0), f"{path}.propellant_capacity", 0.0
                ),
                payload_capacity=_num(
                    _req(rv, "payload_capacity", path), f"{path}.payload_capacity", 0.0
                ),
                specific_impulse=_num(
                    _req(rv, "specific_impulse", path), f"{path}.specific_impulse", 0.0, strict=True
                ),
                crew_capacity=None if crew_cap is None else int(crew_cap),
            )
        )
    vehicle_names = [v.name for v in vehicles]

    launches = []
    raw_launches = _req(data, "launches", "$")
    if not raw_launches:
        raise ValidationError("$.launches", "at least one launch is required")
    for i, rl in enumerate(raw_launches):
        path = f"$.launches[{i}]"
        vehicle = str(_req(rl, "vehicle", path))
        if vehicle not in vehicle_names:
            raise ValidationError(f"{path}.vehicle", f"unknown vehicle {vehicle!r}")
        launches.append(
            LaunchSpec(day=int(_num(_req(rl, "day", path), f"{path}.day", 0.0)), vehicle=vehicle,
                       crewed=bool(rl.get("crewed", False)))
        )
    days = [l.day for l in launches]
    if days != sorted(days):
        raise ValidationError("$.launches", f"launch days must be nondecreasing, got {days}")

    returns = []
    for i, rr in enumerate(data.get("returns", ())):
        path = f"$.returns[{i}]"
        vehicle = str(_req(rr, "vehicle", path))
        if vehicle not in vehicle_names:
            raise ValidationError(f"{path}.vehicle", f"unknown vehicle {vehicle!r}")
        returns.append(ReturnSpec(day=int(_num(_req(rr, "day", path), f"{path}.day", 0.0)), vehicle=vehicle))

    mission = _req(data, "mission", "$")
    mission_end = int(_num(_req(mission, "end_day", "$.mission"), "$.mission.end_day", 1.0))
    origin = str(_req(mission, "origin", "$.mission"))
    station = str(_req(mission, "station", "$.mission"))
    for label, node_id in (("origin", origin), ("station", station)):
        if node_id not in node_ids:
            raise ValidationError(f"$.mission.{label}", f"unknown node {node_id!r}")
    station_spec = next(n for n in nodes if n.id == station)
    if not station_spec.station:
        raise ValidationError("$.mission.station", f"node {station!r} is not marked as a station")

    raw_transit = data.get("transit", {})
    transit = TransitSpec(
        flight_time_days=int(_num(raw_transit.get("flight_time_days", 5), "$.transit.flight_time_days", 0.0)),
        outbound_delta_v_km_s=_num(
            raw_transit.get("outbound_delta_v_km_s", 3.53), "$.transit.outbound_delta_v_km_s", 0.0
        ),
        return_delta_v_km_s=_num(
            raw_transit.get("return_delta_v_km_s", 3.51), "$.transit.return_delta_v_km_s", 0.0
        ),
    )

    demands = []
    for i, rd in enumerate(_req(data, "demands", "$")):
        path = f"$.demands[{i}]"
        kind = str(_req(rd, "kind", path))
        if kind not in ("launch_window", "launch_fixed", "fixed"):
            raise ValidationError(f"{path}.kind", f"unknown demand kind {kind!r}")
        commodity = str(_req(rd, "commodity", path))
        if commodity not in ids:
            raise ValidationError(f"{path}.commodity", f"unknown commodity {commodity!r}")
        node = str(_req(rd, "node", path))
        if node not in node_ids:
            raise ValidationError(f"{path}.node", f"unknown node {node!r}")
        at = str(rd.get("at", "arrival"))
        if at not in ("arrival", "departure"):
            raise ValidationError(f"{path}.at", f"must be arrival|departure, got {at!r}")
        spec = DemandSpec(
            kind=kind,
            commodity=commodity,
            node=node,
            amount=_num(rd.get("amount", 0.0), f"{path}.amount"),
            day=None if rd.get("day") is None else int(_num(rd["day"], f"{path}.day", 0.0)),
            launches=tuple(int(x) for x in rd.get("launches", ())),
            at=at,
        )
        if kind == "launch_window" and node != station:
            raise ValidationError(f"{path}.node", "launch_window demands must target the station")
        if kind == "fixed" and spec.day is None:
            raise ValidationError(f"{path}.day", "fixed demands need a day")
        if kind == "launch_fixed" and not spec.launches:
            raise ValidationError(f"{path}.launches", "launch_fixed demands need launch indices")
        for l in spec.launches:
            if not (0 <= l < len(launches)):
                raise ValidationError(f"{path}.launches", f"launch index {l} out of range")
        demands.append(spec)

    raw_delay = data.get("delay_model", {})
    per_launch = raw_delay.get("per_launch_rates")
    if per_launch is not None:
        if len(per_launch) != len(launches):
            raise ValidationError(
                "$.delay_model.per_launch_rates",
                f"expected {len(launches)} rates, got {len(per_launch)}",
            )
        per_launch = tuple(
            _num(r, f"$.delay_model.per_launch_rates[{i}]", 0.0, strict=True)
            for i, r in enumerate(per_launch)
        )
    delay_model = DelayModel(
        rate=_num(raw_delay.get("rate", 0.05), "$.delay_model.rate", 0.0, strict=True),
        max_delay=int(_num(raw_delay.get("max_delay", 90), "$.delay_model.max_delay", 1.0)),
        per_launch_rates=per_launch,
        samples_csv=raw_delay.get("samples_csv"),
    )

    raw_scen = data.get("scenarios", {})
    op = raw_scen.get("operating", {})
    ev = raw_scen.get("evaluation", {})
    operating = ScenarioCounts(count=int(op.get("count", 8)), seed=int(op.get("seed", 101)))
    evaluation = ScenarioCounts(count=int(ev.get("count", 32)), seed=int(ev.get("seed", 202)))
    for label, sc in (("operating", operating), ("evaluation", evaluation)):
        if sc.count < 1:
            raise ValidationError(f"$.scenarios.{label}.count", "must be >= 1")

    gammas: list[float | str] = []
    for i, g in enumerate(data.get("gammas", DEFAULT_GAMMAS)):
        if g == GAMMA_INF:
            gammas.append(GAMMA_INF)
        else:
            gammas.append(_num(g, f"$.gammas[{i}]", 0.0))
    finite = [g for g in gammas if g != GAMMA_INF]
    if finite != sorted(finite):
        raise ValidationError("$.gammas", "finite gamma values must be increasing")

    raw_solver = data.get("solver", {})
    solver = SolverLimits(
        gap_limit=_num(raw_solver.get("gap_limit", 1e-6), "$.solver.gap_limit", 0.0),
        node_limit=int(raw_solver.get("node_limit", 200_000)),
        time_limit=raw_solver.get("time_limit"),
    )

    crew_commodity = data.get("crew_commodity")
    if crew_commodity is not None and crew_commodity not in ids:
        raise ValidationError("$.crew_commodity", f"unknown commodity {crew_commodity!r}")
    consumables = data.get("consumables_commodity")
    if consumables is not None and consumables not in ids:
        raise ValidationError("$.consumables_commodity", f"unknown commodity {consumables!r}")

    config = CampaignConfig(
        name=str(data.get("name", name)),
        commodities=tuple(commodities),
        nodes=tuple(nodes),
        spacecraft=tuple(vehicles),
        launches=tuple(launches),
        demands=tuple(demands),
        mission_end_day=mission_end,
        origin=origin,
        station=station,
        transit=transit,
        returns=tuple(returns),
        crew_commodity=crew_commodity,
        consumables_commodity=consumables,
        consumable_rate_per_crew_day=_num(
            data.get("consumable_rate_per_crew_day", 0.0), "$.consumable_rate_per_crew_day", 0.0
        ),
        delay_model=delay_model,
        operating=operating,
        evaluation=evaluation,
        gammas=tuple(gammas),
        solver=solver,
        earth_supply_multiplier=_num(
            data.get("earth_supply_multiplier", 10.0), "$.earth_supply_multiplier", 1.0
        ),
        station_propellant_storage=bool(data.get("station_propellant_storage", True)),
        big_m_overrides=dict(data.get("big_m_overrides", {})),
    )

    last_launch = config.launches[-1].day
    if mission_end <= last_launch:
        raise ValidationError("$.mission.end_day", f"must exceed the last launch day {last_launch}")
    for i, rs in enumerate(config.returns):
        if rs.day + config.transit.flight_time_days > config.horizon_end:
            raise ValidationError(f"$.returns[{i}].day", "return arrival falls outside the horizon")
    for i, d in enumerate(config.demands):
        if d.kind == "fixed" and not (0 <= d.day <= config.horizon_end):
            raise ValidationError(f"$.demands[{i}].day", f"day {d.day} outside [0, {config.horizon_end}]")
    if any(l.crewed for l in config.launches):
        if config.crew_commodity is None:
            raise ValidationError("$.crew_commodity", "crewed launches need a crew commodity")
    return config


def load_config(path) -> CampaignConfig:
    """Load, parse, and validate a campaign config file."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return config_from_dict(data, name=Path(path).stem)


def write_resolved_config(config: CampaignConfig, path) -> None:
    Path(path).write_text(config.to_json() + "\n")
