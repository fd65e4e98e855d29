"""Commodities, vehicles, and the time-expanded logistics network.

The network is kept route-level: launch arcs (one per scheduled launch),
return arcs (one per scheduled return flight), and a holdover self-loop per
node.  Time instantiation happens when the flow model is built, driven by
the per-scenario windows, so the static network is scenario-independent.

Commodity transformations across an arc are encoded by a matrix Q with
``arriving = Q @ departing``: payload rides through unchanged, propellant is
debited by the rocket-equation burn for the whole arriving stack, and crew
deplete consumables at a fixed per-person daily rate over the flight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .config import CampaignConfig, ConfigInvalid
from .config import VehicleSpec as SpacecraftSpec

__all__ = [
    "G0",
    "Commodity",
    "CommodityList",
    "CommodityVector",
    "SpacecraftSpec",
    "Node",
    "Arc",
    "TimeExpandedNetwork",
    "InfeasibleBurn",
    "MissingCommodity",
    "mass_ratio",
    "build_transformation_matrix",
    "build_concurrency_matrix",
    "build_network",
]

G0 = 9.80665  # m/s^2, standard gravity used in the rocket equation

PROPELLANT_ID = "propellant"


class InfeasibleBurn(ValueError):
    """The arc's propellant requirement exceeds the vehicle tank at full load."""


class MissingCommodity(KeyError):
    """A transformation references a commodity absent from the list."""


@dataclass(frozen=True)
class Commodity:
    """One commodity slot: cargo, crew, propellant, or a vehicle-count slot."""

    id: str
    unit: str  # kg | count
    consumption_rate: float = 0.0
    shortage_penalty: float = 0.0
    loss_weight: float = 1.0
    kind: str = "cargo"  # cargo | crew | propellant | vehicle
    mass_per_unit: float = 1.0  # kg per flow unit (0 for crew, dry mass for vehicles)
    vehicle_name: str | None = None


class CommodityList:
    """Ordered commodity list; order fixes the vector index 0..eps-1."""

    def __init__(self, entries: Sequence[Commodity]):
        ids = [c.id for c in entries]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate commodity ids: {ids}")
        self.entries: tuple[Commodity, ...] = tuple(entries)
        self._index: dict[str, int] = {c.id: i for i, c in enumerate(self.entries)}

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i: int) -> Commodity:
        return self.entries[i]

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self.entries)

    def index(self, commodity_id: str) -> int:
        try:
            return self._index[commodity_id]
        except KeyError:
            raise MissingCommodity(commodity_id) from None

    def get(self, commodity_id: str) -> Commodity:
        return self.entries[self.index(commodity_id)]

    def __contains__(self, commodity_id: str) -> bool:
        return commodity_id in self._index

    def array(self, attr: str) -> np.ndarray:
        return np.array([getattr(c, attr) for c in self.entries], dtype=float)

    @property
    def eta(self) -> np.ndarray:
        return self.array("consumption_rate")

    @property
    def psi(self) -> np.ndarray:
        return self.array("shortage_penalty")

    @property
    def loss_weight(self) -> np.ndarray:
        return self.array("loss_weight")

    @property
    def mass_per_unit(self) -> np.ndarray:
        return self.array("mass_per_unit")

    def payload_indices(self) -> list[int]:
        """Cargo commodity slots that count against payload capacity."""
        return [i for i, c in enumerate(self.entries) if c.kind == "cargo" and c.unit == "kg"]

    def stockable_indices(self) -> list[int]:
        """Commodities that can be held as safety stock (consumed at a rate)."""
        return [i for i, c in enumerate(self.entries) if c.consumption_rate > 0.0]


@dataclass(frozen=True)
class CommodityVector:
    """A length-eps vector in the owning commodity list's order."""

    commodities: CommodityList
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.commodities),):
            raise ValueError(
                f"expected vector of length {len(self.commodities)}, got shape {values.shape}"
            )
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, commodities: CommodityList) -> "CommodityVector":
        return cls(commodities, np.zeros(len(commodities)))

    @classmethod
    def from_mapping(cls, commodities: CommodityList, data: Mapping[str, float]) -> "CommodityVector":
        values = np.zeros(len(commodities))
        for commodity_id, value in data.items():
            values[commodities.index(commodity_id)] = float(value)
        return cls(commodities, values)

    def to_mapping(self, skip_zero: bool = True) -> dict[str, float]:
        out: dict[str, float] = {}
        for c, v in zip(self.commodities, self.values):
            if not skip_zero or v != 0.0:
                out[c.id] = float(v)
        return out

    def __getitem__(self, commodity_id: str) -> float:
        return float(self.values[self.commodities.index(commodity_id)])


@dataclass(frozen=True)
class Node:
    node_id: str
    is_station: bool = False


@dataclass(frozen=True)
class Arc:
    """A transport route: launch, scheduled return, or per-node holdover."""

    key: str
    kind: str  # launch | return | holdover
    vehicle: SpacecraftSpec | None
    origin: str
    destination: str
    flight_time: int
    delta_v: float
    transformation: np.ndarray  # eps x eps, arriving = Q @ departing
    concurrency: np.ndarray  # theta x eps, feasible iff H @ x <= 0
    cost: np.ndarray  # eps, objective weight per unit shipped
    launch_index: int | None = None
    scheduled_day: int | None = None


def mass_ratio(delta_v_km_s: float, specific_impulse_s: float) -> float:
    """Rocket-equation ratio of departing to arriving stack mass."""
    if delta_v_km_s < 0.0:
        raise ValueError(f"delta_v must be nonnegative, got {delta_v_km_s}")
    if specific_impulse_s <= 0.0:
        raise ValueError(f"specific impulse must be positive, got {specific_impulse_s}")
    return math.exp(delta_v_km_s * 1000.0 / (G0 * specific_impulse_s))


def build_transformation_matrix(
    vehicle: SpacecraftSpec,
    delta_v: float,
    flight_time: float,
    commodities: CommodityList,
    crew_consumable_rate: float = 0.0,
) -> np.ndarray:
    """Arc transformation matrix Q with ``arriving = Q @ departing``.

    The propellant row implements the rocket equation exactly: with mass
    ratio ``phi = exp(dv / (g0 * Isp))``, an arriving stack of mass ``m``
    (dry + payload + residual propellant) burns ``(phi - 1) * m``.  Written
    against departing quantities this is linear:

        p_arrive = p_depart / phi - (1 - 1/phi) * (payload + dry mass)

    Crew deplete consumables at ``crew_consumable_rate`` kg per person-day
    over the flight.  Everything else rides through unchanged.

    Raises
    ------
    InfeasibleBurn
        A full-payload stack would need more propellant than the tank holds.
    MissingCommodity
        ``delta_v > 0`` but the list has no propellant commodity.
    """
    eps = len(commodities)
    q = np.eye(eps)

    if delta_v > 0.0:
        if PROPELLANT_ID not in commodities:
            raise MissingCommodity(PROPELLANT_ID)
        phi = mass_ratio(delta_v, vehicle.specific_impulse)
        burn_at_capacity = (phi - 1.0) * (vehicle.dry_mass + vehicle.payload_capacity)
        if burn_at_capacity > vehicle.propellant_capacity + 1e-9:
            raise InfeasibleBurn(
                f"{vehicle.name}: burning {burn_at_capacity:.1f} kg at full payload "
                f"exceeds the {vehicle.propellant_capacity:.1f} kg tank for "
                f"delta_v {delta_v} km/s"
            )
        p = commodities.index(PROPELLANT_ID)
        q[p, p] = 1.0 / phi
        sink = 1.0 - 1.0 / phi
        for i, c in enumerate(commodities):
            if i == p:
                continue
            if c.mass_per_unit > 0.0:
                q[p, i] -= sink * c.mass_per_unit

    if flight_time > 0.0 and crew_consumable_rate > 0.0:
        crew_idx = [i for i, c in enumerate(commodities) if c.kind == "crew"]
        cons_idx = [i for i, c in enumerate(commodities) if c.kind == "consumable"]
        for ci in cons_idx:
            for cr in crew_idx:
                q[ci, cr] -= crew_consumable_rate * flight_time
    return q


def build_concurrency_matrix(vehicle: SpacecraftSpec, commodities: CommodityList) -> np.ndarray:
    """Capacity couplings H: a flow x is carryable iff H @ x <= 0.

    Rows: total payload mass <= payload capacity per vehicle, propellant
    <= tank per vehicle, and (when the vehicle declares seats) crew count
    <= seats per vehicle.
    """
    eps = len(commodities)
    vehicle_col = None
    for i, c in enumerate(commodities):
        if c.kind == "vehicle" and c.vehicle_name == vehicle.name:
            vehicle_col = i
    if vehicle_col is None:
        raise MissingCommodity(f"vehicle slot for {vehicle.name}")

    rows = []
    payload_row = np.zeros(eps)
    for i in commodities.payload_indices():
        payload_row[i] = 1.0
    for i, c in enumerate(commodities):
        if c.kind == "consumable":
            payload_row[i] = 1.0
    payload_row[vehicle_col] = -vehicle.payload_capacity
    rows.append(payload_row)

    if PROPELLANT_ID in commodities:
        prop_row = np.zeros(eps)
        prop_row[commodities.index(PROPELLANT_ID)] = 1.0
        prop_row[vehicle_col] = -vehicle.propellant_capacity
        rows.append(prop_row)

    if vehicle.crew_capacity is not None:
        crew_idx = [i for i, c in enumerate(commodities) if c.kind == "crew"]
        if crew_idx:
            crew_row = np.zeros(eps)
            for i in crew_idx:
                crew_row[i] = 1.0
            crew_row[vehicle_col] = -float(vehicle.crew_capacity)
            rows.append(crew_row)

    return np.vstack(rows)


@dataclass(frozen=True)
class TimeExpandedNetwork:
    """Static network: commodities, nodes, routes, and the day horizon."""

    commodities: CommodityList
    nodes: tuple[Node, ...]
    arcs: tuple[Arc, ...]
    horizon_end: int
    mission_end: int
    origin: str
    station: str
    station_propellant_storage: bool = True

    @property
    def horizon(self) -> range:
        """Day grid 0 .. mission_end + max_delay inclusive."""
        return range(0, self.horizon_end + 1)

    @property
    def station_nodes(self) -> tuple[Node, ...]:
        return tuple(n for n in self.nodes if n.is_station)

    def node(self, node_id: str) -> Node:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise KeyError(node_id)

    def launch_arcs(self) -> tuple[Arc, ...]:
        return tuple(a for a in self.arcs if a.kind == "launch")

    def launch_arc(self, launch_index: int) -> Arc:
        for a in self.arcs:
            if a.kind == "launch" and a.launch_index == launch_index:
                return a
        raise KeyError(f"no launch arc with index {launch_index}")

    def holdover_arc(self, node_id: str) -> Arc:
        for a in self.arcs:
            if a.kind == "holdover" and a.origin == node_id:
                return a
        raise KeyError(f"no holdover arc at {node_id}")


def _assemble_commodities(config: CampaignConfig) -> CommodityList:
    entries: list[Commodity] = []
    needs_propellant = any(
        v.propellant_capacity > 0.0 for v in config.spacecraft
    ) and (config.transit.outbound_delta_v_km_s > 0.0 or config.transit.return_delta_v_km_s > 0.0)

    for spec in config.commodities:
        kind = "cargo"
        mass = 1.0 if spec.unit == "kg" else 0.0
        if spec.id == config.crew_commodity:
            kind = "crew"
            mass = 0.0
        elif spec.id == config.consumables_commodity:
            kind = "consumable"
        elif spec.id == PROPELLANT_ID:
            kind = "propellant"
        entries.append(
            Commodity(
                id=spec.id,
                unit=spec.unit,
                consumption_rate=spec.consumption_rate,
                shortage_penalty=spec.shortage_penalty,
                loss_weight=spec.loss_weight,
                kind=kind,
                mass_per_unit=mass,
            )
        )

    ids = {c.id for c in entries}
    if needs_propellant and PROPELLANT_ID not in ids:
        entries.append(
            Commodity(id=PROPELLANT_ID, unit="kg", kind="propellant", mass_per_unit=1.0)
        )
    used_vehicles = {l.vehicle for l in config.launches} | {r.vehicle for r in config.returns}
    for vehicle in config.spacecraft:
        if vehicle.name in used_vehicles:
            entries.append(
                Commodity(
                    id=f"vehicle_{vehicle.name}",
                    unit="count",
                    kind="vehicle",
                    mass_per_unit=vehicle.dry_mass,
                    vehicle_name=vehicle.name,
                )
            )
    return CommodityList(entries)


def build_network(config: CampaignConfig) -> TimeExpandedNetwork:
    """Assemble the static network from a validated campaign config.

    The horizon spans [0, mission_end + max_delay] so every realized launch
    (delayed by at most max_delay) still fits.  Launch arcs carry the IMLEO
    cost vector (each departing kilogram costs one); return and holdover
    arcs are free.
    """
    if not config.launches:
        raise ConfigInvalid("$.launches", "cannot build a network without launches")
    if config.mission_end_day <= 0:
        raise ConfigInvalid("$.mission.end_day", "mission end must be positive")

    commodities = _assemble_commodities(config)
    nodes = tuple(Node(n.id, n.station) for n in config.nodes)
    flight = config.transit.flight_time_days
    horizon_end = config.mission_end_day + config.delay_model.max_delay

    launch_cost = commodities.mass_per_unit.copy()
    free_cost = np.zeros(len(commodities))

    arcs: list[Arc] = []
    for l, launch in enumerate(config.launches):
        vehicle = config.vehicle(launch.vehicle)
        q = build_transformation_matrix(
            vehicle,
            config.transit.outbound_delta_v_km_s,
            flight,
            commodities,
            crew_consumable_rate=config.consumable_rate_per_crew_day,
        )
        arcs.append(
            Arc(
                key=f"launch{l}_{launch.vehicle}",
                kind="launch",
                vehicle=vehicle,
                origin=config.origin,
                destination=config.station,
                flight_time=flight,
                delta_v=config.transit.outbound_delta_v_km_s,
                transformation=q,
                concurrency=build_concurrency_matrix(vehicle, commodities),
                cost=launch_cost,
                launch_index=l,
            )
        )
    for r, ret in enumerate(config.returns):
        vehicle = config.vehicle(ret.vehicle)
        q = build_transformation_matrix(
            vehicle,
            config.transit.return_delta_v_km_s,
            flight,
            commodities,
            crew_consumable_rate=config.consumable_rate_per_crew_day,
        )
        arcs.append(
            Arc(
                key=f"return{r}_{ret.vehicle}",
                kind="return",
                vehicle=vehicle,
                origin=config.station,
                destination=config.origin,
                flight_time=flight,
                delta_v=config.transit.return_delta_v_km_s,
                transformation=q,
                concurrency=build_concurrency_matrix(vehicle, commodities),
                cost=free_cost,
                scheduled_day=ret.day,
            )
        )
    identity = np.eye(len(commodities))
    no_rows = np.zeros((0, len(commodities)))
    for node in nodes:
        arcs.append(
            Arc(
                key=f"hold_{node.node_id}",
                kind="holdover",
                vehicle=None,
                origin=node.node_id,
                destination=node.node_id,
                flight_time=1,
                delta_v=0.0,
                transformation=identity,
                concurrency=no_rows,
                cost=free_cost,
            )
        )

    return TimeExpandedNetwork(
        commodities=commodities,
        nodes=nodes,
        arcs=tuple(arcs),
        horizon_end=horizon_end,
        mission_end=config.mission_end_day,
        origin=config.origin,
        station=config.station,
        station_propellant_storage=config.station_propellant_storage,
    )
