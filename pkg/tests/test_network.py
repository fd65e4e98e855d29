"""Network construction: transformation matrices, capacity rows, topology."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resupply.config import ConfigInvalid, ValidationError, config_from_dict
from resupply.fixtures import load_fixture
from resupply.network import (
    G0,
    CommodityList,
    Commodity,
    CommodityVector,
    InfeasibleBurn,
    MissingCommodity,
    build_concurrency_matrix,
    build_network,
    build_transformation_matrix,
    mass_ratio,
)

CENTAUR_ISP = 450.5


def centaur(payload=14000.0, crew_capacity=None):
    from resupply.config import VehicleSpec

    return VehicleSpec(
        name="centaur",
        dry_mass=2316.0,
        propellant_capacity=20830.0,
        payload_capacity=payload,
        specific_impulse=CENTAUR_ISP,
        crew_capacity=crew_capacity,
    )


def commodity_list(with_crew=False):
    entries = [
        Commodity("science", "kg", 19.0, 0.8, 1.0, "cargo", 1.0),
        Commodity("propellant", "kg", 0.0, 0.0, 1.0, "propellant", 1.0),
        Commodity("vehicle_centaur", "count", 0.0, 0.0, 1.0, "vehicle", 2316.0, "centaur"),
    ]
    if with_crew:
        entries.insert(1, Commodity("crew", "count", 0.0, 0.0, 0.0, "crew", 0.0))
        entries.insert(2, Commodity("consumables", "kg", 17.1, 0.0, 1.0, "consumable", 1.0))
    return CommodityList(entries)


class TestMassRatio:
    def test_outbound_leg_frozen_value(self):
        # direct rocket-equation evaluation: exp(3530 / (450.5 * 9.80665))
        expected = math.exp(3530.0 / (CENTAUR_ISP * G0))
        assert mass_ratio(3.53, CENTAUR_ISP) == pytest.approx(expected, rel=1e-12)
        assert mass_ratio(3.53, CENTAUR_ISP) == pytest.approx(2.2234, abs=2e-4)

    def test_return_leg_frozen_value(self):
        assert mass_ratio(3.51, CENTAUR_ISP) == pytest.approx(2.2134, abs=2e-4)

    @given(
        st.floats(min_value=0.1, max_value=10.0),
        st.floats(min_value=0.01, max_value=9.9),
        st.floats(min_value=150.0, max_value=500.0),
    )
    @settings(max_examples=100, deadline=None)
    def test_monotone_in_delta_v_and_isp(self, dv, bump, isp):
        assert mass_ratio(dv + bump, isp) > mass_ratio(dv, isp)
        assert mass_ratio(dv, isp + 50.0) < mass_ratio(dv, isp)


class TestTransformationMatrix:
    def test_zero_delta_v_identity(self):
        comms = commodity_list()
        q = build_transformation_matrix(centaur(), 0.0, 5.0, comms)
        assert np.array_equal(q, np.eye(len(comms)))

    def test_zero_delta_v_with_crew_depletes_consumables_only(self):
        comms = commodity_list(with_crew=True)
        q = build_transformation_matrix(centaur(), 0.0, 5.0, comms, crew_consumable_rate=4.275)
        expected = np.eye(len(comms))
        expected[comms.index("consumables"), comms.index("crew")] = -4.275 * 5.0
        assert np.allclose(q, expected)

    def test_rocket_equation_satisfied_exactly(self):
        comms = commodity_list()
        q = build_transformation_matrix(centaur(), 3.53, 5.0, comms)
        phi = mass_ratio(3.53, CENTAUR_ISP)
        departing = CommodityVector.from_mapping(
            comms, {"science": 4000.0, "propellant": 18000.0, "vehicle_centaur": 1.0}
        ).values
        arriving = q @ departing
        p_idx = comms.index("propellant")
        burned = departing[p_idx] - arriving[p_idx]
        arriving_mass = 4000.0 + 2316.0 * 1.0 + arriving[p_idx]
        assert burned == pytest.approx((phi - 1.0) * arriving_mass, rel=1e-12)
        # delivering 1 kg of payload with an empty arrival tank takes
        # phi - 1 (about 1.2234) kg of departing propellant
        stack = np.zeros(len(comms))
        stack[comms.index("science")] = 1.0
        stack[p_idx] = phi - 1.0
        assert (q @ stack)[p_idx] == pytest.approx(0.0, abs=1e-12)
        assert phi - 1.0 == pytest.approx(1.2234, abs=2e-4)

    def test_payload_rides_through(self):
        comms = commodity_list()
        q = build_transformation_matrix(centaur(), 3.53, 5.0, comms)
        s = comms.index("science")
        assert q[s, s] == 1.0

    def test_infeasible_burn(self):
        comms = commodity_list()
        with pytest.raises(InfeasibleBurn):
            build_transformation_matrix(centaur(payload=100000.0), 3.53, 5.0, comms)

    def test_missing_propellant(self):
        comms = CommodityList([Commodity("science", "kg", 19.0, 0.8)])
        with pytest.raises(MissingCommodity):
            build_transformation_matrix(centaur(), 3.53, 5.0, comms)


class TestConcurrencyMatrix:
    def test_boundary_load_is_tight(self):
        comms = commodity_list()
        h = build_concurrency_matrix(centaur(), comms)
        x = CommodityVector.from_mapping(
            comms,
            {"science": 14000.0, "propellant": 20830.0, "vehicle_centaur": 1.0},
        ).values
        assert np.allclose(h @ x, 0.0)

    def test_payload_without_carrier_infeasible(self):
        comms = commodity_list()
        h = build_concurrency_matrix(centaur(), comms)
        x = CommodityVector.from_mapping(comms, {"science": 1.0}).values
        assert (h @ x).max() > 0.0

    def test_two_vehicles_carry_one_and_a_half_loads(self):
        comms = commodity_list()
        h = build_concurrency_matrix(centaur(), comms)
        x = CommodityVector.from_mapping(
            comms, {"science": 1.5 * 14000.0, "vehicle_centaur": 2.0}
        ).values
        assert 1.5 * 14000.0 <= 2.0 * 14000.0
        assert (h @ x).max() <= 0.0

    def test_crew_capacity_row(self):
        comms = commodity_list(with_crew=True)
        h = build_concurrency_matrix(centaur(crew_capacity=4), comms)
        seated = CommodityVector.from_mapping(
            comms, {"crew": 4.0, "vehicle_centaur": 1.0}
        ).values
        overfull = CommodityVector.from_mapping(
            comms, {"crew": 5.0, "vehicle_centaur": 1.0}
        ).values
        assert (h @ seated).max() <= 0.0
        assert (h @ overfull).max() > 0.0

    @given(st.floats(min_value=0.0, max_value=50.0))
    @settings(max_examples=50, deadline=None)
    def test_positive_homogeneity(self, lam):
        comms = commodity_list()
        h = build_concurrency_matrix(centaur(), comms)
        x = CommodityVector.from_mapping(
            comms, {"science": 9000.0, "propellant": 15000.0, "vehicle_centaur": 1.0}
        ).values
        assert (h @ x).max() <= 0.0
        assert (h @ (lam * x)).max() <= 1e-9 * max(1.0, lam)


class TestBuildNetwork:
    def test_fig1_toy_three_launch_families(self):
        network = build_network(load_fixture("fig1_toy"))
        launches = network.launch_arcs()
        assert len(launches) == 3
        assert [a.launch_index for a in launches] == [0, 1, 2]
        assert network.horizon_end == 300 + 90

    def test_horizon_day_count(self):
        config = config_from_dict(
            {
                "commodities": [{"id": "cargo", "unit": "kg", "consumption_rate": 1.0}],
                "nodes": [{"id": "earth"}, {"id": "station", "station": True}],
                "spacecraft": [
                    {"name": "v", "dry_mass": 1.0, "payload_capacity": 1e6,
                     "specific_impulse": 300.0}
                ],
                "launches": [{"day": d, "vehicle": "v"} for d in (0, 91, 182, 273)],
                "transit": {"flight_time_days": 0, "outbound_delta_v_km_s": 0.0},
                "mission": {"end_day": 365, "origin": "earth", "station": "station"},
                "demands": [
                    {"kind": "launch_window", "commodity": "cargo", "node": "station"}
                ],
            }
        )
        network = build_network(config)
        assert len(network.horizon) == 456  # 365 + 90 + day zero

    def test_empty_launches_rejected(self):
        import dataclasses

        config = load_fixture("fig1_toy")
        broken = dataclasses.replace(config, launches=())
        with pytest.raises(ConfigInvalid):
            build_network(broken)

    def test_deterministic_arc_ordering(self):
        a = build_network(load_fixture("station_resupply"))
        b = build_network(load_fixture("station_resupply"))
        assert [arc.key for arc in a.arcs] == [arc.key for arc in b.arcs]

    def test_station_resupply_commodities(self):
        network = build_network(load_fixture("station_resupply"))
        ids = network.commodities.ids
        assert "propellant" in ids and "vehicle_centaur" in ids
        assert network.commodities.get("crew").kind == "crew"
        assert network.commodities.get("consumables").kind == "consumable"
        launch = network.launch_arc(0)
        # launch cost counts every departing kilogram: cargo at unit weight,
        # vehicles at dry mass, crew counts are massless
        assert launch.cost[network.commodities.index("science")] == 1.0
        assert launch.cost[network.commodities.index("vehicle_centaur")] == 2316.0
        assert launch.cost[network.commodities.index("crew")] == 0.0
        ret = [a for a in network.arcs if a.kind == "return"][0]
        assert np.all(ret.cost == 0.0)

    def test_negative_rate_rejected_at_validation(self):
        with pytest.raises(ValidationError):
            config_from_dict(
                {
                    "commodities": [{"id": "x", "consumption_rate": -1.0}],
                    "nodes": [{"id": "earth"}, {"id": "s", "station": True}],
                    "spacecraft": [],
                    "launches": [],
                    "demands": [],
                    "mission": {"end_day": 10, "origin": "earth", "station": "s"},
                }
            )
