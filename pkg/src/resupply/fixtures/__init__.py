"""Bundled campaign fixtures and generators for horizon studies."""

from __future__ import annotations

import json
from importlib import resources

from ..config import CampaignConfig, config_from_dict

__all__ = ["fixture_names", "load_fixture", "fixture_text", "cargo_only_config"]

_PACKAGE = "resupply.fixtures"


def fixture_names() -> list[str]:
    files = resources.files(_PACKAGE)
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def fixture_text(name: str) -> str:
    return resources.files(_PACKAGE).joinpath(f"{name}.json").read_text()


def load_fixture(name: str) -> CampaignConfig:
    return config_from_dict(json.loads(fixture_text(name)), name=name)


def cargo_only_config(
    n_launches: int,
    spacing: int = 91,
    n_operating: int = 8,
    n_evaluation: int = 32,
    operating_seed: int = 101,
    evaluation_seed: int = 202,
    gammas=(0, 100, 500, 1000, 2000, 5000, 10000, "inf"),
) -> CampaignConfig:
    """Cargo campaign with ``n_launches`` evenly spaced resupply flights.

    Same vehicle, rates, and transfer geometry as the bundled desk fixture;
    only the campaign length varies, which is what the launch-count
    sensitivity studies need.
    """
    if n_launches < 2:
        raise ValueError("need at least 2 launches for a meaningful campaign")
    flight = 5
    data = {
        "name": f"cargo_only_{n_launches}launch",
        "commodities": [
            {"id": "science", "unit": "kg", "consumption_rate": 19.0,
             "shortage_penalty": 0.8, "loss_weight": 1.0},
            {"id": "maintenance", "unit": "kg", "consumption_rate": 9.79,
             "shortage_penalty": 0.2, "loss_weight": 1.0},
        ],
        "nodes": [{"id": "earth"}, {"id": "station", "station": True}],
        "spacecraft": [
            {"name": "centaur", "dry_mass": 2316.0, "propellant_capacity": 20830.0,
             "payload_capacity": 14000.0, "specific_impulse": 450.5}
        ],
        "launches": [
            {"day": l * spacing, "vehicle": "centaur"} for l in range(n_launches)
        ],
        "transit": {"flight_time_days": flight, "outbound_delta_v_km_s": 3.53,
                    "return_delta_v_km_s": 3.51},
        "mission": {"end_day": (n_launches - 1) * spacing + flight + spacing,
                    "origin": "earth", "station": "station"},
        "demands": [
            {"kind": "launch_window", "commodity": "science", "node": "station"},
            {"kind": "launch_window", "commodity": "maintenance", "node": "station"},
        ],
        "delay_model": {"rate": 0.05, "max_delay": 90},
        "scenarios": {
            "operating": {"count": n_operating, "seed": operating_seed},
            "evaluation": {"count": n_evaluation, "seed": evaluation_seed},
        },
        "gammas": list(gammas),
    }
    return config_from_dict(data)
