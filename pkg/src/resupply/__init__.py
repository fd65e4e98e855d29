"""Safety-stock decision rules for multi-launch resupply campaigns.

The package optimizes "top up to R" stock policies against launch-delay
uncertainty: a commodity-flow model prices every launched kilogram, a
decision-rule block converts delays and stock levels into operating-time
loss, and a weighted-sum sweep traces the cost/loss Pareto front.
"""

from .config import CampaignConfig, load_config
from .network import build_network
from .scenarios import (
    TruncExpCdf,
    fit_delay_cdf,
    inverse_transform,
    sample_scenario_set,
)
from .rules import DecisionRuleSet, simulate_rule

__all__ = [
    "CampaignConfig",
    "load_config",
    "build_network",
    "TruncExpCdf",
    "fit_delay_cdf",
    "inverse_transform",
    "sample_scenario_set",
    "DecisionRuleSet",
    "simulate_rule",
]

__version__ = "0.1.0"
