"""Equity-aware reward refinement for residential district energy control.

Occupant comfort profiles and the Comfort Equity Index, a desk-scale
micro-district simulator with a rule-based baseline, a weighted-sum reward
with a per-round equity constraint, a tabular soft Q-learner, and the
three-round reward refinement driver.
"""

from .comfort import (
    DEFAULT_PROFILES,
    EquityReport,
    OccupantProfile,
    SatisfactionVector,
    cei,
    episode_satisfaction,
    jain_index,
    satisfaction,
)
from .env import Action, EnvConfig, ExogenousTraces, MicroDistrict, synthetic_traces
from .kpi import KpiVector, RbcConfig, RuleBasedController, aggregate, composite_cost, normalize, rbc_trace
from .reward import RewardShaper, RewardWeights, ProxyReference, step_reward, validate_weights
from .agent import DESK_AGENT, AgentConfig, EvaluationReport, GreedyPolicy, evaluate, train
from .engineers import HttpEngineer, ScriptedEngineer
from .refinement import ExperimentConfig, RoundConfig, build_prompt, parse_weights, run_experiment, run_round

__version__ = "0.1.0"
