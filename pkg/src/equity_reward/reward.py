"""Weighted-sum training reward ``R = -sum_j w_j * KPI_hat_j``.

The KPI channels are cost, carbon, solar shortfall, SoC deviation and an
equity channel (instantaneous CEI).  Weights are absolute coefficients
proposed once per refinement round; rounds 1 and 2 must keep the equity
weight at zero.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .comfort import OccupantProfile, SatisfactionVector, cei, jain_rows, satisfaction_matrix
from .env import EpisodeTrace, StepOutcome
from .errors import DegenerateBaselineError, InputError, ProtocolViolationError, WeightError

WEIGHT_KEYS = ("cost", "carbon", "solar", "soc", "equity")
PROVENANCES = ("scripted", "remote-engineer", "manual")

# trace attribute backing each energy channel
_CHANNELS = (("cost", "cost"), ("carbon", "carbon"), ("solar", "solar_spilled"), ("soc", "soc_deviation"))


@dataclass(frozen=True)
class RewardWeights:
    cost: float = 0.0
    carbon: float = 0.0
    solar: float = 0.0
    soc: float = 0.0
    equity: float = 0.0
    round: int = 1
    provenance: str = "manual"

    @property
    def equity_w(self) -> float:
        return self.equity

    @property
    def is_degenerate(self) -> bool:
        """All-zero weights give a constant zero reward."""
        return all(getattr(self, k) == 0 for k in WEIGHT_KEYS)

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in WEIGHT_KEYS], dtype=float)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in WEIGHT_KEYS}

    def to_record(self) -> dict:
        return {**self.to_dict(), "round": self.round, "provenance": self.provenance}

    @classmethod
    def from_record(cls, d: dict) -> "RewardWeights":
        return cls(**{k: float(d[k]) for k in WEIGHT_KEYS}, round=int(d["round"]), provenance=d["provenance"])


def validate_weights(weights: RewardWeights) -> RewardWeights:
    """Return ``weights`` unchanged if they obey the value and round rules."""
    for k in WEIGHT_KEYS:
        v = getattr(weights, k)
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v) or v < 0:
            raise WeightError(f"weight {k!r} must be a finite non-negative number, got {v!r}")
    if weights.round not in (1, 2, 3):
        raise WeightError(f"round must be 1, 2 or 3, got {weights.round!r}")
    if weights.provenance not in PROVENANCES:
        raise WeightError(f"unknown provenance {weights.provenance!r}")
    if weights.round in (1, 2) and weights.equity != 0:
        raise ProtocolViolationError(
            f"round {weights.round} requires equity weight 0.0, got {weights.equity}"
        )
    return weights


@dataclass(frozen=True)
class StepReward:
    total: float
    components: dict = field(default_factory=dict)


def step_reward(weights: RewardWeights, proxies: dict, satisfactions: SatisfactionVector) -> StepReward:
    """``proxies`` maps cost/carbon/solar/soc to normalised step values."""
    comps = {}
    for k in ("cost", "carbon", "solar", "soc"):
        v = float(proxies[k])
        if not math.isfinite(v) or v < 0:
            raise InputError(f"proxy {k!r} must be finite and >= 0, got {v}")
        comps[k] = getattr(weights, k) * v
    comps["equity"] = weights.equity * cei(satisfactions).cei
    return StepReward(total=-sum(comps.values()), components=comps)


class ProxyReference:
    """RBC reference for per-step KPI proxies.

    ``mode="per_step"``: divide by the RBC increment at the same timestep,
    falling back to the RBC episode-mean increment where that is zero.

    ``mode="episode_mean"``: always divide by the RBC episode-mean increment.
    The time-average of these proxies equals the episode-level normalised
    KPI exactly, and the signal does not blow up on near-zero reference steps.
    """

    def __init__(self, rbc: EpisodeTrace, mode: str = "episode_mean"):
        if mode not in ("per_step", "episode_mean"):
            raise InputError(f"unknown proxy mode {mode!r}")
        self.mode = mode
        self.district = {}  # (H,) district step increments
        self.mean = {}  # scalar district episode-mean increment
        for key, attr in _CHANNELS:
            col = getattr(rbc, attr).sum(axis=1)
            m = float(col.mean())
            if m == 0:
                raise DegenerateBaselineError(key)
            self.district[key] = col
            self.mean[key] = m
        self.n_buildings = rbc.cost.shape[1]
        # per-building denominators: district mean spread evenly over buildings
        self.building_scale = np.array([self.mean[k] / self.n_buildings for k, _ in _CHANNELS])

    def denominators(self, t: int) -> dict:
        if self.mode == "episode_mean":
            return dict(self.mean)
        out = {}
        for key in self.mean:
            ref = self.district[key][t]
            out[key] = ref if ref > 0 else self.mean[key]
        return out


def step_kpi_proxies(outcome: StepOutcome, reference: ProxyReference, t: int) -> dict:
    """District-level normalised increments for one timestep."""
    totals = {
        "cost": float(outcome.cost.sum()),
        "carbon": float(outcome.carbon.sum()),
        "solar": float(outcome.solar_spilled.sum()),
        "soc": float(outcome.soc_deviation.sum()),
    }
    den = reference.denominators(t)
    return {k: totals[k] / den[k] for k in totals}


class RewardShaper:
    """Binds validated weights, an RBC reference and the occupant profiles.

    ``district_reward`` is the reward of the whole district for one step.
    ``building_rewards`` gives the per-building signal the learner trains on:
    each building's increments over the per-building reference scale, and
    the CEI of the profiles evaluated at that building's temperature.
    """

    def __init__(self, weights: RewardWeights, reference: ProxyReference, profiles: Sequence[OccupantProfile]):
        self.weights = validate_weights(weights)
        self.reference = reference
        self.profiles = tuple(profiles)
        self._w = weights.as_array()
        self._ids = [p.id for p in self.profiles]

    def district_reward(self, outcome: StepOutcome, t: int) -> StepReward:
        proxies = step_kpi_proxies(outcome, self.reference, t)
        sat = satisfaction_matrix(self.profiles, outcome.indoor_temp).mean(axis=0)
        return step_reward(self.weights, proxies, SatisfactionVector.from_arrays(self._ids, sat))

    def building_components(self, temp, cost, carbon, spilled, soc_dev) -> np.ndarray:
        """Unweighted per-building channels, shape (n_buildings, 5)."""
        if self.reference.mode == "per_step":
            raise InputError("per-building rewards use the episode_mean reference")
        scale = self.reference.building_scale
        eq = 1.0 - jain_rows(satisfaction_matrix(self.profiles, temp))
        return np.stack(
            [cost / scale[0], carbon / scale[1], spilled / scale[2], soc_dev / scale[3], eq], axis=1
        )

    def building_rewards(self, temp, cost, carbon, spilled, soc_dev) -> np.ndarray:
        return -(self.building_components(temp, cost, carbon, spilled, soc_dev) @ self._w)


def weights_from_json(text: str, round_no: int, provenance: str = "manual") -> RewardWeights:
    d = json.loads(text)
    return validate_weights(
        RewardWeights(**{k: d[k] for k in WEIGHT_KEYS}, round=round_no, provenance=provenance)
    )
