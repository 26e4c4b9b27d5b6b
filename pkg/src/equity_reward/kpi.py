"""Episode KPIs, the fixed-setpoint rule-based controller (RBC) and
normalisation against the RBC baseline (lower is better)."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .env import Action, DistrictState, EpisodeTrace, MicroDistrict
from .errors import DegenerateBaselineError, InputError

KPI_NAMES = ("cost", "carbon", "solar_shortfall", "soc_deviation")
COMPOSITE_NAMES = ("cost", "solar_shortfall", "soc_deviation")


@dataclass(frozen=True)
class KpiVector:
    cost: float
    carbon: float
    solar_shortfall: float
    soc_deviation: float

    def __post_init__(self):
        for k in KPI_NAMES:
            v = float(getattr(self, k))
            if not (np.isfinite(v) and v >= 0):
                raise InputError(f"KPI {k} must be finite and >= 0, got {v}")
            object.__setattr__(self, k, v)

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in KPI_NAMES])


class NormalizedKpiVector(KpiVector):
    """Agent KPI / RBC KPI, componentwise."""


def aggregate(trace: EpisodeTrace) -> KpiVector:
    if len(trace) == 0:
        raise InputError("cannot aggregate an empty trace")
    return KpiVector(
        cost=float(trace.cost.sum()),
        carbon=float(trace.carbon.sum()),
        solar_shortfall=float(trace.solar_spilled.sum()),
        soc_deviation=float(trace.soc_deviation.sum()),
    )


def normalize(agent: KpiVector, baseline: KpiVector) -> NormalizedKpiVector:
    out = {}
    for k in KPI_NAMES:
        b = getattr(baseline, k)
        if b == 0:
            raise DegenerateBaselineError(k)
        out[k] = getattr(agent, k) / b
    return NormalizedKpiVector(**out)


def composite_cost(nk: KpiVector) -> float:
    """Unweighted mean of the normalised cost, solar shortfall and SoC
    deviation components.  Carbon is not part of the composite."""
    return (nk.cost + nk.solar_shortfall + nk.soc_deviation) / 3.0


@dataclass(frozen=True)
class RbcConfig:
    setpoint: float = 25.5
    deadband: float = 0.5


def rbc_cooling(indoor_temp, previous, config: RbcConfig) -> np.ndarray:
    """Hysteresis thermostat: on above the band, off below it, hold inside."""
    t = np.asarray(indoor_temp, dtype=float)
    prev = np.asarray(previous, dtype=float)
    on = t > config.setpoint + config.deadband
    off = t < config.setpoint - config.deadband
    return np.where(on, 1.0, np.where(off, 0.0, prev))


class RuleBasedController:
    """Fixed-setpoint RBC over a district.

    Battery rule: charge at the rate that absorbs the solar surplus, discharge
    at full rate while the price is above its episode median, otherwise idle.
    The cooling hysteresis bit is the only state kept between calls.
    """

    def __init__(self, env: MicroDistrict, config: RbcConfig | None = None):
        self.env = env
        self.config = config or RbcConfig()
        self.reset()

    def reset(self):
        self._cooling = np.zeros(self.env.n_buildings)

    def __call__(self, state: DistrictState) -> Action:
        env = self.env
        t = state.timestep
        cooling = rbc_cooling(state.indoor_temp, self._cooling, self.config)
        self._cooling = cooling
        load = env.base_load[t] + env.config.hvac_kw * cooling
        surplus = env.traces.solar_gen[t] - load
        battery = np.where(
            surplus > 0,
            np.minimum(surplus / env.config.battery_kw, 1.0),
            np.where(env.traces.price[t] > env.price_median, -1.0, 0.0),
        )
        return Action(cooling, battery)


def rbc_trace(env: MicroDistrict, seed: int, config: RbcConfig | None = None) -> EpisodeTrace:
    return env.run_episode(RuleBasedController(env, config), seed)
