"""Desk-scale residential district: first-order thermal zones, HVAC cooling,
batteries, rooftop solar and time-varying price/carbon signals on an hourly
clock.

Per building and step::

    T' = T + leak * (ambient - T) + gain - cooling_strength * cooling
    soc' = clamp(soc + eta_c * charge / E - discharge / (eta_d * E), 0, 1)

Energy is in kWh per (hourly) step.  Batteries only serve on-site load: a
discharge is capped at the building's deficit, so battery energy is never
exported and ``solar_used + solar_spilled == solar_gen`` always holds.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConfigurationError, EpisodeCompleteError, FormatError, PolicyError

# Fixed diurnal base load (kWh per hour) shared by every building.
DEFAULT_BASE_LOAD = (
    0.45, 0.40, 0.38, 0.38, 0.40, 0.50, 0.75, 0.95, 0.85, 0.70, 0.65, 0.65,
    0.70, 0.65, 0.65, 0.75, 0.95, 1.25, 1.45, 1.40, 1.20, 0.95, 0.70, 0.55,
)


@dataclass(frozen=True)
class EnvConfig:
    n_buildings: int = 5
    horizon: int = 720
    leak: float = 0.1
    gain: float = 0.1
    cooling_strength: float = 0.9
    hvac_kw: float = 2.0
    battery_kwh: float = 6.4
    battery_kw: float = 3.2
    eta_charge: float = 0.95
    eta_discharge: float = 0.95
    soc_init: float = 0.5
    soc_target: float = 0.5
    init_temp_range: tuple[float, float] = (24.0, 27.0)
    base_load: tuple[float, ...] = DEFAULT_BASE_LOAD
    # synthetic trace generation
    trace_seed: int = 2022
    ambient_mean: float = 29.0
    ambient_amplitude: float = 5.0
    ambient_peak_hour: float = 15.0
    ambient_daily_sd: float = 0.5
    pv_peak_kw: tuple[float, ...] = (4.0, 3.5, 4.5, 3.0, 5.0)
    cloud_range: tuple[float, float] = (0.6, 1.0)
    price_offpeak: float = 0.20
    price_shoulder: float = 0.28
    price_peak: float = 0.42
    carbon_base: float = 0.45
    carbon_solar_dip: float = 0.15

    def __post_init__(self):
        if self.n_buildings < 1 or self.horizon < 1:
            raise ConfigurationError("n_buildings and horizon must be >= 1")
        if not (0 < self.leak < 1):
            raise ConfigurationError("leak must be in (0, 1)")
        if not (0 < self.eta_charge <= 1 and 0 < self.eta_discharge <= 1):
            raise ConfigurationError("battery efficiencies must be in (0, 1]")
        if self.battery_kwh <= 0 or self.battery_kw <= 0 or self.hvac_kw < 0:
            raise ConfigurationError("battery and HVAC ratings must be positive")
        if len(self.base_load) != 24:
            raise ConfigurationError("base_load needs 24 hourly values")
        if len(self.pv_peak_kw) != self.n_buildings:
            raise ConfigurationError("pv_peak_kw needs one entry per building")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EnvConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigurationError(f"unknown environment settings: {sorted(unknown)}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        if "n_buildings" in kw and "pv_peak_kw" not in kw:
            # cycle the default array sizes over however many buildings are asked for
            kw["pv_peak_kw"] = tuple(cls.pv_peak_kw[i % len(cls.pv_peak_kw)] for i in range(kw["n_buildings"]))
        return cls(**kw)


@dataclass(frozen=True)
class ExogenousTraces:
    ambient_temp: np.ndarray  # (H,)
    solar_gen: np.ndarray  # (H, B)
    price: np.ndarray  # (H,)
    carbon_intensity: np.ndarray  # (H,)

    def __post_init__(self):
        amb = np.array(self.ambient_temp, dtype=float)
        sol = np.array(self.solar_gen, dtype=float)
        if sol.ndim == 1:
            sol = sol[:, None]
        price = np.array(self.price, dtype=float)
        carbon = np.array(self.carbon_intensity, dtype=float)
        h = amb.shape[0]
        if not (sol.shape[0] == price.shape[0] == carbon.shape[0] == h) or h == 0:
            raise ConfigurationError("all traces must share the same non-zero length")
        for name, arr in (("ambient_temp", amb), ("solar_gen", sol), ("price", price), ("carbon_intensity", carbon)):
            if not np.all(np.isfinite(arr)):
                raise ConfigurationError(f"{name} trace has non-finite values")
        for name, arr in (("solar_gen", sol), ("price", price), ("carbon_intensity", carbon)):
            if np.any(arr < 0):
                raise ConfigurationError(f"{name} trace must be non-negative")
        for name, arr in (("ambient_temp", amb), ("solar_gen", sol), ("price", price), ("carbon_intensity", carbon)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def horizon(self) -> int:
        return self.ambient_temp.shape[0]

    @property
    def n_buildings(self) -> int:
        return self.solar_gen.shape[1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(
            ["timestep", "ambient_temp"]
            + [f"solar_gen_b{i + 1}" for i in range(self.n_buildings)]
            + ["price", "carbon_intensity"]
        )
        for t in range(self.horizon):
            w.writerow(
                [t, repr(float(self.ambient_temp[t]))]
                + [repr(float(v)) for v in self.solar_gen[t]]
                + [repr(float(self.price[t])), repr(float(self.carbon_intensity[t]))]
            )
        return buf.getvalue()

    @classmethod
    def from_csv(cls, source) -> "ExogenousTraces":
        """Load ``timestep, ambient_temp, solar_gen_b1..bN, price, carbon_intensity``."""
        if isinstance(source, (str, Path)) and Path(source).exists():
            text = Path(source).read_text()
        else:
            text = source
        reader = csv.DictReader(io.StringIO(text), skipinitialspace=True)
        header = reader.fieldnames or []
        solar_cols = sorted(
            (c for c in header if c.startswith("solar_gen_b")), key=lambda c: int(c[len("solar_gen_b"):])
        )
        missing = [c for c in ("timestep", "ambient_temp", "price", "carbon_intensity") if c not in header]
        if missing or not solar_cols:
            raise FormatError(f"trace file missing columns: {missing or ['solar_gen_b1..']}")
        rows = sorted(reader, key=lambda r: int(r["timestep"]))
        try:
            return cls(
                ambient_temp=[float(r["ambient_temp"]) for r in rows],
                solar_gen=[[float(r[c]) for c in solar_cols] for r in rows],
                price=[float(r["price"]) for r in rows],
                carbon_intensity=[float(r["carbon_intensity"]) for r in rows],
            )
        except (TypeError, ValueError) as e:
            raise FormatError(f"unparseable trace value: {e}") from e


def synthetic_traces(config: EnvConfig) -> ExogenousTraces:
    """Deterministic summer traces from ``config.trace_seed``.

    Ambient: sinusoid peaking at ``ambient_peak_hour`` plus a per-day offset.
    Solar: half-sine between 06:00 and 18:00 times a per-day cloud factor.
    Price: time-of-use (peak 16-21h, shoulder 07-16h).  Carbon dips while
    the sun is up.
    """
    rng = np.random.default_rng(config.trace_seed)
    h = config.horizon
    t = np.arange(h)
    hour = t % 24
    day = t // 24
    n_days = int(day[-1]) + 1
    day_offset = rng.normal(0.0, config.ambient_daily_sd, n_days)
    clouds = rng.uniform(*config.cloud_range, n_days)
    ambient = (
        config.ambient_mean
        + config.ambient_amplitude * np.cos(2 * np.pi * (hour - config.ambient_peak_hour) / 24)
        + day_offset[day]
    )
    sun = np.clip(np.sin(np.pi * (hour - 6) / 12), 0.0, None) * clouds[day]
    solar = sun[:, None] * np.asarray(config.pv_peak_kw)[None, :]
    price = np.full(h, config.price_offpeak)
    price[(hour >= 7) & (hour < 16)] = config.price_shoulder
    price[(hour >= 16) & (hour < 21)] = config.price_peak
    carbon = config.carbon_base - config.carbon_solar_dip * sun
    return ExogenousTraces(ambient, solar, price, carbon)


@dataclass(frozen=True)
class BuildingState:
    indoor_temp: float
    soc: float


@dataclass(frozen=True, eq=False)
class DistrictState:
    timestep: int
    indoor_temp: np.ndarray
    soc: np.ndarray

    def __post_init__(self):
        for name in ("indoor_temp", "soc"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def buildings(self) -> list[BuildingState]:
        return [BuildingState(float(t), float(s)) for t, s in zip(self.indoor_temp, self.soc)]

    def __eq__(self, other):
        return (
            isinstance(other, DistrictState)
            and self.timestep == other.timestep
            and np.array_equal(self.indoor_temp, other.indoor_temp)
            and np.array_equal(self.soc, other.soc)
        )


@dataclass(frozen=True, eq=False)
class Action:
    cooling: np.ndarray
    battery: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "cooling", np.atleast_1d(np.asarray(self.cooling, dtype=float)))
        object.__setattr__(self, "battery", np.atleast_1d(np.asarray(self.battery, dtype=float)))

    def clamped(self) -> "Action":
        return Action(np.clip(self.cooling, 0.0, 1.0), np.clip(self.battery, -1.0, 1.0))


@dataclass(frozen=True, eq=False)
class StepOutcome:
    """Per-building increments for one step (arrays of length n_buildings)."""

    grid_import: np.ndarray
    solar_used: np.ndarray
    solar_spilled: np.ndarray
    cost: np.ndarray
    carbon: np.ndarray
    soc_deviation: np.ndarray
    indoor_temp: np.ndarray

    def totals(self) -> dict[str, float]:
        return {
            "cost": float(self.cost.sum()),
            "carbon": float(self.carbon.sum()),
            "solar_shortfall": float(self.solar_spilled.sum()),
            "soc_deviation": float(self.soc_deviation.sum()),
        }


@dataclass(frozen=True, eq=False)
class EpisodeTrace:
    """Full per-step record; every array is ``(horizon, n_buildings)``."""

    seed: int
    initial_temp: np.ndarray
    indoor_temp: np.ndarray
    soc: np.ndarray
    cooling: np.ndarray
    battery: np.ndarray
    grid_import: np.ndarray
    solar_used: np.ndarray
    solar_spilled: np.ndarray
    cost: np.ndarray
    carbon: np.ndarray
    soc_deviation: np.ndarray

    def __len__(self):
        return self.indoor_temp.shape[0]

    def outcome(self, t: int) -> StepOutcome:
        return StepOutcome(
            self.grid_import[t], self.solar_used[t], self.solar_spilled[t], self.cost[t],
            self.carbon[t], self.soc_deviation[t], self.indoor_temp[t],
        )

    def __eq__(self, other):
        if not isinstance(other, EpisodeTrace) or self.seed != other.seed:
            return False
        return all(
            np.array_equal(getattr(self, f.name), getattr(other, f.name))
            for f in fields(self)
            if f.name != "seed"
        )


Policy = Callable[[DistrictState], Action]


class MicroDistrict:
    """District simulator.  ``step`` is a pure function of (state, action);
    the instance only holds configuration and immutable traces."""

    def __init__(self, traces: ExogenousTraces | None, config: EnvConfig | None = None):
        self.config = config or EnvConfig()
        self.traces = traces
        if traces is not None:
            self._bind(traces)

    @classmethod
    def synthetic(cls, config: EnvConfig | None = None) -> "MicroDistrict":
        config = config or EnvConfig()
        return cls(synthetic_traces(config), config)

    def _bind(self, traces: ExogenousTraces):
        cfg = self.config
        if traces.n_buildings != cfg.n_buildings:
            raise ConfigurationError(
                f"traces cover {traces.n_buildings} buildings, config expects {cfg.n_buildings}"
            )
        self.horizon = min(cfg.horizon, traces.horizon)
        hours = np.arange(traces.horizon) % 24
        self.base_load = np.asarray(cfg.base_load)[hours]
        self.price_median = float(np.median(traces.price[: self.horizon]))
        # cached plain arrays for the hot loop
        self._amb = np.asarray(traces.ambient_temp)
        self._solar = np.asarray(traces.solar_gen)
        self._price = np.asarray(traces.price)
        self._carbon = np.asarray(traces.carbon_intensity)

    @property
    def n_buildings(self) -> int:
        return self.config.n_buildings

    def reset(self, seed: int) -> DistrictState:
        """Initial indoor temperatures ~ U(init_temp_range) from NumPy's PCG64
        generator seeded with ``seed``; every battery starts at ``soc_init``."""
        if self.traces is None:
            raise ConfigurationError("environment traces are not configured")
        rng = np.random.default_rng(seed)
        lo, hi = self.config.init_temp_range
        temps = rng.uniform(lo, hi, self.n_buildings)
        return DistrictState(0, temps, np.full(self.n_buildings, self.config.soc_init))

    def advance(self, t: int, temp: np.ndarray, soc: np.ndarray, cooling: np.ndarray, battery: np.ndarray):
        """Unchecked vectorised transition used by ``step`` and the trainer.

        Inputs must already be clamped.  Returns
        ``(temp', soc', grid, solar_used, spilled, cost, carbon, soc_dev)``.
        """
        cfg = self.config
        amb = self._amb[t]
        solar = self._solar[t]
        new_temp = temp + cfg.leak * (amb - temp) + cfg.gain - cfg.cooling_strength * cooling
        load = self.base_load[t] + cfg.hvac_kw * cooling

        charge_req = np.maximum(battery, 0.0) * cfg.battery_kw
        charge = np.minimum(charge_req, (1.0 - soc) * cfg.battery_kwh / cfg.eta_charge)
        deficit = np.maximum(load - solar, 0.0)
        dis_req = np.maximum(-battery, 0.0) * cfg.battery_kw
        discharge = np.minimum(np.minimum(dis_req, soc * cfg.battery_kwh * cfg.eta_discharge), deficit)
        new_soc = soc + (cfg.eta_charge * charge - discharge / cfg.eta_discharge) / cfg.battery_kwh
        new_soc = np.clip(new_soc, 0.0, 1.0)

        demand = load + charge
        used = np.minimum(solar, demand)
        spilled = solar - used
        grid = demand - used - discharge
        grid = np.maximum(grid, 0.0)
        cost = self._price[t] * grid
        carbon = self._carbon[t] * grid
        soc_dev = np.abs(new_soc - cfg.soc_target)
        return new_temp, new_soc, grid, used, spilled, cost, carbon, soc_dev

    def step(self, state: DistrictState, action: Action) -> tuple[DistrictState, StepOutcome]:
        if self.traces is None:
            raise ConfigurationError("environment traces are not configured")
        t = state.timestep
        if t >= self.horizon:
            raise EpisodeCompleteError(f"episode complete at t={t} (horizon {self.horizon})")
        a = action.clamped()
        cooling = np.broadcast_to(a.cooling, (self.n_buildings,))
        battery = np.broadcast_to(a.battery, (self.n_buildings,))
        temp, soc, grid, used, spilled, cost, carbon, dev = self.advance(
            t, state.indoor_temp, state.soc, cooling, battery
        )
        nxt = DistrictState(t + 1, temp, soc)
        return nxt, StepOutcome(grid, used, spilled, cost, carbon, dev, nxt.indoor_temp)

    def run_episode(self, policy: Policy, seed: int) -> EpisodeTrace:
        """Roll ``policy`` out from ``reset(seed)`` for the full horizon.

        A policy with a ``reset()`` method (e.g. the hysteresis RBC) is reset
        first so that traces depend only on (seed, policy).
        """
        if hasattr(policy, "reset"):
            policy.reset()
        state = self.reset(seed)
        h, b = self.horizon, self.n_buildings
        rec = {k: np.empty((h, b)) for k in (
            "indoor_temp", "soc", "cooling", "battery", "grid_import", "solar_used",
            "solar_spilled", "cost", "carbon", "soc_deviation")}
        initial = state.indoor_temp
        temp, soc = np.array(state.indoor_temp), np.array(state.soc)
        for t in range(h):
            action = policy(state)
            cooling = np.broadcast_to(np.asarray(action.cooling, dtype=float), (b,))
            battery = np.broadcast_to(np.asarray(action.battery, dtype=float), (b,))
            if not (np.all(np.isfinite(cooling)) and np.all(np.isfinite(battery))):
                raise PolicyError(t, "policy returned a non-finite action")
            cooling = np.clip(cooling, 0.0, 1.0)
            battery = np.clip(battery, -1.0, 1.0)
            temp, soc, grid, used, spilled, cost, carbon, dev = self.advance(t, temp, soc, cooling, battery)
            rec["indoor_temp"][t] = temp
            rec["soc"][t] = soc
            rec["cooling"][t] = cooling
            rec["battery"][t] = battery
            rec["grid_import"][t] = grid
            rec["solar_used"][t] = used
            rec["solar_spilled"][t] = spilled
            rec["cost"][t] = cost
            rec["carbon"][t] = carbon
            rec["soc_deviation"][t] = dev
            state = DistrictState(t + 1, temp, soc)
        return EpisodeTrace(seed=seed, initial_temp=initial, **rec)


def zero_policy(state: DistrictState) -> Action:
    n = state.indoor_temp.shape[0]
    return Action(np.zeros(n), np.zeros(n))


def full_cooling_policy(state: DistrictState) -> Action:
    n = state.indoor_temp.shape[0]
    return Action(np.ones(n), np.zeros(n))


def load_env_config(path) -> EnvConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}: not valid JSON: {e}") from e
    return EnvConfig.from_dict(doc.get("environment", doc))
