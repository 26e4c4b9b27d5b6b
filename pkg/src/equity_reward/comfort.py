"""Occupant comfort satisfaction, Jain's fairness index and the Comfort Equity Index.

Satisfaction is 1 inside a profile's preferred temperature range and falls
linearly to 0 at ``flex`` degrees beyond the nearest range boundary.  The
Comfort Equity Index (CEI) is ``1 - J`` where ``J`` is Jain's index over
per-profile satisfaction scores, so 0 means every profile is equally well off.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError, InputError

SEXES = ("M", "F", "Mixed")


@dataclass(frozen=True)
class OccupantProfile:
    id: str
    age_range: tuple[int, int]
    sex: str
    sample_size: int
    t_min: float
    t_max: float
    flex: float

    def __post_init__(self):
        if self.sex not in SEXES:
            raise InputError(f"profile {self.id!r}: sex must be one of {SEXES}, got {self.sex!r}")
        if not (math.isfinite(self.t_min) and math.isfinite(self.t_max)) or not self.t_min < self.t_max:
            raise InputError(f"profile {self.id!r}: need t_min < t_max, got {self.t_min}..{self.t_max}")
        if not (math.isfinite(self.flex) and self.flex > 0):
            raise InputError(f"profile {self.id!r}: flex must be > 0, got {self.flex}")
        if self.sample_size < 1:
            raise InputError(f"profile {self.id!r}: sample_size must be >= 1")
        lo, hi = self.age_range
        if lo > hi:
            raise InputError(f"profile {self.id!r}: bad age range {self.age_range}")
        object.__setattr__(self, "age_range", (lo, hi))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["age_range"] = list(self.age_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OccupantProfile":
        try:
            return cls(
                id=str(d["id"]),
                age_range=tuple(int(a) for a in d["age_range"]),
                sex=d["sex"],
                sample_size=int(d["sample_size"]),
                t_min=float(d["t_min"]),
                t_max=float(d["t_max"]),
                flex=float(d["flex"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"bad profile entry {d!r}: {e}") from e


# Canonical order; also the worst-profile tie-break order.
YOUNG_MALE = OccupantProfile("Young Male", (18, 35), "M", 4503, 23.6, 27.7, 2.0)
ELDERLY_FEMALE = OccupantProfile("Elderly Female", (65, 95), "F", 298, 21.3, 23.8, 1.0)
MIDAGED_FEMALE = OccupantProfile("Mid-aged Female", (40, 55), "F", 1504, 21.9, 26.2, 1.5)
HEALTH_SENSITIVE = OccupantProfile("Health Sensitive", (45, 60), "Mixed", 3798, 22.1, 27.9, 0.5)

DEFAULT_PROFILES: tuple[OccupantProfile, ...] = (
    YOUNG_MALE,
    ELDERLY_FEMALE,
    MIDAGED_FEMALE,
    HEALTH_SENSITIVE,
)


def profiles_to_json(profiles: Sequence[OccupantProfile]) -> str:
    return json.dumps({"profiles": [p.to_dict() for p in profiles]}, indent=2)


def profiles_from_json(text: str) -> tuple[OccupantProfile, ...]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"profiles document is not valid JSON: {e}") from e
    entries = doc.get("profiles") if isinstance(doc, dict) else doc
    if not isinstance(entries, list) or not entries:
        raise FormatError("profiles document must hold a non-empty 'profiles' list")
    profiles = tuple(OccupantProfile.from_dict(e) for e in entries)
    ids = [p.id for p in profiles]
    if len(set(ids)) != len(ids):
        raise FormatError(f"duplicate profile ids in {ids}")
    return profiles


@dataclass(frozen=True)
class SatisfactionVector:
    """Ordered (profile id, score) pairs."""

    scores: tuple[tuple[str, float], ...]

    def __post_init__(self):
        pairs = tuple((str(pid), float(s)) for pid, s in self.scores)
        ids = [pid for pid, _ in pairs]
        if len(set(ids)) != len(ids):
            raise InputError(f"duplicate profile ids: {ids}")
        for pid, s in pairs:
            if not 0.0 <= s <= 1.0:
                raise InputError(f"score for {pid!r} outside [0, 1]: {s}")
        object.__setattr__(self, "scores", pairs)

    @classmethod
    def from_arrays(cls, ids: Iterable[str], values: Iterable[float]) -> "SatisfactionVector":
        return cls(tuple(zip(ids, (float(v) for v in values))))

    @property
    def ids(self) -> list[str]:
        return [pid for pid, _ in self.scores]

    @property
    def values(self) -> list[float]:
        return [s for _, s in self.scores]

    def __getitem__(self, pid: str) -> float:
        for k, s in self.scores:
            if k == pid:
                return s
        raise KeyError(pid)

    def __len__(self):
        return len(self.scores)

    def to_dict(self) -> dict[str, float]:
        return dict(self.scores)


@dataclass(frozen=True)
class EquityReport:
    cei: float
    jain: float
    worst_profile: str
    satisfactions: SatisfactionVector = field(repr=False)
    n: int

    def to_dict(self) -> dict:
        return {
            "cei": self.cei,
            "jain": self.jain,
            "worst_profile": self.worst_profile,
            "n": self.n,
            "satisfactions": self.satisfactions.to_dict(),
        }


def satisfaction(profile: OccupantProfile, temp: float) -> float:
    """Comfort satisfaction of ``profile`` at indoor temperature ``temp`` (deg C)."""
    if not math.isfinite(temp):
        raise InputError(f"temperature must be finite, got {temp}")
    if profile.t_min <= temp <= profile.t_max:
        return 1.0
    delta = profile.t_min - temp if temp < profile.t_min else temp - profile.t_max
    return max(0.0, 1.0 - delta / profile.flex)


def profile_arrays(profiles: Sequence[OccupantProfile]):
    """(t_min, t_max, flex) as float arrays, for the vectorised helpers."""
    t_min = np.array([p.t_min for p in profiles], dtype=float)
    t_max = np.array([p.t_max for p in profiles], dtype=float)
    flex = np.array([p.flex for p in profiles], dtype=float)
    return t_min, t_max, flex


def satisfaction_matrix(profiles: Sequence[OccupantProfile], temps) -> np.ndarray:
    """Satisfaction for every temperature in ``temps`` and every profile.

    Output shape is ``temps.shape + (n_profiles,)``.
    """
    temps = np.asarray(temps, dtype=float)
    if not np.all(np.isfinite(temps)):
        raise InputError("temperatures must be finite")
    t_min, t_max, flex = profile_arrays(profiles)
    t = temps[..., None]
    delta = np.maximum(t_min - t, 0.0) + np.maximum(t - t_max, 0.0)
    return np.clip(1.0 - delta / flex, 0.0, 1.0)


def jain_index(scores: Sequence[float]) -> float:
    """Jain's fairness index ``(sum x)^2 / (n * sum x^2)``.

    An all-zero vector returns 1.0: equal outcomes are maximally equal even
    when nobody is satisfied.
    """
    x = np.asarray(scores, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise InputError("jain_index needs a non-empty 1-D score list")
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise InputError(f"scores must be finite and non-negative, got {x.tolist()}")
    sq = float(np.dot(x, x))
    if sq == 0.0:
        return 1.0
    total = float(x.sum())
    return total * total / (x.size * sq)


def jain_rows(scores: np.ndarray) -> np.ndarray:
    """Row-wise Jain's index over the last axis (no input checks)."""
    s = scores.sum(axis=-1)
    sq = (scores * scores).sum(axis=-1)
    n = scores.shape[-1]
    out = np.ones_like(s)
    nz = sq > 0
    out[nz] = s[nz] * s[nz] / (n * sq[nz])
    return out


def cei(scores: SatisfactionVector) -> EquityReport:
    vals = scores.values
    j = jain_index(vals)
    worst = min(range(len(vals)), key=lambda i: (vals[i], i))
    return EquityReport(
        cei=1.0 - j,
        jain=j,
        worst_profile=scores.ids[worst],
        satisfactions=scores,
        n=len(vals),
    )


def episode_satisfaction(profiles: Sequence[OccupantProfile], temps) -> SatisfactionVector:
    """Time-mean satisfaction per profile over an indoor temperature trace.

    ``temps`` may be 1-D (one zone) or ``(timesteps, buildings)``; the mean
    runs over every entry, so district-wide traces average over buildings too.
    """
    temps = np.asarray(temps, dtype=float)
    if temps.size == 0:
        raise InputError("temperature trace is empty")
    sat = satisfaction_matrix(profiles, temps).reshape(-1, len(profiles))
    return SatisfactionVector.from_arrays([p.id for p in profiles], sat.mean(axis=0))
