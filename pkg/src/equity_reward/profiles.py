"""Build occupant profiles from raw comfort-vote records.

Records are filtered by age, sex and (optionally) a health-sensitive flag.
Among the records that voted comfortable (``thermal_comfort >= 4`` on the
1-6 scale), the preferred range is the interquartile range of air
temperature.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Sequence, TextIO

from .comfort import OccupantProfile
from .errors import DegenerateRangeError, FormatError, InputError, InsufficientDataError

log = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("age", "sex", "air_temp", "thermal_comfort", "health_flag")
AIR_TEMP_WINDOW = (0.0, 50.0)
MIN_COMFORTABLE = 4


@dataclass(frozen=True)
class ComfortRecord:
    age: float
    sex: str
    air_temp: float
    thermal_comfort: int
    health_flag: bool = False

    def __post_init__(self):
        if self.sex not in ("M", "F"):
            raise InputError(f"sex must be M or F, got {self.sex!r}")
        if self.thermal_comfort not in range(1, 7):
            raise InputError(f"thermal_comfort must be in 1..6, got {self.thermal_comfort}")
        lo, hi = AIR_TEMP_WINDOW
        if not (math.isfinite(self.air_temp) and lo <= self.air_temp <= hi):
            raise InputError(f"air_temp outside [{lo}, {hi}]: {self.air_temp}")
        if not math.isfinite(self.age):
            raise InputError(f"age must be finite, got {self.age}")


@dataclass(frozen=True)
class ProfileQuery:
    id: str
    age_range: tuple[float, float]
    sexes: frozenset = frozenset({"M", "F"})
    health_only: bool = False
    flex: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "sexes", frozenset(self.sexes))
        if self.age_range[0] > self.age_range[1]:
            raise InputError(f"query {self.id!r}: age range {self.age_range} is inverted")
        if not self.sexes or not self.sexes <= {"M", "F"}:
            raise InputError(f"query {self.id!r}: sexes must be a non-empty subset of {{M, F}}")
        if not (math.isfinite(self.flex) and self.flex > 0):
            raise InputError(f"query {self.id!r}: flex must be > 0")

    @classmethod
    def from_dict(cls, d: dict) -> "ProfileQuery":
        try:
            return cls(
                id=str(d["id"]),
                age_range=tuple(float(a) for a in d["age_range"]),
                sexes=frozenset(d.get("sexes", ["M", "F"])),
                health_only=bool(d.get("health_only", False)),
                flex=float(d["flex"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"bad query entry {d!r}: {e}") from e


# Queries behind the four built-in profiles.
TABLE1_QUERIES: tuple[ProfileQuery, ...] = (
    ProfileQuery("Young Male", (18, 35), frozenset({"M"}), False, 2.0),
    ProfileQuery("Elderly Female", (65, 95), frozenset({"F"}), False, 1.0),
    ProfileQuery("Mid-aged Female", (40, 55), frozenset({"F"}), False, 1.5),
    ProfileQuery("Health Sensitive", (45, 60), frozenset({"M", "F"}), True, 0.5),
)


def queries_from_json(text: str) -> tuple[ProfileQuery, ...]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"queries document is not valid JSON: {e}") from e
    entries = doc.get("queries") if isinstance(doc, dict) else doc
    if not isinstance(entries, list) or not entries:
        raise FormatError("queries document must hold a non-empty 'queries' list")
    return tuple(ProfileQuery.from_dict(e) for e in entries)


@dataclass
class LoadResult:
    records: list[ComfortRecord]
    rejected: Counter = field(default_factory=Counter)

    @property
    def n_rejected(self) -> int:
        return sum(self.rejected.values())


def _parse_row(row: dict) -> ComfortRecord:
    sex = row["sex"].strip().upper()
    flag = row["health_flag"].strip()
    if flag not in ("0", "1"):
        raise ValueError(f"health_flag must be 0 or 1, got {flag!r}")
    tc = float(row["thermal_comfort"])
    if not tc.is_integer():
        raise ValueError(f"thermal_comfort must be an integer, got {tc}")
    return ComfortRecord(
        age=float(row["age"]),
        sex=sex,
        air_temp=float(row["air_temp"]),
        thermal_comfort=int(tc),
        health_flag=flag == "1",
    )


def load_records(source: BinaryIO | TextIO | bytes | str) -> LoadResult:
    """Read comma-delimited comfort records.

    Rows that fail to parse or violate a record invariant are skipped and
    tallied by reason in ``LoadResult.rejected``.
    """
    if isinstance(source, bytes):
        stream = io.StringIO(source.decode("utf-8"))
    elif isinstance(source, str):
        stream = io.StringIO(source)
    elif isinstance(source, io.TextIOBase):
        stream = source
    else:
        stream = io.TextIOWrapper(source, encoding="utf-8", newline="")

    reader = csv.DictReader(stream, skipinitialspace=True)
    header = [h.strip() for h in (reader.fieldnames or [])]
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise FormatError(f"missing required column(s): {', '.join(missing)}")
    reader.fieldnames = header

    result = LoadResult(records=[])
    for row in reader:
        if not any((v or "").strip() for v in row.values() if isinstance(v, str)):
            continue
        try:
            if any(row.get(c) is None for c in REQUIRED_COLUMNS):
                raise ValueError("short row")
            result.records.append(_parse_row(row))
        except InputError as e:
            result.rejected[_reason(e)] += 1
        except (ValueError, TypeError):
            result.rejected["unparseable"] += 1
    if result.rejected:
        log.info("rejected %d rows: %s", result.n_rejected, dict(result.rejected))
    return result


def _reason(err: InputError) -> str:
    msg = str(err)
    for key in ("thermal_comfort", "air_temp", "sex", "age"):
        if msg.startswith(key):
            return f"{key} out of range"
    return "invalid"


def filter_records(records: Iterable[ComfortRecord], query: ProfileQuery) -> list[ComfortRecord]:
    lo, hi = query.age_range
    return [
        r
        for r in records
        if lo <= r.age <= hi and r.sex in query.sexes and (r.health_flag or not query.health_only)
    ]


def quantile(values: Sequence[float], p: float) -> float:
    """Linear-interpolation quantile at position ``p * (n - 1)`` of the sorted sample."""
    xs = sorted(values)
    if not xs:
        raise InputError("quantile of empty sample")
    pos = p * (len(xs) - 1)
    i = math.floor(pos)
    frac = pos - i
    if i + 1 >= len(xs):
        return float(xs[-1])
    return xs[i] + frac * (xs[i + 1] - xs[i])


@dataclass(frozen=True)
class BuildDiagnostics:
    query_id: str
    n_filtered: int
    n_comfortable: int


def profile_counts(records, query: ProfileQuery, comfort_threshold: int = 4) -> BuildDiagnostics:
    matched = filter_records(records, query)
    comfy = sum(1 for r in matched if r.thermal_comfort >= comfort_threshold)
    return BuildDiagnostics(query.id, len(matched), comfy)


def build_profile(
    records: Iterable[ComfortRecord], query: ProfileQuery, comfort_threshold: int = 4
) -> OccupantProfile:
    """Preferred range = [Q25, Q75] of air temperature among comfortable votes.

    ``sample_size`` counts every record matching the query, before the
    comfort threshold is applied.
    """
    matched = filter_records(records, query)
    temps = [r.air_temp for r in matched if r.thermal_comfort >= comfort_threshold]
    if len(temps) < MIN_COMFORTABLE:
        raise InsufficientDataError(
            f"query {query.id!r}: {len(temps)} comfortable records, need at least {MIN_COMFORTABLE}"
        )
    q25, q75 = quantile(temps, 0.25), quantile(temps, 0.75)
    if not q25 < q75:
        raise DegenerateRangeError(f"query {query.id!r}: Q25 == Q75 == {q25}")
    if query.sexes == {"M", "F"}:
        sex = "Mixed"
    else:
        (sex,) = query.sexes
    lo, hi = query.age_range
    return OccupantProfile(
        id=query.id,
        age_range=(int(lo), int(hi)),
        sex=sex,
        sample_size=len(matched),
        t_min=q25,
        t_max=q75,
        flex=query.flex,
    )
