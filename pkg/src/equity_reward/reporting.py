"""Tables and plot-ready series built from a persisted experiment record.

Everything here reads the round files and never writes back into them.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import FormatError, IncompleteRecordError
from .refinement import ROUND_DESCRIPTIONS, RoundResult, load_round
from .reward import WEIGHT_KEYS

TABLES = ("results_table", "satisfaction_table", "cost_series", "weight_series")


def format_change(r1: float, r3: float) -> str:
    """``R3 - R1`` to two decimals with the relative change in whole percent."""
    delta = r3 - r1
    if round(delta, 2) == 0:
        delta = 0.0
    if r1 > 0:
        rel = round(100 * (r3 - r1) / r1)
        pct = "0%" if rel == 0 else f"{rel:+d}%"
    else:
        pct = "n/a"
    absolute = "0.00" if delta == 0 else f"{delta:+.2f}"
    return f"{absolute} ({pct})"


@dataclass(frozen=True)
class ReportBundle:
    results_table: list[dict]
    satisfaction_table: list[dict]
    cost_series: list[dict]
    weight_series: list[dict]

    def tables(self) -> dict[str, list[dict]]:
        return {name: getattr(self, name) for name in TABLES}

    def to_json(self) -> str:
        return json.dumps(self.tables(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ReportBundle":
        d = json.loads(text)
        return cls(**{name: d[name] for name in TABLES})

    def write(self, out_dir, fmt: str = "json") -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if fmt == "json":
            path = out / "report.json"
            path.write_text(self.to_json())
            return [path]
        if fmt == "csv":
            paths = []
            for name, rows in self.tables().items():
                path = out / f"{name}.csv"
                path.write_text(rows_to_csv(rows))
                paths.append(path)
            return paths
        raise FormatError(f"unknown report format {fmt!r} (json or csv)")

    @classmethod
    def load(cls, path, fmt: str = "json") -> "ReportBundle":
        p = Path(path)
        if fmt == "json":
            return cls.from_json((p / "report.json" if p.is_dir() else p).read_text())
        return cls(**{name: csv_to_rows((p / f"{name}.csv").read_text()) for name in TABLES})


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]) if rows else [], lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _cell(text: str):
    if text == "":
        return None
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def csv_to_rows(text: str) -> list[dict]:
    """Inverse of ``rows_to_csv``; numeric cells come back as numbers."""
    return [{k: _cell(v) for k, v in row.items()} for row in csv.DictReader(io.StringIO(text))]


def load_rounds(results_dir) -> list[RoundResult]:
    root = Path(results_dir)
    missing = [k for k in (1, 2, 3) if not (root / f"round{k}.json").is_file()]
    if missing:
        raise IncompleteRecordError(missing)
    rounds = [load_round(root / f"round{k}.json") for k in (1, 2, 3)]
    failed = [r.round for r in rounds if r.status != "complete" or not r.reports]
    if failed:
        raise IncompleteRecordError(failed)
    return rounds


def build_report(rounds: list[RoundResult]) -> ReportBundle:
    results, costs, weights = [], [], []
    for r in rounds:
        st = r.stats()
        results.append({
            "round": r.round,
            "description": ROUND_DESCRIPTIONS[r.round],
            "cost_mean": st["composite_cost"]["mean"],
            "cost_std": st["composite_cost"]["std"],
            "cost_display": f"{st['composite_cost']['mean']:.3f} ± {st['composite_cost']['std']:.3f}",
            "cei_mean": st["cei"]["mean"],
            "cei_std": st["cei"]["std"],
            "worst_profile": st["worst_profile"],
        })
        costs.append({"round": r.round, "mean": st["composite_cost"]["mean"], "std": st["composite_cost"]["std"]})
        weights.append({"round": r.round, **{k: getattr(r.weights, k) for k in WEIGHT_KEYS}})

    first, last = rounds[0].stats()["satisfactions"], rounds[-1].stats()["satisfactions"]
    sats = []
    for pid in first:
        r1, r3 = first[pid]["mean"], last[pid]["mean"]
        sats.append({
            "profile": pid,
            "r1": r1,
            "r3": r3,
            "change": r3 - r1,
            "relative": (r3 - r1) / r1 if r1 > 0 else None,
            "display": format_change(r1, r3),
        })
    return ReportBundle(results, sats, costs, weights)


def report_from_dir(results_dir) -> ReportBundle:
    return build_report(load_rounds(results_dir))
