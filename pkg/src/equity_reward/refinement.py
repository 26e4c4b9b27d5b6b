"""Three-round reward refinement.

Each round: build a prompt from the round's information budget, get one
weight proposal from the engineer (with bounded repair retries), then train
and evaluate one learner per seed.  Round ``r + 1`` is fed a compact summary
of round ``r``; only round 3 sees equity data.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .agent import DESK_AGENT, AgentConfig, EvaluationReport, evaluate, train
from .comfort import DEFAULT_PROFILES, OccupantProfile
from .engineers import Engineer
from .env import EnvConfig, ExogenousTraces, MicroDistrict, synthetic_traces
from .errors import (
    ConfigurationError,
    EquityRewardError,
    ParseError,
    ProtocolViolationError,
    RoundFailedError,
    WeightError,
)
from .kpi import KPI_NAMES, RbcConfig, rbc_trace
from .reward import WEIGHT_KEYS, ProxyReference, RewardShaper, RewardWeights, validate_weights

log = logging.getLogger(__name__)

PAPER_SEEDS = (42, 0, 1, 123, 456)
ROUND_DESCRIPTIONS = {1: "Energy Only", 2: "Naive Refinement", 3: "Equity-Aware"}
RECORD_VERSION = 1

SYSTEM_MESSAGE = (
    "You design reward weights for a reinforcement-learning building energy controller. "
    "Follow the output format exactly."
)
FORMAT_INSTRUCTION = (
    "Respond with exactly one JSON object and nothing else, in this form:\n"
    '{"cost": <number>, "carbon": <number>, "solar": <number>, "soc": <number>, "equity": <number>}\n'
    "Every weight must be a non-negative number."
)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str | None = None
    seeds: tuple[int, ...] = PAPER_SEEDS
    env: EnvConfig = field(default_factory=EnvConfig)
    agent: AgentConfig = DESK_AGENT
    rbc: RbcConfig = field(default_factory=RbcConfig)
    profiles: tuple[OccupantProfile, ...] = DEFAULT_PROFILES
    proxy_mode: str = "episode_mean"
    traces_path: str | None = None
    max_workers: int = 1
    max_repairs: int = 2
    engineer: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError(f"duplicate seeds: {list(self.seeds)}")
        if self.proxy_mode != "episode_mean":
            raise ConfigurationError("training requires proxy_mode 'episode_mean'")
        if self.max_workers < 1 or self.max_repairs < 0:
            raise ConfigurationError("max_workers >= 1 and max_repairs >= 0 required")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seeds": list(self.seeds),
            "env": self.env.to_dict(),
            "agent": self.agent.to_dict(),
            "rbc": {"setpoint": self.rbc.setpoint, "deadband": self.rbc.deadband},
            "profiles": [p.to_dict() for p in self.profiles],
            "proxy_mode": self.proxy_mode,
            "traces_path": self.traces_path,
            "max_repairs": self.max_repairs,
            "engineer": dict(self.engineer),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown experiment settings: {sorted(unknown)}")
        kw = dict(d)
        if "seeds" in kw:
            kw["seeds"] = tuple(int(s) for s in kw["seeds"])
        if "env" in kw:
            kw["env"] = EnvConfig.from_dict(kw["env"])
        if "agent" in kw:
            kw["agent"] = AgentConfig.from_dict({**DESK_AGENT.to_dict(), **kw["agent"]})
        if "rbc" in kw:
            kw["rbc"] = RbcConfig(**kw["rbc"])
        if "profiles" in kw:
            kw["profiles"] = tuple(OccupantProfile.from_dict(p) for p in kw["profiles"])
        try:
            return cls(**kw)
        except TypeError as e:
            raise ConfigurationError(str(e)) from e

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{path}: not valid JSON: {e}") from e

    def experiment_id(self) -> str:
        if self.name:
            return self.name
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return "exp-" + hashlib.sha256(blob).hexdigest()[:10]


@dataclass(frozen=True)
class RoundConfig:
    round: int
    seeds: tuple[int, ...] = PAPER_SEEDS
    feedback: dict | None = None

    def __post_init__(self):
        if self.round not in (1, 2, 3):
            raise ConfigurationError(f"round must be 1, 2 or 3, got {self.round}")
        if self.round == 1 and self.feedback is not None:
            raise ConfigurationError("round 1 takes no feedback")
        if self.round > 1 and self.feedback is None:
            raise ConfigurationError(f"round {self.round} needs feedback from round {self.round - 1}")
        if self.round == 2 and ("cei" in self.feedback or "satisfactions" in self.feedback):
            raise ConfigurationError("round 2 feedback is energy KPIs only")
        if self.round == 3 and not ("cei" in self.feedback and "satisfactions" in self.feedback):
            raise ConfigurationError("round 3 feedback must include CEI and per-profile satisfactions")


def _profile_line(p: OccupantProfile) -> str:
    lo, hi = p.age_range
    return (f"- {p.id} (age {lo}-{hi}, sex {p.sex}): preferred {p.t_min:.1f}-{p.t_max:.1f} C, "
            f"flexibility +/-{p.flex:.1f} C")


def build_prompt(config: RoundConfig, profiles: Sequence[OccupantProfile]) -> str:
    r = config.round
    lines = [
        "You are the reward engineer for a reinforcement-learning controller of a residential "
        "district (five buildings with cooling, rooftop solar and batteries).",
        f"Refinement round: {r}",
        "",
        "The controller maximises the per-step reward",
        "  R = -(cost*KPI_cost + carbon*KPI_carbon + solar*KPI_solar + soc*KPI_soc + equity*KPI_equity)",
        "where each energy KPI is normalised to a rule-based baseline (1.0 = baseline, lower is better):",
        "- KPI_cost: cost of electricity purchased from the grid",
        "- KPI_carbon: carbon emissions of grid electricity",
        "- KPI_solar: solar self-consumption shortfall (local generation spilled)",
        "- KPI_soc: battery state-of-charge deviation from its target",
    ]
    if r == 3:
        lines.append(
            "- KPI_equity: Comfort Equity Index, 1 minus Jain's fairness index of occupant-group "
            "satisfaction (0 = all groups equally satisfied)"
        )
    else:
        lines.append("- KPI_equity: reserved channel, not used in this round")
    lines.append("")

    if r == 1:
        lines.append("Objective: minimise electricity cost and carbon emissions, use local solar "
                     "generation well and keep the batteries healthy.")
        lines.append("Set the equity weight to 0.0.")
    elif r == 2:
        lines.append("Results of the previous round (mean and std over seeds):")
        lines.append(json.dumps(config.feedback, sort_keys=True))
        lines.append("Refine the weights to further optimise cost and carbon emissions.")
        lines.append("Constraint: the equity weight must equal 0.0.")
    else:
        fb = config.feedback
        lines.append("Results of the previous round (mean and std over seeds):")
        lines.append(json.dumps(fb, sort_keys=True))
        lines.append(f"Current Comfort Equity Index (CEI): {fb['cei']['mean']}")
        lines.append("Per-profile comfort satisfaction (0-1):")
        for pid, v in fb["satisfactions"].items():
            lines.append(f"- {pid}: {v['mean']}")
        lines.append("Occupant profiles sharing the district:")
        lines.extend(_profile_line(p) for p in profiles)
        lines.append("Rebalance the weights to reduce the CEI and raise the satisfaction of the "
                     "worst-off profile while keeping energy cost low. The equity weight may be "
                     "non-zero in this round.")
    lines.append("")
    lines.append(FORMAT_INSTRUCTION)
    return "\n".join(lines)


def _first_weight_object(text: str) -> dict | None:
    decoder = json.JSONDecoder()
    pos = text.find("{")
    while pos != -1:
        try:
            obj, _ = decoder.raw_decode(text, pos)
        except json.JSONDecodeError:
            obj = None
        if isinstance(obj, dict) and all(k in obj for k in WEIGHT_KEYS):
            return obj
        pos = text.find("{", pos + 1)
    return None


def parse_weights(text: str, round_no: int, provenance: str = "scripted") -> RewardWeights:
    """First JSON object carrying all five weight keys, validated for ``round_no``."""
    obj = _first_weight_object(text)
    if obj is None:
        raise ParseError("no JSON object with keys " + ", ".join(WEIGHT_KEYS), text)
    try:
        vals = {}
        for k in WEIGHT_KEYS:
            v = obj[k]
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise WeightError(f"weight {k!r} is not a number: {v!r}")
            vals[k] = float(v)
        return validate_weights(RewardWeights(**vals, round=round_no, provenance=provenance))
    except WeightError as e:
        raise ProtocolViolationError(str(e)) from e


def _mean_std(values) -> dict:
    a = np.asarray(values, dtype=float)
    std = float(a.std(ddof=1)) if a.size > 1 else 0.0
    return {"mean": float(a.mean()), "std": std}


@dataclass
class RoundResult:
    round: int
    weights: RewardWeights | None
    reports: list[EvaluationReport]
    prompt: str
    transcript: list[dict]
    engineer_calls: int
    feedback: dict | None = None
    status: str = "complete"
    error: str | None = None

    @property
    def description(self) -> str:
        return ROUND_DESCRIPTIONS[self.round]

    @property
    def jobs(self) -> int:
        return len(self.reports)

    def stats(self) -> dict:
        if not self.reports:
            return {}
        ids = self.reports[0].satisfactions.ids
        sats = {pid: _mean_std([r.satisfactions[pid] for r in self.reports]) for pid in ids}
        worst = min(range(len(ids)), key=lambda i: (sats[ids[i]]["mean"], i))
        return {
            "composite_cost": _mean_std([r.composite_cost for r in self.reports]),
            "cei": _mean_std([r.equity.cei for r in self.reports]),
            "normalized_kpis": {k: _mean_std([getattr(r.normalized, k) for r in self.reports]) for k in KPI_NAMES},
            "satisfactions": sats,
            "worst_profile": ids[worst],
        }

    def summary(self, include_equity: bool) -> dict:
        """Compact feedback for the next round's prompt (4 decimals)."""
        st = self.stats()
        r4 = lambda d: {"mean": round(d["mean"], 4), "std": round(d["std"], 4)}
        out = {
            "round": self.round,
            "composite_cost": r4(st["composite_cost"]),
            "normalized_kpis": {k: r4(v) for k, v in st["normalized_kpis"].items()},
        }
        if include_equity:
            out["cei"] = r4(st["cei"])
            out["satisfactions"] = {k: r4(v) for k, v in st["satisfactions"].items()}
            out["worst_profile"] = st["worst_profile"]
        return out

    def to_dict(self) -> dict:
        return {
            "version": RECORD_VERSION,
            "round": self.round,
            "description": self.description,
            "status": self.status,
            "error": self.error,
            "weights": self.weights.to_record() if self.weights else None,
            "feedback": self.feedback,
            "prompt": self.prompt,
            "transcript": self.transcript,
            "engineer_calls": self.engineer_calls,
            "jobs": self.jobs,
            "reports": [r.to_dict() for r in self.reports],
            "stats": self.stats(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoundResult":
        return cls(
            round=d["round"],
            weights=RewardWeights.from_record(d["weights"]) if d.get("weights") else None,
            reports=[EvaluationReport.from_dict(r) for r in d["reports"]],
            prompt=d["prompt"],
            transcript=d["transcript"],
            engineer_calls=d["engineer_calls"],
            feedback=d.get("feedback"),
            status=d.get("status", "complete"),
            error=d.get("error"),
        )


# per-process environment cache for seed jobs
_ENV_CACHE: dict = {}


def _environment(env_cfg: EnvConfig, traces_path: str | None) -> MicroDistrict:
    key = (env_cfg, traces_path)
    if key not in _ENV_CACHE:
        traces = ExogenousTraces.from_csv(traces_path) if traces_path else synthetic_traces(env_cfg)
        _ENV_CACHE[key] = MicroDistrict(traces, env_cfg)
    return _ENV_CACHE[key]


def train_and_evaluate(seed: int, weights: RewardWeights, config: ExperimentConfig) -> EvaluationReport:
    """One seed job: RBC reference, training, greedy evaluation."""
    env = _environment(config.env, config.traces_path)
    baseline = rbc_trace(env, seed, config.rbc)
    shaper = RewardShaper(weights, ProxyReference(baseline, config.proxy_mode), config.profiles)
    policy = train(env, shaper, config.agent, seed)
    return evaluate(policy, env, config.profiles, seed, shaper, baseline)


def _request_weights(engineer: Engineer, prompt: str, round_no: int, max_repairs: int):
    messages = [{"role": "system", "content": SYSTEM_MESSAGE}, {"role": "user", "content": prompt}]
    calls = 0
    while True:
        reply = engineer.complete(list(messages), round_no)
        calls += 1
        messages.append({"role": "assistant", "content": reply})
        try:
            weights = parse_weights(reply, round_no, engineer.provenance)
            return weights, messages, calls
        except (ParseError, ProtocolViolationError) as e:
            log.warning("round %d: engineer reply rejected: %s", round_no, e)
            if calls > max_repairs:
                raise RoundFailedError(
                    round_no, f"engineer reply rejected after {max_repairs} repairs: {e}",
                    partial={"transcript": messages, "engineer_calls": calls},
                ) from e
            messages.append({
                "role": "user",
                "content": f"Your previous answer was rejected: {e}\n\n{FORMAT_INSTRUCTION}",
            })


def run_round(config: RoundConfig, engineer: Engineer, experiment: ExperimentConfig,
              job: Callable = train_and_evaluate) -> RoundResult:
    prompt = build_prompt(config, experiment.profiles)
    weights, transcript, calls = _request_weights(engineer, prompt, config.round, experiment.max_repairs)
    result = RoundResult(config.round, weights, [], prompt, transcript, calls, config.feedback)
    try:
        if experiment.max_workers > 1 and len(config.seeds) > 1:
            with ProcessPoolExecutor(max_workers=min(experiment.max_workers, len(config.seeds))) as pool:
                futures = [pool.submit(job, s, weights, experiment) for s in config.seeds]
                for f in futures:
                    result.reports.append(f.result())
        else:
            for s in config.seeds:
                result.reports.append(job(s, weights, experiment))
    except EquityRewardError as e:
        result.status, result.error = "failed", str(e)
        raise RoundFailedError(config.round, f"seed job failed: {e}", partial=result) from e
    return result


@dataclass
class ExperimentResult:
    experiment_id: str
    config: ExperimentConfig
    rounds: list[RoundResult]

    @property
    def total_jobs(self) -> int:
        return sum(r.jobs for r in self.rounds)

    def satisfaction_change(self) -> list[dict]:
        if len(self.rounds) < 3:
            return []
        by_round = [r.stats()["satisfactions"] for r in self.rounds]
        rows = []
        for p in self.config.profiles:
            r1, r3 = by_round[0][p.id]["mean"], by_round[2][p.id]["mean"]
            rows.append({
                "profile": p.id,
                "r1": r1,
                "r2": by_round[1][p.id]["mean"],
                "r3": r3,
                "change": r3 - r1,
                "relative": (r3 - r1) / r1 if r1 > 0 else None,
            })
        return rows

    def to_dict(self) -> dict:
        status = "complete" if len(self.rounds) == 3 and all(r.status == "complete" for r in self.rounds) else "incomplete"
        return {
            "version": RECORD_VERSION,
            "experiment_id": self.experiment_id,
            "status": status,
            "config": self.config.to_dict(),
            "profiles": [p.to_dict() for p in self.config.profiles],
            "rounds": [f"round{r.round}.json" for r in self.rounds],
            "round_summaries": [
                {"round": r.round, "description": r.description, "status": r.status,
                 "weights": r.weights.to_record() if r.weights else None, **r.stats()}
                for r in self.rounds
            ],
            "satisfaction_change": self.satisfaction_change(),
            "total_jobs": self.total_jobs,
        }


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_record(result: ExperimentResult, out_dir) -> Path:
    """Write ``<out_dir>/<experiment-id>/round<k>.json`` and ``experiment.json``."""
    root = Path(out_dir) / result.experiment_id
    root.mkdir(parents=True, exist_ok=True)
    for r in result.rounds:
        (root / f"round{r.round}.json").write_text(_dump(r.to_dict()))
    (root / "experiment.json").write_text(_dump(result.to_dict()))
    return root


def run_experiment(config: ExperimentConfig, engineer: Engineer, out_dir=None,
                   job: Callable = train_and_evaluate) -> ExperimentResult:
    """Rounds 1-3 in order with feedback chaining.

    A failing round stops the experiment; rounds finished so far (and the
    partial failed round) are written to ``out_dir`` before re-raising.
    """
    result = ExperimentResult(config.experiment_id(), config, [])
    feedback = None
    for r in (1, 2, 3):
        rc = RoundConfig(r, config.seeds, feedback)
        try:
            rr = run_round(rc, engineer, config, job)
        except RoundFailedError as e:
            if isinstance(e.partial, RoundResult):
                result.rounds.append(e.partial)
            if out_dir is not None:
                write_record(result, out_dir)
            raise
        result.rounds.append(rr)
        if out_dir is not None:
            write_record(result, out_dir)
        log.info("round %d done: cost %.3f, CEI %.4f", r, rr.stats()["composite_cost"]["mean"], rr.stats()["cei"]["mean"])
        # round 2 gets energy KPIs only; round 3 also gets equity data
        feedback = rr.summary(include_equity=(r + 1 == 3))
    return result


def load_round(path) -> RoundResult:
    return RoundResult.from_dict(json.loads(Path(path).read_text()))
