import json

import pytest

from equity_reward.agent import AgentConfig, EvaluationReport
from equity_reward.comfort import DEFAULT_PROFILES, SatisfactionVector, cei
from equity_reward.engineers import ScriptedEngineer
from equity_reward.env import EnvConfig
from equity_reward.errors import (
    ConfigurationError,
    InputError,
    ParseError,
    ProtocolViolationError,
    RoundFailedError,
)
from equity_reward.kpi import KpiVector, NormalizedKpiVector
from equity_reward.refinement import (
    FORMAT_INSTRUCTION,
    ExperimentConfig,
    RoundConfig,
    build_prompt,
    load_round,
    parse_weights,
    run_experiment,
    run_round,
    train_and_evaluate,
)

IDS = [p.id for p in DEFAULT_PROFILES]
R1_FEEDBACK = {"round": 1, "composite_cost": {"mean": 1.218, "std": 0.01}, "normalized_kpis": {}}
R3_FEEDBACK = {
    **R1_FEEDBACK,
    "cei": {"mean": 0.19, "std": 0.01},
    "satisfactions": {pid: {"mean": v, "std": 0.0} for pid, v in zip(IDS, (0.85, 0.12, 0.78, 0.65))},
}


def fake_report(seed, weights, config=None):
    """Deterministic stand-in for a seed job: comfort rises with the equity weight."""
    base = [0.8, 0.1, 0.7, 0.6]
    sat = SatisfactionVector.from_arrays(IDS, [min(1.0, s + weights.equity + 0.001 * seed) for s in base])
    nk = NormalizedKpiVector(1.1 + 0.01 * seed, 1.0, 1.2, 1.0)
    return EvaluationReport(
        seed=seed, raw=KpiVector(1, 1, 1, 1), baseline=KpiVector(1, 1, 1, 1), normalized=nk,
        composite_cost=(nk.cost + nk.solar_shortfall + nk.soc_deviation) / 3, satisfactions=sat, equity=cei(sat),
    )


def failing_job(seed, weights, config=None):
    if seed == 1:
        raise InputError("boom")
    return fake_report(seed, weights)


FAST = ExperimentConfig(name="t")


def test_round_config_invariants():
    with pytest.raises(ConfigurationError):
        RoundConfig(1, feedback=R1_FEEDBACK)
    with pytest.raises(ConfigurationError):
        RoundConfig(3, feedback=R1_FEEDBACK)
    with pytest.raises(ConfigurationError):
        RoundConfig(2, feedback=R3_FEEDBACK)
    with pytest.raises(ConfigurationError):
        RoundConfig(4)
    assert RoundConfig(1).seeds == (42, 0, 1, 123, 456)


def test_round1_prompt_has_no_occupant_info():
    text = build_prompt(RoundConfig(1), DEFAULT_PROFILES)
    for p in DEFAULT_PROFILES:
        assert p.id not in text
    assert "CEI" not in text and "satisfaction" not in text.lower()
    assert "Refinement round: 1" in text
    assert text.endswith(FORMAT_INSTRUCTION)


def test_round2_prompt_constraint():
    text = build_prompt(RoundConfig(2, feedback=R1_FEEDBACK), DEFAULT_PROFILES)
    assert "equity weight must equal 0.0" in text
    assert "1.218" in text
    assert "CEI" not in text
    assert text.endswith(FORMAT_INSTRUCTION)


def test_round3_prompt_equity_data():
    text = build_prompt(RoundConfig(3, feedback=R3_FEEDBACK), DEFAULT_PROFILES)
    assert "0.19" in text
    for pid, v in zip(IDS, ("0.85", "0.12", "0.78", "0.65")):
        assert f"{pid}: {v}" in text
    assert "21.3-23.8" in text
    assert text.endswith(FORMAT_INSTRUCTION)


def test_parse_weights():
    w = parse_weights('{"cost":1.0,"carbon":0.8,"solar":0.3,"soc":0.3,"equity":0.0}', 1)
    assert w.to_dict() == {"cost": 1.0, "carbon": 0.8, "solar": 0.3, "soc": 0.3, "equity": 0.0}
    text = 'Here you go {"note": 1} then {"cost":1,"carbon":1,"solar":0,"soc":0,"equity":0.15} done {"cost": 9}'
    assert parse_weights(text, 3).equity == 0.15


def test_parse_errors():
    with pytest.raises(ParseError) as exc:
        parse_weights("no json here", 1)
    assert exc.value.raw_text == "no json here"
    with pytest.raises(ProtocolViolationError):
        parse_weights('{"cost":1,"carbon":1,"solar":0,"soc":0,"equity":0.15}', 2)
    with pytest.raises(ProtocolViolationError):
        parse_weights('{"cost":-1,"carbon":1,"solar":0,"soc":0,"equity":0}', 1)
    with pytest.raises(ProtocolViolationError):
        parse_weights('{"cost":"high","carbon":1,"solar":0,"soc":0,"equity":0}', 1)


def test_run_round_single_call():
    eng = ScriptedEngineer()
    r = run_round(RoundConfig(1), eng, FAST, fake_report)
    assert eng.calls == 1 and r.engineer_calls == 1
    assert r.jobs == 5 and r.weights.equity_w == 0.0
    assert r.transcript[-1]["role"] == "assistant"
    st = r.stats()
    assert st["worst_profile"] == "Elderly Female"
    assert st["cei"]["mean"] == pytest.approx(sum(x.equity.cei for x in r.reports) / 5)


def test_round3_weights():
    r = run_round(RoundConfig(3, feedback=R3_FEEDBACK), ScriptedEngineer(), FAST, fake_report)
    assert r.weights.equity_w == 0.15 and r.weights.provenance == "scripted"


def test_protocol_violation_is_repaired():
    bad = '{"cost":1.2,"carbon":1.0,"solar":0.2,"soc":0.2,"equity":0.15}'
    eng = ScriptedEngineer(responses={2: [bad]})
    r = run_round(RoundConfig(2, feedback=R1_FEEDBACK), eng, FAST, fake_report)
    assert r.engineer_calls == 2 and r.weights.equity == 0.0
    assert "rejected" in r.transcript[3]["content"]


def test_repairs_are_bounded():
    eng = ScriptedEngineer(responses={1: ["nope"] * 5})
    with pytest.raises(RoundFailedError):
        run_round(RoundConfig(1), eng, FAST, fake_report)
    assert eng.calls == 3


def test_seed_failure_keeps_partial_results():
    with pytest.raises(RoundFailedError) as exc:
        run_round(RoundConfig(1), ScriptedEngineer(), FAST, failing_job)
    partial = exc.value.partial
    assert [r.seed for r in partial.reports] == [42, 0]
    assert partial.status == "failed"


def test_experiment_chaining_and_persistence(tmp_path):
    eng = ScriptedEngineer()
    res = run_experiment(FAST, eng, tmp_path, fake_report)
    assert res.total_jobs == 15 and eng.calls_by_round == {1: 1, 2: 1, 3: 1}
    assert res.rounds[1].feedback["round"] == 1 and "cei" not in res.rounds[1].feedback
    assert res.rounds[2].feedback["cei"]["mean"] == round(res.rounds[1].stats()["cei"]["mean"], 4)
    root = tmp_path / "t"
    assert sorted(p.name for p in root.iterdir()) == ["experiment.json", "round1.json", "round2.json", "round3.json"]
    for k in (1, 2):
        assert json.loads((root / f"round{k}.json").read_text())["weights"]["equity"] == 0.0
    doc = json.loads((root / "experiment.json").read_text())
    assert doc["status"] == "complete" and doc["total_jobs"] == 15
    ef = next(r for r in doc["satisfaction_change"] if r["profile"] == "Elderly Female")
    assert ef["change"] == pytest.approx(ef["r3"] - ef["r1"])
    back = load_round(root / "round3.json")
    assert back.to_dict() == res.rounds[2].to_dict()


def test_failed_round_persists_completed_rounds(tmp_path):
    eng = ScriptedEngineer(responses={2: ["garbage"] * 3})
    with pytest.raises(RoundFailedError):
        run_experiment(FAST, eng, tmp_path, fake_report)
    root = tmp_path / "t"
    assert (root / "round1.json").exists() and not (root / "round3.json").exists()
    assert json.loads((root / "experiment.json").read_text())["status"] == "incomplete"


def test_experiment_config_json(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps({"seeds": [42], "agent": {"training_steps": 100}, "env": {"horizon": 48}}))
    cfg = ExperimentConfig.load(path)
    assert cfg.seeds == (42,) and cfg.agent.training_steps == 100 and cfg.agent.learning_rate == 0.05
    assert cfg.env.horizon == 48
    assert cfg.experiment_id().startswith("exp-")
    assert ExperimentConfig.from_dict(cfg.to_dict()).experiment_id() == cfg.experiment_id()
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigurationError):
        ExperimentConfig(seeds=(1, 1))


def test_real_jobs_in_worker_processes(tmp_path):
    cfg = ExperimentConfig(
        name="mp", seeds=(42, 0), env=EnvConfig(horizon=48), max_workers=2,
        agent=AgentConfig(training_steps=300, batch_size=32, learning_rate=0.05),
    )
    parallel = run_round(RoundConfig(1, cfg.seeds), ScriptedEngineer(), cfg)
    serial = run_round(RoundConfig(1, cfg.seeds), ScriptedEngineer(), ExperimentConfig(**{**cfg.__dict__, "max_workers": 1}))
    assert [r.to_dict() for r in parallel.reports] == [r.to_dict() for r in serial.reports]
    assert train_and_evaluate(42, parallel.weights, cfg).to_dict() == parallel.reports[0].to_dict()
