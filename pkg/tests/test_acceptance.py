"""Acceptance criteria, one test each.

Every test records a one-line PASS/FAIL verdict in ``RESULTS``; conftest
prints them at the end of the session.  The scripted end-to-end experiment
runs twice (once more for the determinism check) and is shared by the
protocol, directional and determinism criteria.
"""

import json
import random
import shutil
import time

import numpy as np
import pytest

from equity_reward.comfort import DEFAULT_PROFILES, SatisfactionVector, cei, jain_index, satisfaction
from equity_reward.engineers import ScriptedEngineer
from equity_reward.env import zero_policy
from equity_reward.agent import evaluate
from equity_reward.kpi import RuleBasedController
from equity_reward.profiles import ComfortRecord, ProfileQuery, build_profile
from equity_reward.refinement import ExperimentConfig, RoundConfig, run_experiment, run_round, train_and_evaluate
from equity_reward.reporting import format_change, report_from_dir

from conftest import PAPER_SEEDS

IDS = [p.id for p in DEFAULT_PROFILES]
RESULTS: list[str] = []


def verdict(name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


class CountingJob:
    def __init__(self):
        self.calls = 0

    def __call__(self, seed, weights, config):
        self.calls += 1
        return train_and_evaluate(seed, weights, config)


@pytest.fixture(scope="module")
def scripted_runs(tmp_path_factory):
    runs = []
    for i in range(2):
        out = tmp_path_factory.mktemp(f"run{i}")
        eng, job = ScriptedEngineer(), CountingJob()
        t0 = time.perf_counter()
        res = run_experiment(ExperimentConfig(name="desk"), eng, out, job)
        runs.append({"result": res, "engineer": eng, "jobs": job.calls, "dir": out / "desk",
                     "seconds": time.perf_counter() - t0})
    return runs


def test_cei_reference_values():
    r1 = cei(SatisfactionVector.from_arrays(IDS, [0.85, 0.12, 0.78, 0.65]))
    r3 = cei(SatisfactionVector.from_arrays(IDS, [1.00, 0.80, 1.00, 1.00]))
    ok = (abs(r1.cei - 0.19) <= 0.005 and abs(r3.cei - 0.0082) <= 0.0005
          and r1.worst_profile == r3.worst_profile == "Elderly Female")
    verdict("CEI reference-value regression", ok,
            f"cei R1={r1.cei:.4f} (0.19±0.005), R3={r3.cei:.5f} (0.0082±0.0005), worst={r1.worst_profile}/{r3.worst_profile}")


def test_satisfaction_property_suite():
    t0 = time.perf_counter()
    temps = np.round(np.arange(150, 351) / 10.0, 1)
    failures = []
    for p in DEFAULT_PROFILES:
        s = np.array([satisfaction(p, float(t)) for t in temps])
        inside = (temps >= p.t_min) & (temps <= p.t_max)
        delta = np.where(temps < p.t_min, p.t_min - temps, temps - p.t_max)
        if not np.all((s >= 0) & (s <= 1)):
            failures.append(f"{p.id}: out of [0,1]")
        if not np.array_equal(s == 1.0, inside):
            failures.append(f"{p.id}: value 1 not exactly on range")
        if not np.array_equal(s[~inside] == 0.0, delta[~inside] >= p.flex - 1e-9):
            failures.append(f"{p.id}: zero set mismatch")
        if np.max(np.abs(np.diff(s))) > 0.1 / p.flex + 1e-9:
            failures.append(f"{p.id}: Lipschitz bound broken")
    dt = time.perf_counter() - t0
    verdict("Satisfaction property suite", not failures and dt < 1.0,
            f"4 profiles x {len(temps)} temps, {dt * 1000:.0f} ms{'; ' + '; '.join(failures) if failures else ''}")


def test_jain_cei_invariants():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240601)
    bad = 0
    for _ in range(10_000):
        n = int(rng.integers(2, 9))
        x = rng.random(n)
        j = jain_index(x)
        c = 1.0 - j
        if abs(jain_index(x * rng.uniform(0.01, 100)) - j) > 1e-12:
            bad += 1
        if abs(jain_index(rng.permutation(x)) - j) > 1e-12:
            bad += 1
        if not (-1e-12 <= c <= 1 - 1 / n + 1e-12):
            bad += 1
        i, k = rng.choice(n, 2, replace=False)
        y = x.copy()
        lam = rng.random()
        m = (x[i] + x[k]) / 2
        y[i], y[k] = x[i] + lam * (m - x[i]), x[k] + lam * (m - x[k])
        if 1.0 - jain_index(y) > c + 1e-12:
            bad += 1
    dt = time.perf_counter() - t0
    verdict("Jain/CEI invariants", bad == 0 and dt < 5.0, f"10000 vectors, {bad} violations, {dt:.2f} s")


def _brute_quantile(xs, p):
    xs = sorted(xs)
    h = (len(xs) - 1) * p
    lo, hi = int(np.floor(h)), int(np.ceil(h))
    return xs[lo] + (h - lo) * (xs[hi] - xs[lo])


def test_quantile_oracle_equivalence():
    rnd = random.Random(99)
    query = ProfileQuery("q", (0, 120), frozenset({"M", "F"}), False, 1.0)
    worst, checked = 0.0, 0
    while checked < 100:
        n = rnd.randint(4, 500)
        recs = [ComfortRecord(rnd.randint(18, 90), rnd.choice("MF"), rnd.uniform(18, 32), rnd.randint(4, 6), False)
                for _ in range(n)]
        temps = [r.air_temp for r in recs]
        p = build_profile(recs, query)
        worst = max(worst, abs(p.t_min - _brute_quantile(temps, 0.25)), abs(p.t_max - _brute_quantile(temps, 0.75)))
        checked += 1
    verdict("Quantile oracle equivalence", worst <= 1e-9, f"{checked} fixtures, max |diff| = {worst:.1e}")


def test_rbc_identity(district):
    ok = True
    for seed in PAPER_SEEDS:
        r = evaluate(RuleBasedController(district), district, DEFAULT_PROFILES, seed)
        ok &= r.normalized.as_array().tolist() == [1.0] * 4 and r.composite_cost == 1.0
    verdict("RBC identity", ok, f"all normalized KPIs and composite cost exactly 1.0 for seeds {list(PAPER_SEEDS)}")


def test_comfort_ceiling(district):
    ok, details = True, []
    for seed in PAPER_SEEDS:
        tr = district.run_episode(zero_policy, seed)
        r = evaluate(zero_policy, district, DEFAULT_PROFILES, seed)
        ef = r.satisfactions["Elderly Female"]
        others = [r.satisfactions[p] for p in IDS if p != "Elderly Female"]
        above = float(np.mean(tr.indoor_temp > 23.8))
        ok &= ef < min(others) and above >= 0.9
        details.append(f"{seed}: EF {ef:.3f} < {min(others):.3f}, {above:.0%} > 23.8")
    verdict("Comfort-ceiling structural property", ok, "; ".join(details))


def test_protocol_conformance(scripted_runs):
    run = scripted_runs[0]
    res, eng = run["result"], run["engineer"]
    equity_12 = [r.weights.equity_w for r in res.rounds[:2]]
    persisted = [json.loads((run["dir"] / f"round{k}.json").read_text())["weights"]["equity"] for k in (1, 2)]

    bad = '{"cost": 1.2, "carbon": 1.0, "solar": 0.2, "soc": 0.2, "equity": 0.15}'
    violator = ScriptedEngineer(responses={2: [bad]})
    feedback = res.rounds[0].summary(include_equity=False)
    stub = lambda seed, w, cfg: res.rounds[1].reports[0]
    repaired = run_round(RoundConfig(2, (42,), feedback), violator, ExperimentConfig(seeds=(42,)), stub)
    violation_seen = "round 2 requires equity weight 0.0" in repaired.transcript[3]["content"]

    ok = (run["jobs"] == 15 == res.total_jobs and eng.calls_by_round == {1: 1, 2: 1, 3: 1}
          and equity_12 == persisted == [0.0, 0.0] and violation_seen and repaired.engineer_calls == 2
          and repaired.weights.equity == 0.0)
    verdict("Protocol conformance", ok,
            f"{run['jobs']} jobs, calls per round {eng.calls_by_round}, persisted R1/R2 equity {persisted}, "
            f"round-2 equity 0.15 -> violation + retry ({repaired.engineer_calls} calls)")


def test_directional_equity(scripted_runs):
    run = scripted_runs[0]
    r1, r3 = run["result"].rounds[0].stats(), run["result"].rounds[2].stats()
    cei1, cei3 = r1["cei"]["mean"], r3["cei"]["mean"]
    sat_ok = all(r3["satisfactions"][p]["mean"] >= r1["satisfactions"][p]["mean"] for p in IDS)
    ok = cei3 < cei1 and sat_ok and run["seconds"] < 300
    sats = ", ".join(f"{p} {r1['satisfactions'][p]['mean']:.3f}->{r3['satisfactions'][p]['mean']:.3f}" for p in IDS)
    verdict("Directional equity result", ok,
            f"mean CEI {cei1:.4f} -> {cei3:.4f}; {sats}; runtime {run['seconds']:.0f} s")


def test_determinism(scripted_runs):
    a, b = scripted_runs
    names = sorted(p.name for p in a["dir"].iterdir())
    same = names == sorted(p.name for p in b["dir"].iterdir()) and all(
        (a["dir"] / n).read_bytes() == (b["dir"] / n).read_bytes() for n in names
    )
    verdict("Determinism", same, f"{len(names)} record files byte-identical across two scripted runs")


def test_reporting_arithmetic(scripted_runs, tmp_path):
    src = scripted_runs[0]["dir"]
    dst = tmp_path / "record"
    shutil.copytree(src, dst)
    for k, v in ((1, 0.12), (3, 0.80)):
        path = dst / f"round{k}.json"
        doc = json.loads(path.read_text())
        for rep in doc["reports"]:
            rep["satisfactions"]["Elderly Female"] = v
        path.write_text(json.dumps(doc))
    row = next(r for r in report_from_dir(dst).satisfaction_table if r["profile"] == "Elderly Female")
    ok = row["display"] == "+0.68 (+567%)" == format_change(0.12, 0.80)
    verdict("Reporting arithmetic", ok, f"Elderly Female change row {row['display']!r}")
