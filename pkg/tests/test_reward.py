import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from equity_reward.comfort import DEFAULT_PROFILES, SatisfactionVector
from equity_reward.env import EnvConfig, ExogenousTraces, MicroDistrict, StepOutcome, zero_policy
from equity_reward.errors import DegenerateBaselineError, InputError, ProtocolViolationError, WeightError
from equity_reward.kpi import aggregate, normalize, rbc_trace
from equity_reward.reward import (
    ProxyReference,
    RewardShaper,
    RewardWeights,
    step_kpi_proxies,
    step_reward,
    validate_weights,
    weights_from_json,
)

from conftest import PAPER_SEEDS

IDS = [p.id for p in DEFAULT_PROFILES]
EQUAL = SatisfactionVector.from_arrays(IDS, [1, 1, 1, 1])
UNIT = {"cost": 1.0, "carbon": 1.0, "solar": 1.0, "soc": 1.0}
w01 = st.one_of(st.just(0.0), st.floats(min_value=1e-3, max_value=5))


def test_validate_weights_examples():
    with pytest.raises(ProtocolViolationError):
        validate_weights(RewardWeights(1, 1, 0, 0, 0.15, round=2))
    ok = validate_weights(RewardWeights(1, 0.8, 0.6, 0.5, 0.15, round=3))
    assert ok.equity == ok.equity_w == 0.15
    zero = validate_weights(RewardWeights(round=1))
    assert zero.is_degenerate


@pytest.mark.parametrize("bad", [-0.1, float("nan"), float("inf"), True])
def test_validate_rejects_bad_values(bad):
    with pytest.raises(WeightError):
        validate_weights(RewardWeights(cost=bad, round=3))


def test_validate_round_and_provenance():
    with pytest.raises(WeightError):
        validate_weights(RewardWeights(round=4))
    with pytest.raises(WeightError):
        validate_weights(RewardWeights(round=1, provenance="oracle"))


def test_step_reward_examples():
    assert step_reward(RewardWeights(round=1), UNIT, EQUAL).total == 0.0
    r = step_reward(RewardWeights(cost=1.0, round=1), {**UNIT, "cost": 1.218}, EQUAL)
    assert r.total == pytest.approx(-1.218)
    assert step_reward(RewardWeights(equity=1.0, round=3), UNIT, EQUAL).total == 0.0


def test_step_reward_rejects_bad_proxy():
    with pytest.raises(InputError):
        step_reward(RewardWeights(cost=1.0, round=1), {**UNIT, "cost": float("nan")}, EQUAL)


@given(st.tuples(w01, w01, w01, w01, w01), st.tuples(w01, w01, w01, w01),
       st.lists(st.floats(min_value=0, max_value=1), min_size=4, max_size=4))
def test_total_is_negative_sum_of_components(w, p, s):
    weights = RewardWeights(*w, round=3)
    proxies = dict(zip(("cost", "carbon", "solar", "soc"), p))
    r = step_reward(weights, proxies, SatisfactionVector.from_arrays(IDS, s))
    assert r.total == pytest.approx(-sum(r.components.values()), abs=1e-12)


@given(st.tuples(w01, w01, w01, w01, w01), st.tuples(w01, w01, w01, w01), st.floats(min_value=0.01, max_value=3),
       st.sampled_from(["cost", "carbon", "solar", "soc"]))
def test_monotone_in_each_proxy(w, p, bump, key):
    weights = RewardWeights(*w, round=3)
    proxies = dict(zip(("cost", "carbon", "solar", "soc"), p))
    base = step_reward(weights, proxies, EQUAL).total
    more = step_reward(weights, {**proxies, key: proxies[key] + bump}, EQUAL).total
    assert more <= base + 1e-12
    if getattr(weights, key) > 0:
        assert more < base


@given(st.tuples(w01, w01, w01, w01, w01), st.tuples(w01, w01, w01, w01, w01), st.tuples(w01, w01, w01, w01))
def test_linear_in_weights(a, b, p):
    proxies = dict(zip(("cost", "carbon", "solar", "soc"), p))
    sat = SatisfactionVector.from_arrays(IDS, [0.9, 0.1, 0.5, 0.7])
    ra = step_reward(RewardWeights(*a, round=3), proxies, sat).total
    rb = step_reward(RewardWeights(*b, round=3), proxies, sat).total
    rab = step_reward(RewardWeights(*(x + y for x, y in zip(a, b)), round=3), proxies, sat).total
    assert rab == pytest.approx(ra + rb, abs=1e-9)


@given(st.lists(st.floats(min_value=0, max_value=1), min_size=4, max_size=4), st.integers(0, 3), st.integers(0, 3),
       st.floats(min_value=0, max_value=1))
def test_equalization_never_decreases_reward(s, i, j, lam):
    weights = RewardWeights(equity=0.15, round=3)
    before = step_reward(weights, UNIT, SatisfactionVector.from_arrays(IDS, s)).total
    t = list(s)
    m = (s[i] + s[j]) / 2
    t[i], t[j] = s[i] + lam * (m - s[i]), s[j] + lam * (m - s[j])
    after = step_reward(weights, UNIT, SatisfactionVector.from_arrays(IDS, t)).total
    assert after >= before - 1e-12


def one_building_reference(values):
    """Reference whose cost increments are ``values`` and other channels 1."""
    h = len(values)
    env = MicroDistrict(
        ExogenousTraces(np.full(h, 25.0), np.zeros((h, 1)), np.ones(h), np.ones(h)),
        EnvConfig(n_buildings=1, pv_peak_kw=(1.0,), horizon=h),
    )
    tr = env.run_episode(zero_policy, 0)
    tr.cost[:, 0] = values
    tr.carbon[:] = 1.0
    tr.solar_spilled[:] = 1.0
    tr.soc_deviation[:] = 1.0
    return tr


def outcome(cost):
    one = np.ones(1)
    return StepOutcome(one, one, one, np.array([cost]), one, one, np.array([25.0]))


def test_per_step_proxy_examples():
    ref = ProxyReference(one_building_reference([0.8, 0.0, 0.4]), mode="per_step")
    assert step_kpi_proxies(outcome(0.8), ref, 0)["cost"] == pytest.approx(1.0)
    assert step_kpi_proxies(outcome(0.0), ref, 0)["cost"] == 0.0
    # RBC zero at t=1, episode mean 0.4: fallback
    assert step_kpi_proxies(outcome(0.6), ref, 1)["cost"] == pytest.approx(1.5)


def test_degenerate_reference():
    with pytest.raises(DegenerateBaselineError) as exc:
        ProxyReference(one_building_reference([0.0, 0.0]))
    assert exc.value.component == "cost"


def test_episode_mean_proxies_reproduce_episode_kpis(district):
    for seed in PAPER_SEEDS[:2]:
        ref_trace = rbc_trace(district, seed)
        ref = ProxyReference(ref_trace)
        agent = district.run_episode(zero_policy, seed)
        nk = normalize(aggregate(agent), aggregate(ref_trace))
        sums = {"cost": 0.0, "carbon": 0.0, "solar": 0.0, "soc": 0.0}
        for t in range(len(agent)):
            for k, v in step_kpi_proxies(agent.outcome(t), ref, t).items():
                sums[k] += v
        h = len(agent)
        for key, name in (("cost", "cost"), ("carbon", "carbon"), ("solar", "solar_shortfall"), ("soc", "soc_deviation")):
            assert sums[key] / h == pytest.approx(getattr(nk, name), rel=0.05)


def test_building_components_average_to_district_proxy(district):
    ref_trace = rbc_trace(district, 0)
    shaper = RewardShaper(RewardWeights(1, 1, 1, 1, 0, round=1), ProxyReference(ref_trace), DEFAULT_PROFILES)
    agent = district.run_episode(zero_policy, 0)
    for t in (0, 12, 100):
        o = agent.outcome(t)
        comps = shaper.building_components(o.indoor_temp, o.cost, o.carbon, o.solar_spilled, o.soc_deviation)
        proxies = step_kpi_proxies(o, shaper.reference, t)
        for i, key in enumerate(("cost", "carbon", "solar", "soc")):
            assert comps[:, i].mean() == pytest.approx(proxies[key], rel=1e-12)


def test_shaper_rejects_invalid_weights(district):
    ref = ProxyReference(rbc_trace(district, 0))
    with pytest.raises(ProtocolViolationError):
        RewardShaper(RewardWeights(equity=0.1, round=1), ref, DEFAULT_PROFILES)


def test_weights_from_json():
    w = weights_from_json(json.dumps({"cost": 1, "carbon": 0.8, "solar": 0.3, "soc": 0.3, "equity": 0}), 1)
    assert w.to_dict() == {"cost": 1, "carbon": 0.8, "solar": 0.3, "soc": 0.3, "equity": 0}
    assert RewardWeights.from_record(w.to_record()) == w
