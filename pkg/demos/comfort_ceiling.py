"""
The comfort ceiling in a cooling-dominated district
===================================================

Under summer traces the rule-based controller holds homes near 25.5 C.
That band is comfortable for most groups but sits above the Elderly Female
upper bound of 23.8 C, so that group stays dissatisfied unless the
controller cools much harder than the energy objectives favour.
"""

import numpy as np

from equity_reward.agent import evaluate
from equity_reward.comfort import DEFAULT_PROFILES
from equity_reward.env import MicroDistrict, full_cooling_policy, zero_policy
from equity_reward.kpi import RuleBasedController

env = MicroDistrict.synthetic()
seed = 42
print(f"ambient: mean {env.traces.ambient_temp.mean():.1f} C, "
      f"range {env.traces.ambient_temp.min():.1f}-{env.traces.ambient_temp.max():.1f} C")

###############################################################################
# Three fixed policies.  Normalised KPIs are ratios to the rule-based
# controller, so its own row is exactly 1.

policies = {
    "no cooling": zero_policy,
    "rule-based": RuleBasedController(env),
    "full cooling": full_cooling_policy,
}
ids = [p.id for p in DEFAULT_PROFILES]
print(f"\n{'policy':13s} {'T mean':>6s} {'cost':>6s} " + " ".join(f"{i[:8]:>8s}" for i in ids) + "    CEI")
for name, policy in policies.items():
    r = evaluate(policy, env, DEFAULT_PROFILES, seed)
    sats = " ".join(f"{r.satisfactions[i]:8.3f}" for i in ids)
    print(f"{name:13s} {r.mean_indoor_temp:6.2f} {r.normalized.cost:6.2f} {sats} {r.equity.cei:6.3f}")

###############################################################################
# Share of building-hours above each group's upper bound with no cooling.

trace = env.run_episode(zero_policy, seed)
for p in DEFAULT_PROFILES:
    print(f"{p.id:17s} above t_max {np.mean(trace.indoor_temp > p.t_max):6.1%}")
