"""
Three rounds of reward refinement
=================================

A scripted reward engineer proposes weights for three rounds.  Rounds 1
and 2 see energy results only and must keep the equity weight at zero.
Round 3 also sees the CEI and per-group satisfaction and may weight equity.
Each round trains one learner per seed and evaluates it against the
rule-based baseline.

Two seeds keep this under a minute; the full run uses five.
"""

import tempfile

from equity_reward.engineers import ScriptedEngineer
from equity_reward.refinement import ExperimentConfig, run_experiment
from equity_reward.reporting import report_from_dir

config = ExperimentConfig(name="walkthrough", seeds=(42, 0))
out = tempfile.mkdtemp()
result = run_experiment(config, ScriptedEngineer(), out)

###############################################################################
# What the engineer saw in round 3 (the tail of the prompt).

print(result.rounds[2].prompt.split("Occupant profiles")[0][-600:])

###############################################################################
# Results table, satisfaction change and weight evolution.

bundle = report_from_dir(f"{out}/walkthrough")
for row in bundle.results_table:
    print(f"round {row['round']} {row['description']:17s} cost {row['cost_display']}  "
          f"CEI {row['cei_mean']:.4f}  worst {row['worst_profile']}")
print()
for row in bundle.satisfaction_table:
    print(f"{row['profile']:17s} {row['r1']:.3f} -> {row['r3']:.3f}  {row['display']}")
print()
for row in bundle.weight_series:
    print(row)
print(f"\n{result.total_jobs} train/evaluate jobs, records in {out}/walkthrough")
