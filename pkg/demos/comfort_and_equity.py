"""
Comfort satisfaction and the Comfort Equity Index
=================================================

Each occupant group has a preferred temperature band and a tolerance
beyond it.  Satisfaction is 1 inside the band and falls linearly to 0 over
``flex`` degrees.  The Comfort Equity Index (CEI) is one minus Jain's
fairness index of the group satisfactions.
"""

import numpy as np

from equity_reward.comfort import DEFAULT_PROFILES, SatisfactionVector, cei, satisfaction

# the four built-in groups
for p in DEFAULT_PROFILES:
    print(f"{p.id:17s} {p.t_min:.1f}-{p.t_max:.1f} C  flex {p.flex:.1f}  n={p.sample_size}")

###############################################################################
# Satisfaction across the range a cooled home actually sees.  Note how the
# Elderly Female band ends at 23.8 C while the others stretch to 26-28 C.

temps = np.arange(21.0, 29.01, 0.5)
print("\n  T   " + "  ".join(f"{p.id[:6]:>6s}" for p in DEFAULT_PROFILES))
for t in temps:
    print(f"{t:5.1f} " + "  ".join(f"{satisfaction(p, t):6.2f}" for p in DEFAULT_PROFILES))

###############################################################################
# Two satisfaction vectors: one with a single group left behind, one nearly
# equal.  The worst-off group is reported alongside the index.

ids = [p.id for p in DEFAULT_PROFILES]
for scores in ([0.85, 0.12, 0.78, 0.65], [1.0, 0.8, 1.0, 1.0]):
    r = cei(SatisfactionVector.from_arrays(ids, scores))
    print(f"\nscores {scores}: Jain {r.jain:.4f}, CEI {r.cei:.4f}, worst {r.worst_profile}")

# with four groups the index can never exceed 1 - 1/4
print("max CEI for 4 groups:", cei(SatisfactionVector.from_arrays(ids, [1, 0, 0, 0])).cei)
