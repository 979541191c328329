"""A fair game that makes money, and a price that drifts down while looking driftless.

Run with ``python3 demos/fair_game_and_bubbles.py``.
"""
import numpy as np

from bubblelab import PowerLawParams, RegimeChainSpec, RngSpec, classify_power_exponent
from bubblelab.simkit import doubling_summary, simulate_doubling, terminal_prices

# Double-or-nothing with at most 4 rounds: wins $1 with probability 15/16.
w = simulate_doubling(4, 200_000, RngSpec(0))
s = doubling_summary(w, 4)
print(f"doubling: win fraction {s['win_fraction']:.4f} (15/16 = {15 / 16:.4f}), mean wealth {s['mean']:+.4f}")

# dS = g0 * S**g1 dW. Exponent above 1 gives a strict local martingale.
for g0, g1 in [(0.3, 0.9), (2.0, 2.0)]:
    cls = classify_power_exponent(g1)
    s_T = terminal_prices(RegimeChainSpec.single(PowerLawParams(g0, g1)), 1.0, 1000, 1e-4, 20_000, RngSpec(1))
    se = s_T.std(ddof=1) / np.sqrt(s_T.size)
    print(f"g1={g1}: {cls.name}  E[S_T] = {s_T.mean():.4f} +- {se:.4f} after 0.1 years (S_0 = 1)")
