"""
Scoring a probabilistic forecast
================================

Two ensembles forecast the same standard normal truth. One is calibrated,
the other is too narrow. CRPS, reliability and interval width tell them apart.
"""

import numpy as np

from cgae.metrics import crps_empirical, evaluate

rng = np.random.default_rng(7)
truth = rng.normal(size=(400, 1))
calibrated = rng.normal(size=(400, 200, 1))
narrow = 0.4 * rng.normal(size=(400, 200, 1))

# one instance first
print("CRPS of one calibrated forecast:", round(crps_empirical(calibrated[0, :, 0], truth[0, 0]), 4))
print("CRPS of a point mass on the truth:", crps_empirical([truth[0, 0]], truth[0, 0]))

for name, ens in (("calibrated", calibrated), ("narrow", narrow)):
    rep = evaluate({1: ens}, {1: truth})
    print(f"\n{name}: mean CRPS {rep.crps[1]:.3f}")
    for c in (0.5, 0.9):
        print(f"  {int(c * 100)}% interval: reliability bias {rep.reliability[1][c]:+.1f} pp,"
              f" width {rep.piaw[1][c]:.2f}")
