"""
Choosing input lags by mutual information
=========================================

A clear-sky day repeats every 48 half-hour steps, so the most informative
lags of a diurnal series should be whole days.
"""

import numpy as np

from cgae.data import clear_sky
from cgae.features import build_examples, lagged_mi_curve, select_lags

hours = (np.arange(48 * 30) % 48) / 2.0
x = clear_sky(hours, 1000.0, 6.0, 18.0)

curve = lagged_mi_curve(x, 200)
print("MI at lags 1, 24, 48, 96:", [round(float(curve[l - 1]), 3) for l in (1, 24, 48, 96)])

lags = select_lags(x, 200, tau=0.0)
print("top five lags:", lags.ranked()[:5])

# A realistic threshold keeps a smaller set that still covers the daily cycle.
chosen = select_lags(x, 200, tau=0.9 * curve.max())
print(f"{len(chosen)} lags above 90% of the peak MI, e.g.", list(chosen.lags)[:8])

# Those lags index back from each forecast origin to build training windows
train, test = build_examples(x, chosen, horizon=1, test_start=48 * 25)
print("training windows:", len(train), " test windows:", len(test), " features per node:", train.pis.shape[-1])
