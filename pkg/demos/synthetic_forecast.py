"""
A compact end-to-end forecast
=============================

Generate a small synthetic GHI network, train a short model, draw an ensemble
for one test origin and compare it with persistence. The command line
pipeline (``cgae synth`` ... ``cgae evaluate``) does the same thing at full size.
"""

import numpy as np

from cgae.data import SynthConfig, align, synth_generate
from cgae.features import build_examples, select_lags
from cgae.forecasting import empirical_quantiles, generate_ensemble, persistence_ensemble
from cgae.graph import build_graph_from_correlation, renormalized_propagation
from cgae.model import CgaeModel, ModelConfig, fit_output_sigma, train
from cgae.rng import Rng

sites, _ = synth_generate(SynthConfig(nodes=3, days=30, seed=1))
grid, values = align(sites)
split = 48 * 24
print("nodes:", [s.site_id for s in sites], " steps:", grid.size)

lags = select_lags(values[:, :split], 150, tau=0.45)
graph = build_graph_from_correlation(values[:, :split], threshold=0.9)
print(f"{len(lags)} lags, {int((graph.adjacency > 0).sum()) // 2} edges")

scale = float(np.nanmax(values[:, :split]))
train_set, test_set = build_examples(values, lags, horizon=1, test_start=split)
model = CgaeModel(ModelConfig(n=3, F=len(lags), hidden_width=16), renormalized_propagation(graph), scale)
trace = train(model, train_set, epochs=8, rng=Rng(1))
print("loss per epoch:", [round(v, 3) for v in trace.loss])
fit_output_sigma(model, train_set, Rng(2))  # spread of the training residuals

# pick a midday origin from the test split
ex = next(e for e in test_set if e.target.mean() > 0.5 * scale)
ens = generate_ensemble(model, ex.pi, 2000, Rng(3), add_output_noise=True)
pers = persistence_ensemble(values, ex.t, 1)
print("observed      :", np.round(ex.target, 1))
print("CGAE 5/50/95% :", np.round(empirical_quantiles(ens, [0.05, 0.5, 0.95]).values, 1).tolist())
print("persistence 50%:", np.round(np.median(pers.samples, axis=0), 1))
