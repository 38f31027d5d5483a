"""
Graph filters on a small sensor network
=======================================

Five sites on a ring with one chord. We look at the Laplacian spectrum, apply
a smoothing Chebyshev filter to a noisy signal and compare it with the
propagation matrix used inside the model.
"""

import numpy as np

from cgae.graph import Graph, chebyshev_filter, first_order_filter, normalized_laplacian, renormalized_propagation

w = np.zeros((5, 5))
for i in range(5):
    w[i, (i + 1) % 5] = w[(i + 1) % 5, i] = 1.0
w[0, 2] = w[2, 0] = 0.5
g = Graph(w)

lap, spectrum = normalized_laplacian(g)
print("Laplacian eigenvalues:", np.round(spectrum.eigenvalues, 4))
# the smallest one is zero because the graph is connected
print("largest eigenvalue (gamma_max):", round(spectrum.gamma_max, 4))

# A smooth signal plus noise. A low-pass response damps the high eigenmodes.
rng = np.random.default_rng(0)
smooth = np.array([1.0, 1.1, 1.2, 1.1, 1.0])[:, None]
noisy = smooth + 0.3 * rng.normal(size=(5, 1))
lowpass = [0.5, -0.5]  # response 0.5 - 0.5 x: one at gamma = 0, zero at gamma_max
filtered = chebyshev_filter(g, noisy, lowpass)
print("noisy   :", np.round(noisy.ravel(), 3))
print("filtered:", np.round(filtered.ravel(), 3))

# With gamma_max pinned at 2 a first-order filter collapses to delta (I + D^-1/2 A D^-1/2)
delta = 0.7
print("first-order identity gap:",
      np.abs(chebyshev_filter(g, noisy, [delta, -delta], gamma_max=2.0) - first_order_filter(g, noisy, delta)).max())

# Adding self loops before normalizing keeps the spectrum inside [-1, 1]
m = renormalized_propagation(g)
print("propagation eigenvalues:", np.round(np.linalg.eigvalsh(m), 4))
