#!/usr/bin/env python3
"""Walk through the road-graph intake and the propagation matrix.

The forecaster never multiplies by the raw adjacency: every spatial step
uses the symmetric normalization of A with self-loops added, which keeps
the spectrum inside [-1, 1] so repeated propagation cannot blow up.
"""

import numpy as np

from trafficgcn import RoadGraph, normalize_adjacency
from trafficgcn.data import ring_with_chords

# A toy 2-node road pair: one segment connected to another.
pair = np.array([[0.0, 1.0],
                 [1.0, 0.0]])
print("adjacency:\n", pair)
print("normalized:\n", normalize_adjacency(pair).data)
# Both entries are 0.5: each node averages itself with its neighbor.

# A 10-node ring with diameter chords, the synthetic fixture's topology.
ring = ring_with_chords(10)
graph = RoadGraph(ring)
print("\nring-with-chords degrees:", ring.sum(axis=1))
print("propagation row sums:", graph.a_hat.data.sum(axis=1).round(12))
# The graph is 3-regular, so every row of the normalization sums to 1
# and every nonzero entry equals 1/(degree+1) = 1/4.

eigs = np.linalg.eigvalsh(graph.a_hat.data)
print("spectrum range: [%.4f, %.4f]" % (eigs.min(), eigs.max()))

# Repeated propagation converges toward consensus on a connected graph:
signal = np.zeros((10, 1))
signal[0] = 1.0
state = signal
for _ in range(30):
    state = graph.a_hat.data @ state
print("\nafter 30 propagation steps, spread =",
      float(state.max() - state.min()))
