#!/usr/bin/env python3
"""The gradient tape in isolation: forward ops, backward rules, and the
finite-difference oracle that keeps them honest."""

import numpy as np

from trafficgcn import GradientTape, Tensor
from trafficgcn import tensor as T
from trafficgcn.gradcheck import check_composition, run_suite, worst_entry

# Differentiate a tiny logistic-regression-style scalar by hand.
rng = np.random.default_rng(0)
w = Tensor(rng.normal(0, 1, (3, 1)))
x = Tensor(rng.normal(0, 1, (5, 3)))
y = Tensor(rng.normal(0, 1, (5, 1)))

with GradientTape() as tape:
    tape.watch(w)
    pred = T.sigmoid(T.matmul(x, w))
    err = T.sub(pred, y)
    loss = T.mean_all(T.hadamard(err, err))
    grads = tape.gradients(loss)

print("loss:", loss.item())
print("dLoss/dw:\n", grads[w])

# The same gradient via central differences (step 1e-5):
def build(t):
    e = T.sub(T.sigmoid(T.matmul(x, t["w"])), y)
    return T.mean_all(T.hadamard(e, e))

print("worst relative error vs finite differences:",
      check_composition(build, {"w": w.data.copy()}))

# The full verification suite exercises every op and every model variant.
results = run_suite(seed=0, trials=2)
name, err = worst_entry(results)
print(f"suite worst: {name} at {err:.2e}")
