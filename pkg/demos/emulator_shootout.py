"""Train a handful of emulators on a tiny campaign and compare them.

A 24-run grid on a coarse mesh keeps this under a minute.  Split is by
simulation, so test rows come from runs no model has seen.

Run:  python3 demos/emulator_shootout.py
"""

import time

import numpy as np

from mixemu.campaign import GridSpec, PartitionSpec, assemble, enumerate_grid, partition, run_campaign
from mixemu.emulators import fit_emulator
from mixemu.metrics import accuracy, confusion_matrix, r2_score

grid = GridSpec(v0=(0.1, 1.0), aniso_ratio=(1.0, 100.0), d_m=(1e-3, 1e-2), kappa_f_L=(1, 2, 3),
                t_osc=(0.1,), mesh_n_side=21, dt=0.01, n_steps=100)
t0 = time.perf_counter()
camp = run_campaign(enumerate_grid(grid), save_every=5)
print(f"{grid.size} simulations in {time.perf_counter() - t0:.1f} s")

spec = PartitionSpec(0.63, 0.07, 0.30, seed=1)

# regression on the mean product concentration
parts = partition(assemble(camp, "cbar_C"), spec)
fit = assemble(camp, "cbar_C").subset(np.r_[parts["train"].sims, parts["validation"].sims])
test = parts["test"]
print(f"\ncbar_C: {fit.n_rows} fit rows, {test.n_rows} test rows")
# the network is data-hungry: on a few hundred rows it trails the trees
params = {"rf": {"n_trees": 50}, "dt-adaboost": {"n_trees": 25},
          "mlp": {"hidden": [100, 100], "alpha": 0.1, "learning_rate": 0.01, "tol": 0.0}}
for name in ("ridge", "poly", "dt", "rf", "dt-adaboost", "gbm", "mlp"):
    m = fit_emulator(name, fit, params.get(name), seed=0)
    print(f"  {name:12s} R2 = {r2_score(test.y, m.predict(test.X)):.3f}")

# classification of the degree of mixing
data = assemble(camp, "class_C")
fit = data.subset(np.r_[parts["train"].sims, parts["validation"].sims])
test = data.subset(parts["test"].sims)
print("\nclass_C:")
for name in ("logistic", "lda", "nb", "rf"):
    m = fit_emulator(name, fit, params.get(name), seed=0)
    yhat = m.predict(test.X)
    print(f"  {name:12s} accuracy = {accuracy(test.y, yhat):.3f}")
print("rf confusion matrix (rows true class 1..4):")
print(confusion_matrix(test.y, yhat))
