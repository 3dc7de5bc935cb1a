"""
Learning zonal parameters on the 6-bus network
===============================================

Sample perturbed operating points, solve each with AC power flow and fit
b, gamma and rho so the zonal DC model tracks the AC tie flows.
"""

import time

import numpy as np

from gridreduce import load_bundled
from gridreduce.learn import HyperParams, build_dataset, evaluate, generate_scenarios, optimize

net, zp = load_bundled("case6_zonal.m", "zones6.json")

# each bus injection is scaled by an independent (1 + eps), eps ~ N(0, 0.15^2)
scen = generate_scenarios(net, 2000, sigma=0.15, seed=0, split=(1600, 400))
t0 = time.perf_counter()
ds = build_dataset(net, zp, scen)
print(f"{len(ds)} AC solves in {time.perf_counter() - t0:.1f} s "
      f"({ds.n_discarded} discarded)")
train, test = ds.train(), ds.test()

###############################################################################
# Compare the four optimizers, full batch
for method in ("gd", "bfgs", "lbfgs", "tnc"):
    rep = optimize(train, method, HyperParams(max_iter=500))
    m = evaluate(rep.params, test)
    print(f"{method:>5}: {rep.iterations:4d} it, loss {rep.loss_history[-1]:.4f}, "
          f"test MAE {m.mae_mw:.2f} MW  ({rep.message})")

###############################################################################
# Mini-batch L-BFGS, batches of 100
rep = optimize(train, "lbfgs", HyperParams(max_iter=30, batch_size=100, seed=1))
trained = evaluate(rep.params, test)
base = evaluate(train.baseline, test)
print(f"baseline test MAE {base.mae_mw:.2f} MW, trained {trained.mae_mw:.2f} MW")
print("per-tie MAE (MW):", np.round(trained.per_tie_mae, 2))

# fraction of test errors below a few thresholds
for thr in (1.0, 5.0, 10.0):
    frac = np.mean(trained.curve_errors * ds.base_mva <= thr)
    print(f"  |error| <= {thr:4.1f} MW: {100 * frac:.1f}% of tie flows")

print("b:", np.round(rep.params.b, 3))
print("gamma:", np.round(rep.params.gamma, 4))
print("rho:", np.round(rep.params.rho, 4))
