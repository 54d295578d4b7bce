"""
Rate constants for nitrate reduction
====================================

Fit a one-component Gaussian to the posterior of the five log rates and the log
noise level, turn it into log-normal summaries of the rate constants, and check
it against a Langevin MCMC chain.
"""

import numpy as np

from varinverse import FitConfig, MalaConfig, fit, mala_sample
from varinverse.catalysis import SPECIES, catalysis_model, load_catalysis_data, rate_summary

data = load_catalysis_data()
print("observations:", data.y.size, "at scaled times", data.times.round(3))

model = catalysis_model()
report = fit(model, FitConfig(L=1))
q = report.state
names = ["xi1", "xi2", "xi3", "xi4", "xi5", "theta"]
print(f"\nVI: {report.n_forward} forward solves, F2 = {report.F2:.4f}")
for n, m, v in zip(names, q.means[0], q.variances[0]):
    print(f"  {n:>5}  mean {m:8.4f}   2sd {2 * np.sqrt(v):.4f}")

print("\nrate constants (1/min): median and 95% interval")
for name, s in rate_summary(q.means[0], q.variances[0]).items():
    print(f"  {name:>5}  {s['median']:.5f}  ({s['lower']:.5f}, {s['upper']:.5f})")

# The exact matrix-exponential solver makes each MALA step about 1 ms.
# dt = 0.1 is far too large for this posterior; 0.05 accepts about half the moves.
chain = mala_sample(catalysis_model(method="expm"), q.means[0],
                    MalaConfig(dt=0.05, n_steps=20_000, seed=0))
print(f"\nMALA (20k steps, acceptance {chain.acceptance_rate:.2f})")
for n, m, s, vm in zip(names, chain.mean, chain.std, q.means[0]):
    print(f"  {n:>5}  mean {m:8.4f} (VI {vm:8.4f})   2sd {2 * s:.4f}")

# final fitted concentrations against the last measurement row
f = model.forward.evaluate(q.means[0][:5], 0).f.reshape(6, 5)
obs = data.y.reshape(6, 5)
print("\nt = 180 min, scaled:", [s for i, s in enumerate(SPECIES) if i != 2])
print("  model", f[-1].round(4))
print("  data ", obs[-1].round(4))
