# %% [markdown]
# The greedy constructor and its offset chain
#
# On a full grid the greedy constructor steers a blocking path towards a
# target.  Half its offset from the target's anti-diagonal position is a
# reflected walk with drift -1/8.

# %%
import numpy as np

from bml import InitialLaw, RngSeed, greedy_construct, sample_initial
from bml.wchain import exact_tail, increment_frequencies, tail_curve, wchain_simulate, wchain_stationary

# %%
vals = []
for s in range(40):
    grid = sample_initial((603, 603), InitialLaw(1.0), RngSeed(s))
    _, trace = greedy_construct(grid, (300, 300))
    vals.append(np.asarray(trace.values))
f = [increment_frequencies(v) for v in vals]
pos = np.average([x["positive"] for x in f], axis=0, weights=[x["n_positive"] for x in f])
zero = np.average([x["zero"] for x in f], axis=0, weights=[x["n_zero"] for x in f])
print("from j>=1 (down, stay, up):", np.round(pos, 4), " expected (0.25, 0.625, 0.125)")
print("from 0 (stay, up):", np.round(zero, 4), " expected (0.75, 0.25)")

# %%
w = wchain_simulate(1_000_000, 0, 1)
occ = np.bincount(w) / w.size
print("occupation", np.round(occ[:6], 4))
print("stationary", np.round(wchain_stationary(6), 4))

# %%
ks = [0, 5, 10, 15]
for e in tail_curve(200, 0, ks, 1_000_000, 2):
    print(f"P(W_200 > {e.k:2d}) ~ {e.estimate:.3e} +/- {e.stderr:.1e}   exact {exact_tail(200, 0, e.k):.3e}")
