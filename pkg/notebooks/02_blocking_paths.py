# %% [markdown]
# Blocking paths and cyclic jams
#
# A blocking path is a chain of cars in which each car can first move only
# after the next one has.  A mixed cyclic one on the torus can never move.

# %%
import sys
from pathlib import Path

import numpy as np

from bml import InitialLaw, RngSeed, find_cyclic, run, sample_initial, validate_path
from bml.blocking import random_walk_path
from bml.render import render_snapshot

out = Path(sys.argv[1] if len(sys.argv) > 1 else "notebook_out") / "blocking"
out.mkdir(parents=True, exist_ok=True)

# %%
grid = sample_initial((120, 120), InitialLaw(0.96), RngSeed(3))
loop = find_cyclic(grid)
print("cycle length", len(loop), "kinds", sorted(set(loop.kinds)), "valid", validate_path(grid, loop))
render_snapshot(grid, out / "cycle.ppm", loop)

# %%
stats = run(grid, 20_000)
moved = [stats.first_move_time(z) for z in loop.sites]
print("cars on the cycle that ever moved:", sum(np.isfinite(moved)))

# %% [markdown]
# First-move times strictly decrease along any path (infinite ones stay
# infinite).

# %%
rng = RngSeed(3, 1).generator()
g = sample_initial((60, 60), InitialLaw(0.6), RngSeed(4))
st = run(g, 5000)
cars = np.argwhere(g.cells)
path = random_walk_path(g, cars[0], 30, rng)
print([st.first_move_time(z) for z in path.sites])

# %%
for p in (0.93, 0.95, 0.96, 0.97):
    hits = sum(find_cyclic(sample_initial((300, 300), InitialLaw(p), RngSeed(s, 9))) is not None for s in range(10))
    print(f"p={p}: cyclic blocking path in {hits}/10 tori")
