# %% [markdown]
# Free flow and jams on the 200 x 200 torus
#
# Sweep the density, run 20,000 sub-steps per seed and label each run by
# its speed over the second half.  Snapshots of one seed per density are
# written as PPM images (East red, North blue, empty white).

# %%
import sys
from pathlib import Path

import numpy as np

from bml import InitialLaw, RngSeed, run, sample_initial, speed
from bml.harness import PhaseThresholds, classify_phase
from bml.render import render_snapshot

out = Path(sys.argv[1] if len(sys.argv) > 1 else "notebook_out") / "phases"
out.mkdir(parents=True, exist_ok=True)
dims, steps, window = (200, 200), 20_000, (10_000, 20_000)
seeds = range(4)

# %%
for p in (0.1, 0.3, 0.32, 0.34, 0.8):
    labels, speeds = [], []
    for s in seeds:
        grid = sample_initial(dims, InitialLaw(p), RngSeed(s))
        stats = run(grid, steps)
        labels.append(classify_phase(stats, PhaseThresholds(), window))
        speeds.append(speed(stats, window))
        if s == 0:
            render_snapshot(stats.final, out / f"p{p:.2f}.ppm")
    print(f"p={p:.2f}  speeds {np.round(speeds, 3)}  labels {labels}")

# %% [markdown]
# At p = 0.32 and 0.34 runs settle into slow moving bands rather than a
# full freeze within this horizon; see the decisions ledger for numbers.
