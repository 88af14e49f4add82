# %% [markdown]
# Good edges of the renormalized lattice and oriented cycles on skew tori
#
# A renormalized edge is good when every site of one anti-diagonal
# segment has a blocking path into the next segment.  Good edges form a
# dependent oriented percolation; on a skew torus an open oriented cycle
# lifts to a cyclic blocking path.

# %%
from bml import RenormParams, SkewTorusSpec, diag_ell, estimate_cycle_prob, estimate_good_prob, estimate_theta
from bml.renorm import validate_params

# %%
for M, k in ((50, 10), (200, 10)):
    print((M, k), validate_params(M, k))

# %%
for k in (2, 5, 10):
    e = estimate_good_prob(1.0, RenormParams(20 * k, k), 100, 1)
    print(f"k={k:2d} M={20 * k}: P(good) ~ {e.phat:.3f} +/- {e.stderr:.3f}")

# %%
for p in (0.97, 0.98, 0.99, 1.0):
    e = estimate_good_prob(p, RenormParams(200, 10), 60, 2)
    print(f"p={p}: P(good) ~ {e.phat:.3f}")

# %%
spec = SkewTorusSpec((6, -3), (-2, 4))
print("vertices", spec.n_vertices, "diag_ell", diag_ell(spec))
for q in (0.6, 0.7, 0.8):
    print(q, [estimate_cycle_prob(SkewTorusSpec((6, -3), (-2, 4), r), q, 200, 3).estimate for r in (1, 2, 4, 8)])

# %%
for e in estimate_theta(0.8, [16, 32, 64, 128], 500, 4):
    print(f"theta_n(0.8), n={e.n}: {e.estimate:.3f}")
