# %% [markdown]
# # A dynamic spatio-temporal model
#
# Basis coefficients evolve by a first-order vector autoregression. The
# Kalman filter and smoother run in coefficient space, so the cost per time
# step grows with the number of basis functions rather than with n.

# %%
import numpy as np

from frkpy import DynamicStModel, MultiResSpec, build_multires
from frkpy.dynamic import (kalman_filter, kalman_smoother, predict_st, simulate_dynamic,
                           transient_growth_diag)

rng = np.random.default_rng(5)
basis = build_multires(MultiResSpec([(4, 4)], (0, 0), (1, 1)))
r = basis.r
# Advection to the right: each coefficient borrows from its left neighbour
M = 0.6 * np.eye(r)
for i in range(r):
    if i % 4:
        M[i, i - 1] = 0.3
model = DynamicStModel(basis, M, 0.1 * np.eye(r), np.zeros(r), np.eye(r), 0.01, 0.05)
normal, amp = transient_growth_diag(M)
print(f"M normal: {normal}; largest one-step energy amplification {amp:.3f}")

# %%
T = 12
locs = [rng.random((int(rng.integers(20, 60)), 2)) for _ in range(T)]
data, states, ys = simulate_dynamic(model, T, locs, seed=rng)
filt = kalman_filter(model, data)
smooth = kalman_smoother(model, data, filt)
print(f"log-likelihood {filt.loglik:.2f}")
for t in (1, 6, 12):
    ef = np.linalg.norm(filt.filt_mean[t - 1] - states[t - 1])
    es = np.linalg.norm(smooth.smooth_mean[t - 1] - states[t - 1])
    print(f"t = {t:>2}: state error filtered {ef:.3f}, smoothed {es:.3f}")

# %% [markdown]
# Forecasts beyond the last time widen as the state covariance propagates.

# %%
site = np.array([0.5, 0.5])
res = predict_st(model, smooth, [(site, t) for t in (10, 12, 13, 15, 20)])
for (t, mean, se) in zip((10, 12, 13, 15, 20), res.mean, res.se):
    print(f"t = {t:>2}: mean {mean:+.3f}, s.e. {se:.3f}")
