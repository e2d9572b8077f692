# # The resolvent fixed point
#
# For a non-orthonormal `H` or anisotropic features, the asymptotic risk depends on a scalar
# `c` solving `1/c - 1 = (gamma/d) tr[W (cW + alpha I)^{-1}]`, with `W` the whitened
# feature covariance.

# %%
import math

import numpy as np

from tlreg.analytic import mp_stieltjes, solve_fixed_point

# %% [markdown]
# With `W = I` the equation is quadratic and `c = 1 - gamma + gamma alpha m(-alpha)`, where `m`
# is the Marchenko-Pastur Stieltjes transform. At `gamma = alpha = 1` this is the golden ratio conjugate.

# %%
sol = solve_fixed_point(np.eye(5), 1.0, 1.0)
print(sol.c, (math.sqrt(5) - 1) / 2, "residual", sol.residual)
print("alpha*m(-alpha):", 1.0 * mp_stieltjes(1.0, 1.0))

# %% [markdown]
# Check against a finite sample. The fixed point predicts `alpha * tr[(Sigma_hat + alpha I)^{-1}] / d`
# with `c` equal to the normalized resolvent trace weighted by `W`.

# %%
d, n, alpha = 200, 400, 0.5
lam = np.tile([1.0, 4.0], d // 2)
sol = solve_fixed_point(lam, d / n, alpha)
gen = np.random.default_rng(0)
vals = []
for _ in range(20):
    X = gen.standard_normal((n, d)) * np.sqrt(lam)
    S = X.T @ X / n
    vals.append(alpha * np.trace(np.linalg.inv(S + alpha * np.eye(d))) / d)
predicted = np.mean(alpha / (sol.c * lam + alpha))
print(f"Monte Carlo {np.mean(vals):.4f}   fixed point {predicted:.4f}")
