# # LMMSE versus tuned transfer learning
#
# The LMMSE estimator uses the second moments of `(y, theta_hat)` and is optimal among linear
# estimators. The regularized transfer estimator only needs a single tuned `alpha`.
# Both are fitted on the same draws, so differences are paired.

# %%
import numpy as np

from tlreg import (SourceSpec, TargetSpec, TaskRelation, build_operator, empirical_risk,
                   lmmse_fit, mltn_fit, optimal_alpha_tl, parse_operator, ridge_fit, tl_fit)
from tlreg.estimators import optimal_alpha_ridge
from tlreg.model import sample_beta, sample_source_dataset, sample_target_dataset

# %%
d, n, nt = 48, 32, 96
t = TargetSpec(d, n, sigma_eps2=0.05, b=1.0)
s = SourceSpec(nt, sigma_xi2=0.05)
rel = TaskRelation(build_operator(parse_operator("dct", d)), sigma_eta2=0.2)
a_tl, a_ridge = optimal_alpha_tl(t, s, rel), optimal_alpha_ridge(t)
print(f"alpha_tl={a_tl:.4g}  alpha_ridge={a_ridge:.4g}")

# %%
gen = np.random.default_rng(7)
risks = {"ridge": [], "tl": [], "lmmse": []}
for _ in range(200):
    beta = sample_beta(t, gen)
    theta_hat = mltn_fit(sample_source_dataset(beta, rel, s, d, gen)).beta_hat
    tgt = sample_target_dataset(beta, t, gen)
    risks["ridge"].append(empirical_risk(ridge_fit(tgt, a_ridge).beta_hat, beta, t))
    risks["tl"].append(empirical_risk(tl_fit(tgt, theta_hat, rel.H, a_tl).beta_hat, beta, t))
    risks["lmmse"].append(empirical_risk(lmmse_fit(tgt, theta_hat, rel, t, s).beta_hat, beta, t))

for k, v in risks.items():
    print(f"{k:6s} {np.mean(v):.4f} +- {np.std(v, ddof=1) / np.sqrt(len(v)):.4f}")
diff = np.array(risks["lmmse"]) - np.array(risks["tl"])
print(f"lmmse - tl: {diff.mean():.4f} +- {diff.std(ddof=1) / np.sqrt(len(diff)):.4f}")
