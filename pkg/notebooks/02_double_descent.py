# # Double descent for the four estimators
#
# A small version of the DCT sweep. The minimum-norm least-squares risk diverges at
# `d = n`; the transfer estimator diverges where the source problem does, at `d = n_tilde`.
# Ridge and the LMMSE estimator stay bounded.

# %%
import math

from tlreg import harness

# %%
cfg = harness.parse_config("""
n = 32
n_tilde = 64
d_grid = 8, 16, 24, 31, 32, 33, 48, 63, 64, 65, 96, 128, 256
sigma_eta2_list = 0.1
trials = 150
base_seed = 1
""")
points = harness.run_sweep(cfg, workers=2)

# %% [markdown]
# Empirical mean risk next to the analytic value. `inf` marks the interpolation bands,
# where the LMMSE estimator is undefined and recorded as `nan`.

# %%
print(f"{'d':>4} " + " ".join(f"{e:>18}" for e in cfg.estimators))
for d in cfg.d_grid:
    row = {p.estimator: p for p in points if p.d == d}
    cells = []
    for e in cfg.estimators:
        p = row[e]
        cells.append(f"{p.empirical_mean:8.3g} / {p.analytic:<8.3g}")
    print(f"{d:4d} " + " ".join(f"{c:>18}" for c in cells))

# %% [markdown]
# Agreement with the formulas at three standard errors.

# %%
print(harness.compare(points, 3.0).summary())

# %% [markdown]
# Write the CSV and one SVG per relation-noise level.

# %%
import tempfile
from pathlib import Path

out = Path(tempfile.mkdtemp())
harness.emit_csv(points, out / "sweep.csv")
print([p.name for p in harness.emit_svg(points, out / "sweep.svg", n=cfg.n)])
