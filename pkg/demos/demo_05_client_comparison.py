"""
Communication of the three clients
==================================

The linear client downloads every committee. The optimistic client downloads
one hash per epoch from every prover. The bisection client's cost grows with
the logarithm of the horizon. A least-squares fit against ``N`` and against
``log2 N`` makes the shapes visible.
"""

import numpy as np

from popos.bench import Topology, fit_r2, run_bench
from popos.clients import reports_to_csv

horizons = [2**k for k in range(6, 12)]
reports = {}
for flavor, param in (("tlc", 200), ("olc", 500), ("slc", 2)):
    reports[flavor] = run_bench(flavor, horizons, param, Topology(1, 1), m=16, seed=5)

print(reports_to_csv(reports["slc"]))

# %%
x = np.array(horizons, float)
for flavor, reps in reports.items():
    y = np.array([r.bytes_down for r in reps], float)
    _, _, r2_lin = fit_r2(x, y)
    _, _, r2_log = fit_r2(np.log2(x), y)
    print(f"{flavor}: {y[0]:>10.0f} -> {y[-1]:>10.0f} B   R2 vs N {r2_lin:.4f}   R2 vs log N {r2_log:.4f}")

# %%
ratio = np.array([t.total_bytes / s.total_bytes for t, s in zip(reports["tlc"], reports["slc"])])
print("TLC/SLC total bytes:", np.round(ratio, 1))
