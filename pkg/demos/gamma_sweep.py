"""
How much should the planner trust its oracle?
=============================================

A noisy oracle points the wrong way 20% of the time. Sweeping the guidance
probability gamma shows the trade-off: always following the oracle lets a
bad answer drive the tree into a dead end, rarely following it wastes the
good answers.

Run with ``python3 demos/gamma_sweep.py [trials]``.
"""

import sys

from vlmrrt.bench import VLM_RRT, BenchConfig, CellSpec, format_table, run_bench

trials = int(sys.argv[1]) if len(sys.argv) > 1 else 30
gammas = [1.0, 0.9, 0.8, 0.7, 0.6, 0.5]
cfg = BenchConfig(n_trials=trials, seed=0,
                  cells=tuple(CellSpec(VLM_RRT, "noisy:0.2", g) for g in gammas))
result = run_bench(cfg)
print(format_table(result.summary))

# %%
# The same scenarios appear in every row, so differences between rows are
# due to gamma alone (and the oracle's coin flips).
for cell in sorted(result.summary["cells"], key=lambda c: -c["gamma"]):
    lo, hi = cell["success_ci95"]
    print(f"gamma {cell['gamma']:.1f}: success 95% interval [{lo:.2f}, {hi:.2f}]")
