"""
Chasing a moving goal
=====================

Wildfire spreads, so the survey target moves. Each scenario here relocates
the goal three times (at iterations 20, 40 and 60). The harness logs, for
every relocation, whether the oracle's first answer afterwards already
pointed toward the new goal.
"""

from vlmrrt.bench import VLM_RRT, CellSpec, detection_rate, run_dynamic_bench

for spec in ("geometric", "noisy:0.08"):
    records, logs = run_dynamic_bench(20, CellSpec(VLM_RRT, spec), seed=0)
    hits, total = detection_rate(logs)
    waits = [e.iterations_to_detection for lg in logs for e in lg if e.iterations_to_detection is not None]
    print(f"{spec:11s} first-query detection {hits}/{total}, "
          f"mean wait {sum(waits) / len(waits):.1f} iterations, "
          f"{sum(r.success for r in records)}/{len(records)} runs reached the final goal")

# %%
# Resetting the tree at each relocation throws away useful exploration.
for keep in (True, False):
    records, _ = run_dynamic_bench(20, CellSpec(VLM_RRT, "geometric"), seed=0, keep_tree=keep)
    mean_it = sum(r.iterations for r in records) / len(records)
    print(f"keep_tree={keep!s:5s} mean iterations {mean_it:.1f}")
