"""A small temperature-by-step-size grid with persisted reports.

Runs the planted benchmark over a reduced grid, prints the pass@16 table,
and writes raw reports plus the CSV/SVG artifacts into ./demo_results.
"""

import numpy as np

from divdiff import GenerationConfig, GridSpec, default_problem, grid_run, pass_at_k
from divdiff.reporting import write_artifacts, write_reports

spec = GridSpec(
    temperatures=[0.0, 0.5, 1.0],
    alphas=[0.0, 8.0, 32.0],
    guidances=["odd"],
    seeds=[0, 1, 2],
    problems=list(range(6)),
)
task, _ = default_problem(0)
base = GenerationConfig(
    temperature=0.0, steps=task.length - 1, length=task.length, batch=16, seed=0
)
reports, aggregates = grid_run(spec, default_problem, base, jobs=4)
print(f"ran {len(reports)} cells ({aggregates['failed_runs']} failed)\n")

by_cell = {}
for r in reports:
    by_cell.setdefault((r.theta, r.alpha), {}).setdefault(r.seed, []).append(r)

print("mean pass@16 (alpha=0 row is the unguided baseline):")
header = "alpha\\theta " + "".join(f"{t:>7.1f}" for t in spec.temperatures)
print(header)
for alpha in spec.alphas:
    cells = []
    for theta in spec.temperatures:
        groups = by_cell[(theta, alpha)]
        cells.append(np.mean([pass_at_k(g, 16) for g in groups.values()]))
    print(f"{alpha:10.1f} " + "".join(f"{c:7.2f}" for c in cells))

paths = write_artifacts(aggregates, "demo_results")
write_reports(reports, "demo_results")
print(f"\nwrote {paths['csv']}, {paths['passk']}, {paths['pareto']}")
