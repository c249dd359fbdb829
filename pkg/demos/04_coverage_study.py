"""A small coverage/length grid, the desk-scale version of the Monte Carlo study.

Raise R and B for tighter numbers; the CSV feeds any plotting tool.
"""
import sys

from edgeci.bootstrap import BootstrapConfig
from edgeci.simulation import ExperimentConfig, SyntheticImageSpec, rows_to_csv, run_grid

R = int(sys.argv[1]) if len(sys.argv) > 1 else 40
base = ExperimentConfig(spec=SyntheticImageSpec(), R=R, master_seed=2024,
                        bootstrap=BootstrapConfig(B=199, clamp=False),
                        methods=("perc", "bbm", "st1", "st2"))

reports = run_grid(base, alpha_left=[-2, -8], alpha_right=[-2, -4, -8, -12])
rows = [row for rep in reports for row in rep.rows()]
for row in rows:
    cov = row.get("coverage")
    print(f"({row['alpha_left']:5}, {row['alpha_right']:5}) {row['method']:5s} "
          f"coverage {'   --' if cov is None else f'{cov:5.2f}'}  length {row['mean_length']:6.1f}")

with open("coverage_grid.csv", "w") as fh:
    fh.write(rows_to_csv(rows))
print("wrote coverage_grid.csv")
