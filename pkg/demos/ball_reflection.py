"""Confine a diffusion to the unit disc with a normal penalty push.

Started at the center, a free planar Brownian motion would leave the
disc quickly; here an exponential penalty pushes along the inward
normal whenever a path nears the rim.  The reference is the classical
projected walk, which snaps each step back to the closure.  The table
shows the Kolmogorov-Smirnov distance between the two radius
distributions at the final time shrinking as the penalty stiffens.

Run:  python3 demos/ball_reflection.py
"""

import csv
import pathlib

from reflectsim.config import ExperimentConfig
from reflectsim.runner import run_convergence

OUT_ROOT = pathlib.Path(__file__).resolve().parent.parent / "demo-results"

CONFIG = {
    "domain": {"kind": "ball", "center": [0.0, 0.0], "radius": 1.0},
    "coefficients": {"kind": "constant", "drift": [0.0, 0.0], "diffusion": 1.0},
    "reflection": {"kind": "normal"},
    "penalty": {"family": {"kind": "exponential"},
                "n_grid": [4, 16, 64], "cutoff": None},
    "integrator": {"start": [0.0, 0.0], "horizon": 0.5, "dt": 1e-3,
                   "path_count": 2000, "master_seed": 19},
    "reference": {"kind": "projection", "dt": 2e-4},
    "diagnostics": {"eta": 0.1},
    "output_dir": str(OUT_ROOT),
}


def main() -> None:
    code, out = run_convergence(ExperimentConfig(CONFIG))
    print(f"convergence run finished with exit code {code}; outputs in {out}\n")

    with open(out / "table.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    cols = ("n", "ks_norm", "min_phi_prob", "mean_l")
    print("  ".join(f"{c:>12}" for c in cols))
    for row in rows:
        print("  ".join(f"{float(row[c]):12.4f}" for c in cols))
    print(
        "\nks_norm compares the distribution of final radii against the"
        "\nprojected walk.  mean_l is the average push the penalty had to"
        "\nspend per path; it shrinks toward the boundary work the exact"
        "\nreflected process needs, no more."
    )


if __name__ == "__main__":
    main()
