"""Watch penalized diffusions sharpen into an obliquely reflected one.

A free diffusion on the upper half-plane is given a drift that punishes
boundary proximity: the push points along the constant direction (1, 1)
and its strength doubles down each time the level parameter n grows.
The run compares each penalized ensemble against the exact
reflection-map construction of the limiting process and prints the
distance table — Kolmogorov-Smirnov per coordinate, Wasserstein on the
accumulated boundary work — which shrinks as n climbs.

Run:  python3 demos/halfspace_convergence.py
"""

import csv
import pathlib

from reflectsim.config import ExperimentConfig
from reflectsim.runner import run_convergence

OUT_ROOT = pathlib.Path(__file__).resolve().parent.parent / "demo-results"

CONFIG = {
    "domain": {"kind": "half-space", "axis": 1, "offset": 0.0, "dimension": 2},
    "coefficients": {"kind": "constant", "drift": [0.0, 0.0], "diffusion": 1.0},
    "reflection": {"kind": "constant", "vector": [1.0, 1.0]},
    "penalty": {"family": {"kind": "exponential"},
                "n_grid": [4, 16, 64], "cutoff": None},
    "integrator": {"start": [0.0, 0.5], "horizon": 0.5, "dt": 1e-3,
                   "path_count": 2000, "master_seed": 11},
    "reference": {"kind": "auto"},
    "diagnostics": {"eta": 0.02},
    "output_dir": str(OUT_ROOT),
}


def main() -> None:
    code, out = run_convergence(ExperimentConfig(CONFIG))
    print(f"convergence run finished with exit code {code}; outputs in {out}\n")

    with open(out / "table.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    cols = ("n", "ks_coord_0", "ks_coord_1", "w1_l", "min_phi_prob")
    print("  ".join(f"{c:>12}" for c in cols))
    for row in rows:
        print("  ".join(f"{float(row[c]):12.4f}" for c in cols))
    print(
        "\nBoth KS columns fall level over level: the penalized law is"
        "\nclosing in on the reflected one.  The last column is the share"
        "\nof paths that never strayed more than 0.02 below the boundary —"
        "\nstiffer penalties hold the paths in ever-tighter shells."
    )


if __name__ == "__main__":
    main()
