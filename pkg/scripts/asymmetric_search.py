"""Expected comparisons of the optimal search tree vs discharge probability.

Also reports the tree built from codes observed while running a built-in
model, which is the data-driven counterpart of the binomial model.

    python3 scripts/asymmetric_search.py [--out results]
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from cimsim.inference import builtin_digits, builtin_model, run_inference
from cimsim.search_tree import (
    balanced_tree,
    build_optimal_tree,
    empirical_distribution,
    expected_comparisons,
    mav_distribution_binomial,
)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results")
    ap.add_argument("--bits", type=int, default=5)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rows = []
    for p in np.round(np.linspace(0.05, 0.5, 10), 3):
        dist = mav_distribution_binomial(32, p, args.bits)
        rows.append(("binomial", p, expected_comparisons(build_optimal_tree(dist), dist),
                     expected_comparisons(balanced_tree(args.bits), dist), dist.entropy()))

    for name in ("mlp1_b2", "mlp2_b2"):
        rep = run_inference(builtin_model(name), builtin_digits(), keep_codes=True)
        dist = empirical_distribution(rep.codes, args.bits)
        rows.append((f"empirical:{name}", "", expected_comparisons(build_optimal_tree(dist), dist),
                     expected_comparisons(balanced_tree(args.bits), dist), dist.entropy()))

    with open(out / "asymmetric_search.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["distribution", "p_discharge", "optimal_comparisons", "balanced_comparisons",
                    "entropy_bits"])
        w.writerows(rows)
    for r in rows:
        print(f"{r[0]:>18} p={r[1]!s:<5} optimal={r[2]:.4f} balanced={r[3]:.1f} entropy={r[4]:.4f}")


if __name__ == "__main__":
    main()
