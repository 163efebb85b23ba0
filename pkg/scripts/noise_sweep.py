"""Inference accuracy vs comparator noise (in LSB) on the bundled digits.

    python3 scripts/noise_sweep.py [--seeds 5] [--out results]
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from cimsim.adc import AdcConfig, Mode
from cimsim.analog import NonidealityParams
from cimsim.inference import BUILTIN_MODELS, builtin_digits, builtin_model, lsb_noise, run_inference

SIGMAS = (0.0, 0.25, 0.5, 1.0, 2.0)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--mode", default="sar", choices=[m.value for m in Mode])
    ap.add_argument("--out", default="results")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = AdcConfig(5, Mode(args.mode))
    data = builtin_digits()

    with open(out / "noise_sweep.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["model", "sigma_lsb", "seed", "accuracy", "energy", "cycles"])
        for name in BUILTIN_MODELS:
            model = builtin_model(name)
            medians = []
            for sigma in SIGMAS:
                accs = []
                for seed in range(args.seeds):
                    ni = NonidealityParams(comparator_noise_sigma=lsb_noise(sigma, 5), seed=seed)
                    rep = run_inference(model, data, cfg, ni)
                    accs.append(rep.accuracy)
                    w.writerow([name, sigma, seed, rep.accuracy, rep.energy, rep.cycles])
                medians.append(np.median(accs))
            print(f"{name}: " + "  ".join(f"{s}LSB={m:.3f}" for s, m in zip(SIGMAS, medians)))


if __name__ == "__main__":
    main()
