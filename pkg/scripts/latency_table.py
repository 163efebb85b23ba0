"""Cycles per conversion vs precision, and fabric throughput per topology.

    python3 scripts/latency_table.py [--out results]
"""

import argparse
import csv
from pathlib import Path

from cimsim.adc import AdcConfig, Mode
from cimsim.fabric import Topology, build_topology, latency_vs_precision, simulate_schedule


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results")
    ap.add_argument("--samples", type=int, default=8)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rows = [r for mode in ("sar", "flash", "hybrid") for r in latency_vs_precision(mode, range(3, 9))]
    with open(out / "latency.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["mode", "bits", "cycles", "comparators"])
        w.writerows((r.mode, r.bits, r.cycles, r.comparators) for r in rows)
    print("bits  " + "  ".join(f"{m:>6}" for m in ("sar", "flash", "hybrid")))
    for b in range(3, 9):
        print(f"{b:>4}  " + "  ".join(f"{r.cycles:>6}" for r in rows if r.bits == b))

    setups = [
        ("pair_sar n=8", build_topology(8, Topology.PAIR_SAR), AdcConfig(5, Mode.SAR)),
        ("hybrid n=4", build_topology(4, Topology.HYBRID), AdcConfig(5, Mode.HYBRID, 2)),
        ("hybrid n=8", build_topology(8, Topology.HYBRID), AdcConfig(5, Mode.HYBRID, 2)),
        ("hybrid n=8 piped", build_topology(8, Topology.HYBRID, pipelining=True), AdcConfig(5, Mode.HYBRID, 2)),
    ]
    with open(out / "fabric_throughput.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["setup", "samples", "cycles", "samples_per_cycle", "energy_total", "energy_per_sample"])
        for name, plan, cfg in setups:
            rep = simulate_schedule(plan, args.samples, cfg)
            per = rep.energy.total / rep.samples_digitized
            w.writerow([name, rep.samples_digitized, rep.total_cycles, rep.throughput, rep.energy.total, per])
            print(f"{name:>18}: {rep.samples_digitized} samples / {rep.total_cycles} cycles, "
                  f"{per:.2f} energy/sample")


if __name__ == "__main__":
    main()
