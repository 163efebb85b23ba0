"""Command-line entry point: ``cimsim <subcommand> [--config PATH] [flags]``."""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from cimsim import inference
from cimsim.adc import AdcChain, AdcConfig, Mode
from cimsim.config import RunConfig, config_hash, emit_config, override, parse_config
from cimsim.fabric import latency_vs_precision, simulate_schedule
from cimsim.metrology import dnl_inl, monte_carlo_linearity, ramp_test
from cimsim.reports import ReportRecord, emit_reports
from cimsim.search_tree import (
    SearchTree,
    balanced_tree,
    build_optimal_tree,
    empirical_distribution,
    expected_comparisons,
    mav_distribution_binomial,
)


class Recorder:
    def __init__(self, experiment: str, cfg: RunConfig):
        self.experiment = experiment
        self.hash = config_hash(cfg)
        self.records: list[ReportRecord] = []

    def __call__(self, metric, value, units):
        self.records.append(ReportRecord(self.experiment, self.hash, metric, value, units))


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.run.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_digitize(cfg: RunConfig, args) -> list[ReportRecord]:
    tree = SearchTree.from_text(Path(args.tree).read_text()) if args.tree else None
    if cfg.adc.mode is Mode.TREE and tree is None:
        tree = build_optimal_tree(mav_distribution_binomial(cfg.array.cols, cfg.run.p_discharge, cfg.adc.bits))
    chain = AdcChain.build(cfg.adc, cfg.array, cfg.nonideal, tree, cost=cfg.cost)
    rec = Recorder("digitize", cfg)
    lines = ["x,cycle,mode,array,p,threshold,bit"]
    for i, x in enumerate(args.x or cfg.run.inputs):
        res = chain.digitize(float(x))
        bits = "".join(map(str, res.bits_msb_first))
        print(f"x={x:g} code={res.code} bits={bits} comparisons={res.comparisons} "
              f"cycles={res.cycles} energy={res.energy:.6g}")
        rec(f"code[{i}]", res.code, "code")
        rec(f"comparisons[{i}]", res.comparisons, "firings")
        rec(f"cycles[{i}]", res.cycles, "cycles")
        rec(f"energy[{i}]", res.energy, "energy units")
        lines += [f"{x!r},{t.cycle},{t.mode},{t.array},{t.p},{t.threshold},{t.bit}" for t in res.trace]
    (_out(cfg) / "digitize_trace.csv").write_text("\n".join(lines) + "\n")
    return rec.records


def cmd_ramp(cfg: RunConfig, args) -> list[ReportRecord]:
    chain = AdcChain.build(cfg.adc, cfg.array, cfg.nonideal, cost=cfg.cost)
    stair = ramp_test(chain, cfg.run.points_per_code)
    rep = dnl_inl(stair)
    out = _out(cfg)
    (out / "staircase.csv").write_text(stair.to_csv())
    (out / "linearity.csv").write_text(rep.to_csv())
    print(f"max|DNL|={rep.max_abs_dnl:.4f} LSB  max|INL|={rep.max_abs_inl:.4f} LSB  "
          f"missing codes={list(rep.missing_codes)}")
    rec = Recorder("ramp", cfg)
    rec("max_abs_dnl", rep.max_abs_dnl, "LSB")
    rec("max_abs_inl", rep.max_abs_inl, "LSB")
    rec("missing_codes", len(rep.missing_codes), "codes")
    return rec.records


def cmd_tree(cfg: RunConfig, args) -> list[ReportRecord]:
    b = cfg.adc.bits
    if args.codes:
        dist = empirical_distribution(np.loadtxt(args.codes, dtype=np.int64, ndmin=1), b)
    else:
        dist = mav_distribution_binomial(cfg.array.cols, cfg.run.p_discharge, b, uniform=args.uniform)
    tree = SearchTree.from_text(Path(args.tree).read_text()) if args.tree else build_optimal_tree(dist)
    text = tree.to_text()
    (_out(cfg) / "tree.txt").write_text(text + "\n")
    exp = expected_comparisons(tree, dist)
    print(f"expected comparisons: {exp:.4f} (balanced: {expected_comparisons(balanced_tree(b), dist):.4f}, "
          f"entropy bound: {dist.entropy():.4f})")
    print(text)
    rec = Recorder("tree", cfg)
    rec("expected_comparisons", exp, "comparisons")
    rec("balanced_comparisons", expected_comparisons(balanced_tree(b), dist), "comparisons")
    rec("entropy", dist.entropy(), "bits")
    rec("max_depth", int(tree.leaf_depths().max()), "comparisons")
    return rec.records


def cmd_schedule(cfg: RunConfig, args) -> list[ReportRecord]:
    plan = cfg.plan()
    rep = simulate_schedule(plan, cfg.fabric.samples, cfg.adc, cfg.cost, cols=cfg.array.cols)
    (_out(cfg) / "schedule_trace.csv").write_text(rep.to_csv())
    print(f"{plan.mode.value}: {rep.samples_digitized} samples in {rep.total_cycles} cycles, "
          f"energy {rep.energy.total:.6g}")
    rec = Recorder("schedule", cfg)
    rec("total_cycles", rep.total_cycles, "cycles")
    rec("samples_digitized", rep.samples_digitized, "samples")
    rec("throughput", rep.throughput, "samples/cycle")
    rec("wall_time", rep.total_cycles * cfg.cost.cycle_time, "s")
    rec("energy_reference", rep.energy.reference, "energy units")
    rec("energy_comparison", rep.energy.comparison, "energy units")
    rec("energy_merge", rep.energy.merge, "energy units")
    rec("energy_total", rep.energy.total, "energy units")
    for row in latency_vs_precision(cfg.adc.mode if cfg.adc.mode is not Mode.TREE else Mode.SAR,
                                    [cfg.adc.bits], cfg.adc.flash_bits):
        rec("cycles_per_conversion", row.cycles, "cycles")
        rec("comparators", row.comparators, "comparators")
    return rec.records


def _load_data(cfg: RunConfig):
    data = inference.builtin_digits() if cfg.run.dataset == "builtin" else inference.load_dataset(cfg.run.dataset)
    if cfg.run.model in inference.BUILTIN_MODELS:
        model = inference.builtin_model(cfg.run.model)
    else:
        model = inference.load_model(cfg.run.model)
    return data, model


def cmd_infer(cfg: RunConfig, args) -> list[ReportRecord]:
    data, model = _load_data(cfg)
    nonideal = cfg.nonideal
    if cfg.run.noise_lsb:
        nonideal = replace(nonideal, comparator_noise_sigma=inference.lsb_noise(cfg.run.noise_lsb, cfg.adc.bits))
    tree = None
    if cfg.adc.mode is Mode.TREE:
        tree = build_optimal_tree(mav_distribution_binomial(cfg.array.cols, cfg.run.p_discharge, cfg.adc.bits))
    rep = inference.run_inference(model, data, cfg.adc, nonideal, cfg.array, tree, cfg.cost)
    ref = inference.reference_forward(model, data.images)
    ref_acc = float(np.mean(np.argmax(ref, axis=1) == data.labels))
    print(f"accuracy {rep.accuracy:.4f} (integer reference {ref_acc:.4f}), "
          f"{rep.conversions} conversions, {rep.cycles} cycles")
    rec = Recorder("infer", cfg)
    rec("accuracy", rep.accuracy, "fraction")
    rec("reference_accuracy", ref_acc, "fraction")
    rec("logits_match_reference", bool(np.array_equal(rep.logits, ref)), "bool")
    rec("energy", rep.energy, "energy units")
    rec("cycles", rep.cycles, "cycles")
    rec("conversions", rep.conversions, "conversions")
    rec("saturations", rep.saturations, "events")
    return rec.records


def _sweep_point(point: RunConfig) -> list[ReportRecord]:
    rec = Recorder("sweep", point)
    rows = monte_carlo_linearity([getattr(point.nonideal, point.sweep.param)], point.run.trials,
                                 point.adc, point.array, point.nonideal, point.sweep.param,
                                 point.run.points_per_code)
    row = rows[0]
    rec("mode", point.adc.mode.value, "label")
    rec("bits", point.adc.bits, "bits")
    rec(point.sweep.param, row["sigma"], "VDD" if "comparator" in point.sweep.param else "relative")
    for key, value in row.items():
        if key.startswith(("dnl_", "inl_")):
            rec(f"max_abs_{key}", value, "LSB")
        elif key.startswith("frac_"):
            rec(key, value, "fraction")
    rec("cycles_per_conversion", point.adc.cycles(), "cycles")
    return rec.records


def cmd_sweep(cfg: RunConfig, args) -> list[ReportRecord]:
    # --mode / --bits narrow the grid to one value
    modes = (args.mode,) if args.mode else cfg.sweep.modes
    bit_list = (args.bits,) if args.bits else cfg.sweep.bits
    points = []
    for mode in modes:
        for bits in bit_list:
            for value in cfg.sweep.values:
                adc = AdcConfig(bits, Mode(mode), min(cfg.adc.flash_bits, bits - 1) or 1,
                                cfg.adc.bubble_repair)
                if adc.mode is Mode.HYBRID and bits < 2:
                    continue
                nonideal = replace(cfg.nonideal, **{cfg.sweep.param: value})
                points.append(replace(cfg, adc=adc, nonideal=nonideal))
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            groups = list(pool.map(_sweep_point, points))
    else:
        groups = [_sweep_point(p) for p in points]
    records = [r for g in groups for r in g]
    print(f"swept {len(points)} grid points")
    return records


COMMANDS = {
    "digitize": cmd_digitize,
    "ramp": cmd_ramp,
    "tree": cmd_tree,
    "schedule": cmd_schedule,
    "infer": cmd_infer,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file")
    common.add_argument("--seed", type=lambda s: int(s, 0), help="unsigned 64-bit seed")
    common.add_argument("--bits", type=int, help="ADC precision")
    common.add_argument("--mode", choices=[m.value for m in Mode], help="digitization mode")
    common.add_argument("--out", help="output directory")

    parser = argparse.ArgumentParser(prog="cimsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("digitize", parents=[common], help="single conversions with traces")
    p.add_argument("--x", type=float, nargs="+", help="discharged fractions to convert")
    p.add_argument("--tree", help="tree file for tree mode")
    sub.add_parser("ramp", parents=[common], help="staircase and DNL/INL")
    p = sub.add_parser("tree", parents=[common], help="optimal search tree")
    p.add_argument("--uniform", action="store_true", help="uniform code distribution")
    p.add_argument("--codes", help="file of observed codes for an empirical distribution")
    p.add_argument("--tree", help="evaluate this tree instead of building one")
    sub.add_parser("schedule", parents=[common], help="cycle trace and energy")
    sub.add_parser("infer", parents=[common], help="quantized MLP inference")
    p = sub.add_parser("sweep", parents=[common], help="linearity over a sigma/mode/bits grid")
    p.add_argument("--jobs", type=int, default=1, help="parallel grid points")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config) if args.config else parse_config_text_default()
        cfg = override(cfg, seed=args.seed, bits=args.bits, mode=args.mode, out=args.out)
        records = COMMANDS[args.command](cfg, args)
        out = _out(cfg)
        emit_reports(records, out)
        (out / "config.txt").write_text(emit_config(cfg))
    except (ValueError, OSError, KeyError) as e:
        print(f"cimsim {args.command}: error: {e}", file=sys.stderr)
        return 2
    return 0


def parse_config_text_default() -> RunConfig:
    from cimsim.config import parse_config_text

    return parse_config_text("")


if __name__ == "__main__":
    sys.exit(main())
