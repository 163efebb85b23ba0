"""Run configuration: a sectioned ``key = value`` text format.

Grammar (one item per line, ``#`` starts a comment)::

    [section]
    key = value

Every key belongs to a known section; unknown sections or keys, repeated
keys and malformed values are rejected with the offending line number.
Lists are comma separated. ``auto`` lets a value be derived from others
(fabric topology and array count follow the ADC mode).
"""

from __future__ import annotations

import dataclasses
import hashlib
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from cimsim.adc import AdcConfig, ConfigError, Mode
from cimsim.analog import ArrayGeometry, NonidealityParams
from cimsim.energy import CostParams
from cimsim.fabric import CouplingPlan, Topology, build_topology

SEED_ENV = "CIMSIM_SEED"


class ConfigFileError(ConfigError):
    def __init__(self, message: str, line: int = 0, path: str = "<config>"):
        self.line = line
        where = f"{path}:{line}" if line else path
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class FabricSettings:
    topology: str = "auto"
    n_arrays: str = "auto"
    n_compute: str = "auto"
    samples: int = 1
    pipelining: bool = False


@dataclass(frozen=True)
class RunSettings:
    seed: int = 0
    out: str = "out"
    points_per_code: int = 64
    p_discharge: float = 0.25
    trials: int = 100
    inputs: tuple[float, ...] = (0.4,)
    dataset: str = "builtin"
    model: str = "mlp1_b2"
    noise_lsb: float = 0.0


@dataclass(frozen=True)
class SweepSettings:
    param: str = "cap_mismatch_sigma"
    values: tuple[float, ...] = (0.0, 0.01, 0.02)
    modes: tuple[str, ...] = ("sar",)
    bits: tuple[int, ...] = (5,)


@dataclass(frozen=True)
class RunConfig:
    array: ArrayGeometry = field(default_factory=ArrayGeometry)
    adc: AdcConfig = field(default_factory=AdcConfig)
    nonideal: NonidealityParams = field(default_factory=NonidealityParams)
    cost: CostParams = field(default_factory=CostParams)
    fabric: FabricSettings = field(default_factory=FabricSettings)
    run: RunSettings = field(default_factory=RunSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)

    def __post_init__(self):
        validate(self)

    @property
    def topology(self) -> Topology:
        if self.fabric.topology != "auto":
            return Topology(self.fabric.topology)
        return {Mode.FLASH: Topology.ONE_TO_MANY_FLASH,
                Mode.HYBRID: Topology.HYBRID}.get(self.adc.mode, Topology.PAIR_SAR)

    def plan(self) -> CouplingPlan:
        topo = self.topology
        m = self.adc.bits if topo is Topology.ONE_TO_MANY_FLASH else self.adc.flash_bits
        if self.fabric.n_arrays != "auto":
            n = int(self.fabric.n_arrays)
        elif topo is Topology.PAIR_SAR:
            n = 2
        else:
            n = 1 + 2**m - 1
        n_compute = None if self.fabric.n_compute == "auto" else int(self.fabric.n_compute)
        return build_topology(n, topo, m, n_compute, self.fabric.pipelining)

    def nonideal_with_seed(self) -> NonidealityParams:
        return replace(self.nonideal, seed=self.run.seed)


SECTIONS = {
    "array": ArrayGeometry,
    "adc": AdcConfig,
    "nonideal": NonidealityParams,
    "cost": CostParams,
    "fabric": FabricSettings,
    "run": RunSettings,
    "sweep": SweepSettings,
}
# the seed lives in [run]; nonideal.seed is filled from it
_HIDDEN = {("nonideal", "seed")}


def _section_fields(section):
    return [f for f in fields(SECTIONS[section]) if (section, f.name) not in _HIDDEN]


def _convert(section: str, key: str, raw: str):
    default = getattr(SECTIONS[section](), key)
    if isinstance(default, bool):
        low = raw.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"expected a boolean, got {raw!r}")
        return low in ("true", "1", "yes")
    if isinstance(default, Mode):
        return Mode(raw.lower())
    if isinstance(default, int):
        return int(raw, 0)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        items = [s.strip() for s in raw.split(",") if s.strip()]
        kind = type(default[0])
        if kind is str:
            return tuple(s.lower() for s in items)
        return tuple(kind(s) for s in items)
    if key in ("n_arrays", "n_compute") and raw != "auto":
        int(raw)
    return raw


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Mode):
        return value.value
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


def validate(cfg: RunConfig, lines: dict | None = None, path: str = "<config>") -> None:
    lines = lines or {}

    def fail(msg, *keys):
        raise ConfigFileError(msg, next((lines[k] for k in keys if k in lines), 0), path)

    if 2**cfg.adc.bits > cfg.array.cols:
        fail(f"2^{cfg.adc.bits} codes exceed {cfg.array.cols} columns", ("adc", "bits"), ("array", "cols"))
    try:
        cfg.adc.validate(cfg.array)
    except ConfigError as e:
        fail(str(e), ("adc", "flash_bits"), ("adc", "mode"))
    if cfg.fabric.topology != "auto":
        try:
            Topology(cfg.fabric.topology)
        except ValueError:
            fail(f"unknown topology {cfg.fabric.topology!r}", ("fabric", "topology"))
    if cfg.fabric.samples < 0:
        fail("samples must be >= 0", ("fabric", "samples"))
    if cfg.run.points_per_code < 8:
        fail("points_per_code must be >= 8", ("run", "points_per_code"))
    if not 0 <= cfg.run.p_discharge <= 1:
        fail("p_discharge must be a probability", ("run", "p_discharge"))
    if cfg.run.trials < 1:
        fail("trials must be >= 1", ("run", "trials"))
    if not 0 <= cfg.run.seed < 2**64:
        fail("seed must be an unsigned 64-bit integer", ("run", "seed"))
    if cfg.sweep.param not in ("cap_mismatch_sigma", "comparator_noise_sigma", "parasitic_frac",
                               "comparator_offset"):
        fail(f"cannot sweep {cfg.sweep.param!r}", ("sweep", "param"))
    for mode in cfg.sweep.modes:
        try:
            Mode(mode)
        except ValueError:
            fail(f"unknown sweep mode {mode!r}", ("sweep", "modes"))
    try:
        cfg.plan()
    except (ValueError, ConfigError) as e:
        fail(str(e), ("fabric", "n_arrays"), ("fabric", "topology"), ("adc", "mode"))


def parse_config_text(text: str, path: str = "<config>", env=None) -> RunConfig:
    values: dict[str, dict] = {s: {} for s in SECTIONS}
    lines: dict[tuple[str, str], int] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigFileError(f"malformed section header {line!r}", lineno, path)
            section = line[1:-1].strip().lower()
            if section not in SECTIONS:
                raise ConfigFileError(f"unknown section [{section}]", lineno, path)
            continue
        if "=" not in line:
            raise ConfigFileError(f"expected 'key = value', got {line!r}", lineno, path)
        if section is None:
            raise ConfigFileError("key outside of any section", lineno, path)
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.lower()
        if key not in {f.name for f in _section_fields(section)}:
            raise ConfigFileError(f"unknown key {key!r} in [{section}]", lineno, path)
        if (section, key) in lines:
            raise ConfigFileError(f"duplicate key {key!r} in [{section}]", lineno, path)
        try:
            values[section][key] = _convert(section, key, val)
        except ValueError as e:
            raise ConfigFileError(f"bad value for {key}: {e}", lineno, path) from None
        lines[(section, key)] = lineno

    env = os.environ if env is None else env
    if "seed" not in values["run"] and env.get(SEED_ENV):
        try:
            values["run"]["seed"] = int(env[SEED_ENV], 0)
        except ValueError:
            raise ConfigFileError(f"{SEED_ENV} must be an integer", 0, path) from None

    parts = {}
    for section, cls in SECTIONS.items():
        try:
            parts[section] = cls(**values[section])
        except ValueError as e:
            keys = list(values[section])
            raise ConfigFileError(str(e), lines.get((section, keys[0]), 0) if keys else 0, path) from None
    parts["nonideal"] = replace(parts["nonideal"], seed=parts["run"].seed)
    cfg = RunConfig.__new__(RunConfig)
    for k, v in parts.items():
        object.__setattr__(cfg, k, v)
    validate(cfg, lines, path)
    return cfg


def parse_config(path, env=None) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigFileError("no such file", 0, str(p))
    return parse_config_text(p.read_text(), str(p), env)


def emit_config(cfg: RunConfig) -> str:
    out = []
    for section in SECTIONS:
        obj = getattr(cfg, section)
        out.append(f"[{section}]")
        out += [f"{f.name} = {_fmt(getattr(obj, f.name))}" for f in _section_fields(section)]
        out.append("")
    return "\n".join(out)


def config_hash(cfg: RunConfig) -> str:
    """Digest of the canonical text; the output directory does not count."""
    text = emit_config(replace(cfg, run=replace(cfg.run, out="")))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def override(cfg: RunConfig, seed: int | None = None, bits: int | None = None,
             mode: str | None = None, out: str | None = None, **nonideal) -> RunConfig:
    """Apply command-line overrides (they beat file values and the environment)."""
    run, adc = cfg.run, cfg.adc
    if seed is not None:
        run = replace(run, seed=seed)
    if out is not None:
        run = replace(run, out=out)
    if bits is not None:
        adc = replace(adc, bits=bits)
    if mode is not None:
        adc = replace(adc, mode=Mode(mode))
    ni = replace(cfg.nonideal, seed=run.seed, **nonideal)
    return dataclasses.replace(cfg, run=run, adc=adc, nonideal=ni)
