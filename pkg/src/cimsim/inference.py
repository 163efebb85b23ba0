"""Bit-serial quantized MLP inference on the simulated CiM fabric.

Weights are unsigned B_w-bit integers; each weight bit of each output
neuron is stored in its own array row. Inputs are applied one bit plane per
cycle. Every row activation produces a MAV over at most 2^b - 1 active
columns, which the ADC digitizes into the exact discharged-column count
under ideal conditions. Digitized counts are recombined by shift-add:
``sum_plane sum_sig 2^(plane + sig) * count``.

Signed weights are handled digitally through a zero point stored at twice
its value (``zero_point2``) so that everything stays integer::

    y = 2 * (W @ x) - zero_point2 * sum(x)

File formats are documented in the README.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from cimsim.adc import AdcChain, AdcConfig, ConfigError
from cimsim.analog import ArrayGeometry, CapVector, NonidealityParams, draw_mismatch, rng_for
from cimsim.energy import DEFAULT_COST, CostParams
from cimsim.search_tree import SearchTree

MAX_PRECISION = 4


class CapacityError(ValueError):
    pass


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class QuantizedLayer:
    weights: np.ndarray  # (outputs, inputs), unsigned
    w_bits: int
    x_bits: int
    zero_point2: int = 0
    out_shift: int = 0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.int64)
        if w.ndim != 2:
            raise ValueError("weights must be a matrix")
        if not (1 <= self.w_bits <= MAX_PRECISION and 1 <= self.x_bits <= MAX_PRECISION):
            raise ValueError(f"B_w and B_x must lie in 1..{MAX_PRECISION}")
        if w.size and (w.min() < 0 or w.max() >= 2**self.w_bits):
            raise ValueError(f"weights must fit in {self.w_bits} unsigned bits")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape


@dataclass(frozen=True)
class QuantizedModel:
    layers: tuple[QuantizedLayer, ...]
    input_max: int = 16

    def quantize_inputs(self, images) -> np.ndarray:
        levels = 2 ** self.layers[0].x_bits - 1
        px = np.clip(np.asarray(images, dtype=np.int64), 0, self.input_max)
        return (px * levels + self.input_max // 2) // self.input_max


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # (n, height*width)
    labels: np.ndarray
    height: int
    width: int
    classes: int

    def __len__(self):
        return self.labels.size


def reference_matvec(x, layer: QuantizedLayer) -> np.ndarray:
    """Unsigned integer product sums W @ x (oracle for the fabric)."""
    return np.asarray(x, dtype=np.int64) @ layer.weights.T


def finish_layer(psum: np.ndarray, x: np.ndarray, layer: QuantizedLayer) -> np.ndarray:
    """Apply the digital zero-point correction to unsigned product sums."""
    return 2 * psum - layer.zero_point2 * np.asarray(x, dtype=np.int64).sum(axis=-1, keepdims=True)


def activation(y: np.ndarray, shift: int, x_bits: int) -> np.ndarray:
    """ReLU, rescale by a right shift, clamp to the next layer's input range."""
    return np.clip(np.maximum(y, 0) >> shift, 0, 2**x_bits - 1)


def forward(model: QuantizedModel, images, matvec) -> np.ndarray:
    x = model.quantize_inputs(images)
    for i, layer in enumerate(model.layers):
        y = finish_layer(matvec(x, layer, i), x, layer)
        if i + 1 < len(model.layers):
            x = activation(y, layer.out_shift, model.layers[i + 1].x_bits)
    return y


def reference_forward(model: QuantizedModel, images) -> np.ndarray:
    return forward(model, images, lambda x, layer, i: reference_matvec(x, layer))


@dataclass(frozen=True)
class Tile:
    tile_id: int
    col_start: int  # input range mapped to columns 0 .. width-1
    col_stop: int
    rows: tuple[tuple[int, int], ...]  # stored row -> (output neuron, weight-bit significance)
    weights: np.ndarray  # (len(rows), cols) stored bits


@dataclass(frozen=True)
class TilePlan:
    tiles: tuple[Tile, ...]
    shape: tuple[int, int]
    w_bits: int
    x_bits: int
    bits: int
    geometry: ArrayGeometry

    @property
    def stored_rows(self) -> int:
        return sum(len(t.rows) for t in self.tiles)


def tile_layer(layer: QuantizedLayer, geometry: ArrayGeometry = ArrayGeometry(), bits: int = 5,
               max_tiles: int | None = None) -> TilePlan:
    """Map a layer onto arrays.

    Dot products are cut into chunks of at most 2^b - 1 inputs; within a
    chunk, rows (neuron, significance) are packed in order, `geometry.rows`
    per tile. Chunk partial sums are added digitally.
    """
    if geometry.cols != 2**bits:
        raise ConfigError(f"exact count recovery needs cols == 2^bits, got {geometry.cols} vs 2^{bits}")
    budget = 2**bits - 1
    n_out, n_in = layer.shape
    row_list = [(j, s) for j in range(n_out) for s in range(layer.w_bits)]
    tiles = []
    for start in range(0, n_in, budget):
        stop = min(start + budget, n_in)
        for r0 in range(0, len(row_list), geometry.rows):
            rows = tuple(row_list[r0:r0 + geometry.rows])
            w = np.zeros((len(rows), geometry.cols), np.uint8)
            for r, (j, s) in enumerate(rows):
                w[r, :stop - start] = (layer.weights[j, start:stop] >> s) & 1
            tiles.append(Tile(len(tiles), start, stop, rows, w))
    if max_tiles is not None and len(tiles) > max_tiles:
        raise CapacityError(f"layer needs {len(tiles)} tiles, fabric has {max_tiles}")
    return TilePlan(tuple(tiles), layer.shape, layer.w_bits, layer.x_bits, bits, geometry)


@dataclass
class Fabric:
    """Per-tile compute-array capacitances and the ADC chain digitizing each tile."""

    caps: list[CapVector]
    chains: list[AdcChain]

    @classmethod
    def build(cls, plan: TilePlan, cfg: AdcConfig, nonideal: NonidealityParams = NonidealityParams(),
              tree: SearchTree | None = None, layer: int = 0, cost: CostParams = DEFAULT_COST) -> Fabric:
        if cfg.bits != plan.bits:
            raise ConfigError("ADC precision differs from the tiling precision")
        caps, chains = [], []
        for t in plan.tiles:
            stream = 1 + layer * 4096 + 2 * t.tile_id
            caps.append(draw_mismatch(plan.geometry, nonideal, stream=stream * 1000 + 999))
            chains.append(AdcChain.build(cfg, plan.geometry, nonideal, tree, stream=stream, cost=cost))
        return cls(caps, chains)


@dataclass
class MatvecResult:
    outputs: np.ndarray
    tile_energy: dict[int, float]
    compute_energy: float
    cycles: int
    conversions: int
    saturations: int
    codes: np.ndarray | None = None

    @property
    def energy(self) -> float:
        return sum(self.tile_energy.values()) + self.compute_energy


def cim_matvec(x, plan: TilePlan, fabric: Fabric, rng=None, keep_codes: bool = False) -> MatvecResult:
    """Unsigned product sums W @ x computed bit-serially on the fabric.

    `x` is one input vector or a batch (n, inputs).
    """
    x = np.asarray(x, dtype=np.int64)
    single = x.ndim == 1
    X = x[None] if single else x
    n_out, n_in = plan.shape
    if X.shape[1] != n_in:
        raise ValueError(f"expected {n_in} inputs, got {X.shape[1]}")
    if X.size and (X.min() < 0 or X.max() >= 2**plan.x_bits):
        raise ValueError(f"inputs must fit in {plan.x_bits} unsigned bits")
    n = X.shape[0]
    cols = plan.geometry.cols
    top = 2**plan.bits - 1
    out = np.zeros((n, n_out), np.int64)
    tile_energy: dict[int, float] = {}
    compute_energy = 0.0
    cycles = conversions = saturations = 0
    kept = []
    for tile, caps, chain in zip(plan.tiles, fabric.caps, fabric.chains):
        width = tile.col_stop - tile.col_start
        neuron = np.array([j for j, _ in tile.rows])
        sig = np.array([s for _, s in tile.rows])
        xs = np.zeros((n, cols), np.uint8)
        e_tile = 0.0
        for plane in range(plan.x_bits):
            xs[:, :width] = (X[:, tile.col_start:tile.col_stop] >> plane) & 1
            flags = tile.weights[None, :, :] & xs[:, None, :]
            k = flags.sum(axis=2)
            v = ((1 - flags) @ caps.multipliers) / caps.total
            res = chain.convert_mav(v, rng)
            codes = res.codes.reshape(n, len(tile.rows))
            saturations += int(np.sum(k > top))
            contrib = codes << (plane + sig)[None, :]
            np.add.at(out.T, neuron, contrib.T)
            e_tile += float(res.energy(chain.cost).sum())
            compute_energy += codes.size * chain.cost.e_merge
            cycles += int(codes.size + res.cycles.sum())
            conversions += codes.size
            if keep_codes:
                kept.append(codes.ravel())
        tile_energy[tile.tile_id] = e_tile
    return MatvecResult(out[0] if single else out, tile_energy, compute_energy, cycles,
                        conversions, saturations, np.concatenate(kept) if kept else None)


@dataclass
class InferenceReport:
    accuracy: float
    logits: np.ndarray
    predictions: np.ndarray
    energy: float
    cycles: int
    conversions: int
    saturations: int
    codes: np.ndarray | None = field(default=None, repr=False)


def run_inference(model: QuantizedModel, data: Dataset, cfg: AdcConfig = AdcConfig(),
                  nonideal: NonidealityParams = NonidealityParams(),
                  geometry: ArrayGeometry = ArrayGeometry(), tree: SearchTree | None = None,
                  cost: CostParams = DEFAULT_COST, keep_codes: bool = False) -> InferenceReport:
    if data.images.shape[1] != model.layers[0].shape[1]:
        raise DatasetError(f"dataset has {data.images.shape[1]} pixels, model expects {model.layers[0].shape[1]}")
    plans = [tile_layer(layer, geometry, cfg.bits) for layer in model.layers]
    fabrics = [Fabric.build(p, cfg, nonideal, tree, layer=i, cost=cost) for i, p in enumerate(plans)]
    rng = rng_for(nonideal.seed, 0x1F) if nonideal.comparator_noise_sigma > 0 else None
    stats = {"energy": 0.0, "cycles": 0, "conversions": 0, "saturations": 0}
    codes = []

    def matvec(x, layer, i):
        res = cim_matvec(x, plans[i], fabrics[i], rng, keep_codes)
        stats["energy"] += res.energy
        stats["cycles"] += res.cycles
        stats["conversions"] += res.conversions
        stats["saturations"] += res.saturations
        if keep_codes:
            codes.append(res.codes)
        return res.outputs

    logits = forward(model, data.images, matvec)
    pred = np.argmax(logits, axis=1)
    return InferenceReport(float(np.mean(pred == data.labels)), logits, pred, stats["energy"],
                           stats["cycles"], stats["conversions"], stats["saturations"],
                           np.concatenate(codes) if codes else None)


def lsb_noise(sigma_lsb: float, bits: int) -> float:
    """Comparator noise sigma in VDD units for a sigma given in LSB."""
    return sigma_lsb / 2**bits


def _data_lines(text: str):
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def parse_dataset(text: str) -> Dataset:
    lines = list(_data_lines(text))
    if not lines:
        raise DatasetError("empty dataset file")
    try:
        n, h, w, classes = (int(v) for v in lines[0][1])
    except ValueError as e:
        raise DatasetError(f"line {lines[0][0]}: header must be 'n_samples height width classes'") from e
    if len(lines) - 1 != n:
        raise DatasetError(f"header announces {n} samples, found {len(lines) - 1}")
    images = np.zeros((n, h * w), np.int64)
    labels = np.zeros(n, np.int64)
    for i, (lineno, tok) in enumerate(lines[1:]):
        if len(tok) != h * w + 1:
            raise DatasetError(f"line {lineno}: expected {h * w} pixels and a label, got {len(tok)} values")
        try:
            vals = [int(v) for v in tok]
        except ValueError as e:
            raise DatasetError(f"line {lineno}: non-integer value") from e
        if min(vals[:-1]) < 0 or not 0 <= vals[-1] < classes:
            raise DatasetError(f"line {lineno}: negative pixel or label outside 0..{classes - 1}")
        images[i], labels[i] = vals[:-1], vals[-1]
    return Dataset(images, labels, h, w, classes)


def format_dataset(data: Dataset) -> str:
    out = [f"{len(data)} {data.height} {data.width} {data.classes}"]
    for img, lab in zip(data.images, data.labels):
        out.append(" ".join(str(int(v)) for v in img) + f" {int(lab)}")
    return "\n".join(out) + "\n"


def parse_model(text: str) -> QuantizedModel:
    lines = list(_data_lines(text))
    try:
        lineno, tok = lines[0]
        if tok[0] != "model" or tok[2] != "input_max":
            raise ValueError
        n_layers, input_max = int(tok[1]), int(tok[3])
    except (IndexError, ValueError) as e:
        raise DatasetError("model header must be 'model <layers> input_max <max>'") from e
    pos, layers = 1, []
    for _ in range(n_layers):
        try:
            lineno, tok = lines[pos]
            if tok[0] != "layer":
                raise ValueError
            rows, cols, wb, xb, zp2, shift = (int(v) for v in tok[1:7])
            w = np.array([[int(v) for v in lines[pos + 1 + r][1]] for r in range(rows)], np.int64)
            if w.shape != (rows, cols):
                raise ValueError
            layers.append(QuantizedLayer(w, wb, xb, zp2, shift))
        except (IndexError, ValueError) as e:
            raise DatasetError(f"line {lineno}: malformed layer block") from e
        pos += 1 + rows
    if pos != len(lines):
        raise DatasetError("trailing content after last layer")
    for a, b in zip(layers, layers[1:]):
        if a.shape[0] != b.shape[1]:
            raise DatasetError("consecutive layer dimensions do not chain")
    return QuantizedModel(tuple(layers), input_max)


def format_model(model: QuantizedModel) -> str:
    out = [f"model {len(model.layers)} input_max {model.input_max}"]
    for layer in model.layers:
        r, c = layer.shape
        out.append(f"layer {r} {c} {layer.w_bits} {layer.x_bits} {layer.zero_point2} {layer.out_shift}")
        out += [" ".join(str(int(v)) for v in row) for row in layer.weights]
    return "\n".join(out) + "\n"


def load_dataset(path) -> Dataset:
    return parse_dataset(Path(path).read_text())


def load_model(path) -> QuantizedModel:
    return parse_model(Path(path).read_text())


def builtin_digits() -> Dataset:
    return parse_dataset(resources.files("cimsim.data").joinpath("digits8x8.txt").read_text())


BUILTIN_MODELS = ("mlp1_b1", "mlp1_b2", "mlp2_b1", "mlp2_b2")


def builtin_model(name: str) -> QuantizedModel:
    if name not in BUILTIN_MODELS:
        raise KeyError(f"unknown built-in model {name!r}; choose from {BUILTIN_MODELS}")
    return parse_model(resources.files("cimsim.data").joinpath(f"{name}.txt").read_text())
