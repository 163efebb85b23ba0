"""Regenerate the bundled 8x8 digit fixture and the quantized MLP models.

Needs scikit-learn (not a runtime dependency). Training happens here only;
the package ships the resulting integer files.

    python scripts/build_fixtures.py [--out src/cimsim/data]
"""

import argparse
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits
from sklearn.linear_model import LogisticRegression
from sklearn.neural_network import MLPClassifier

from cimsim.inference import (
    Dataset,
    QuantizedLayer,
    QuantizedModel,
    activation,
    format_dataset,
    format_model,
    reference_forward,
)

N_TEST = 360
HIDDEN = 24
INPUT_MAX = 16


def quantize_weights(w, w_bits, scale):
    """Map float weights to unsigned codes whose signed value is 2*code - (2^B - 1)."""
    top = 2**w_bits - 1
    return np.clip(np.round((w / scale + top) / 2), 0, top).astype(np.int64)


def accuracy(model, images, labels):
    return float(np.mean(np.argmax(reference_forward(model, images), axis=1) == labels))


def fit_output_layer(h, labels, bits, first_layers, images):
    """Logistic fit on integer features, then a grid search over the weight scale."""
    clf = LogisticRegression(fit_intercept=False, max_iter=3000, C=0.5).fit(h, labels)
    best = None
    amax = np.abs(clf.coef_).max()
    for frac in np.linspace(0.05, 1.0, 40):
        scale = amax * frac / (2**bits - 1)
        layer = QuantizedLayer(quantize_weights(clf.coef_, bits, scale), bits, bits, 2**bits - 1)
        model = QuantizedModel((*first_layers, layer), INPUT_MAX)
        acc = accuracy(model, images, labels)
        if best is None or acc > best[0]:
            best = (acc, model)
    return best


def build(bits, two_layer, x_tr, y_tr, seed=0):
    zp2 = 2**bits - 1
    probe = QuantizedModel((QuantizedLayer(np.zeros((10, 64), np.int64), bits, bits, zp2),), INPUT_MAX)
    xq = probe.quantize_inputs(x_tr)
    if not two_layer:
        return fit_output_layer(xq, y_tr, bits, (), x_tr)[1]
    mlp = MLPClassifier((HIDDEN,), max_iter=3000, random_state=seed, alpha=1e-3).fit(xq, y_tr)
    w1 = mlp.coefs_[0].T
    codes = quantize_weights(w1, bits, 2 * np.abs(w1).mean() / zp2)
    best = None
    for shift in range(0, 10):
        l1 = QuantizedLayer(codes, bits, bits, zp2, shift)
        h = activation(2 * (xq @ codes.T) - zp2 * xq.sum(1, keepdims=True), shift, bits)
        if h.max() == 0:
            continue
        cand = fit_output_layer(h, y_tr, bits, (l1,), x_tr)
        if best is None or cand[0] > best[0]:
            best = cand
    return best[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src/cimsim/data"))
    args = ap.parse_args()
    out = Path(args.out)

    digits = load_digits()
    x, y = digits.data.astype(np.int64), digits.target.astype(np.int64)
    perm = np.random.default_rng(0).permutation(len(y))
    x, y = x[perm], y[perm]
    x_tr, y_tr, x_te, y_te = x[:-N_TEST], y[:-N_TEST], x[-N_TEST:], y[-N_TEST:]

    (out / "digits8x8.txt").write_text(
        "# 8x8 handwritten digits (UCI via scikit-learn), pixels 0..16, held-out split\n"
        + format_dataset(Dataset(x_te, y_te, 8, 8, 10)))
    for name, bits, two in [("mlp1_b1", 1, False), ("mlp1_b2", 2, False),
                            ("mlp2_b1", 1, True), ("mlp2_b2", 2, True)]:
        model = build(bits, two, x_tr, y_tr)
        (out / f"{name}.txt").write_text(format_model(model))
        print(f"{name}: train {accuracy(model, x_tr, y_tr):.3f} test {accuracy(model, x_te, y_te):.3f}")


if __name__ == "__main__":
    main()
