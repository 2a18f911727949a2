"""Small dense networks with hand-written backpropagation.

Used by both the structural link predictor and the KGEM simulator.
Parameters are plain float64 arrays so :class:`~kgstruct.optim.Adam` can
update them in place.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ValidationError

ACTIVATIONS = ("relu", "sigmoid", "identity")


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _activate(kind, z):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        return sigmoid(z)
    return z


def _activation_grad(kind, z, a, da):
    if kind == "relu":
        return da * (z > 0)
    if kind == "sigmoid":
        return da * a * (1.0 - a)
    return da


class MLP:
    """Stack of dense layers.

    ``sizes`` lists layer widths from input to output.  Every layer but the
    last uses ``hidden``; the last uses ``output``.  Inverted dropout with
    probability ``dropout`` follows each hidden activation during training.
    Weights are drawn uniformly in ``±1/sqrt(fan_in)``; biases start at 0.
    """

    def __init__(self, sizes, hidden="relu", output="sigmoid", dropout=0.0, rng=None):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValidationError(f"layer sizes must be >= 1 and at least two, got {sizes}")
        if hidden not in ACTIVATIONS or output not in ACTIVATIONS:
            raise ValidationError(f"activations must be in {ACTIVATIONS}")
        if not 0.0 <= dropout < 1.0:
            raise ValidationError("dropout must be in [0, 1)")
        self.sizes = sizes
        self.hidden = hidden
        self.output = output
        self.dropout = float(dropout)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def n_inputs(self) -> int:
        return self.sizes[0]

    @property
    def params(self) -> list[np.ndarray]:
        """Weights and biases interleaved: ``[W1, b1, W2, b2, ...]``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def forward(self, X, training=False, rng=None):
        """Outputs for ``X`` plus a cache for :meth:`backward`."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_inputs:
            raise ValidationError(f"expected input width {self.n_inputs}, got shape {X.shape}")
        if training and self.dropout > 0 and rng is None:
            raise ValidationError("training with dropout needs an rng")
        cache = []
        a = X
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            kind = self.output if i == last else self.hidden
            out = _activate(kind, z)
            keep = None
            if i != last and training and self.dropout > 0:
                keep = (rng.random(out.shape) >= self.dropout) / (1.0 - self.dropout)
                dropped = out * keep
            else:
                dropped = out
            cache.append((a, z, out, keep, kind))
            a = dropped
        return a, cache

    def predict(self, X) -> np.ndarray:
        return self.forward(X)[0]

    def backward(self, cache, d_out):
        """Parameter gradients (``params`` order) and the input gradient."""
        grads = [None] * (2 * len(self.weights))
        da = np.asarray(d_out, dtype=np.float64)
        for i in range(len(self.weights) - 1, -1, -1):
            a_in, z, out, keep, kind = cache[i]
            if keep is not None:
                da = da * keep
            dz = _activation_grad(kind, z, out, da)
            grads[2 * i] = a_in.T @ dz
            grads[2 * i + 1] = dz.sum(axis=0)
            da = dz @ self.weights[i].T
        return grads, da

    def get_state(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params]

    def set_state(self, arrays) -> None:
        arrays = list(arrays)
        if len(arrays) != 2 * len(self.weights):
            raise ValidationError("parameter count does not match the network")
        for dst, src in zip(self.params, arrays):
            src = np.asarray(src, dtype=np.float64)
            if src.shape != dst.shape:
                raise ValidationError(f"shape {src.shape} does not match {dst.shape}")
            dst[...] = src

    def describe(self) -> dict:
        return {"sizes": self.sizes, "hidden": self.hidden, "output": self.output,
                "dropout": self.dropout}
