"""Small fully-connected ReLU networks with exact parameter and input gradients.

Two heads are supported: a softmax classifier (cross-entropy loss) and a
sigmoid multi-label head (binary cross-entropy summed over outputs). Inputs are
image batches of shape ``(n, H, W, C)``; they are flattened and standardised
with a fixed scalar centre and scale before the first affine layer.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

HEADS = ("softmax", "sigmoid")
_MAGIC = b"TNET1\n"


@dataclass(frozen=True)
class Architecture:
    input_shape: tuple[int, ...]
    layers: tuple[tuple[int, int], ...]
    head: str
    labels: tuple[str, ...]
    input_center: float = 0.0
    input_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "input_center", float(self.input_center))
        object.__setattr__(self, "input_scale", float(self.input_scale))
        if not (np.isfinite(self.input_center) and np.isfinite(self.input_scale) and self.input_scale > 0):
            raise ValueError("input scale must be positive and finite")
        object.__setattr__(self, "layers", tuple((int(a), int(b)) for a, b in self.layers))
        object.__setattr__(self, "labels", tuple(self.labels))
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        if not self.layers:
            raise ValueError("architecture needs at least one layer")
        if self.layers[0][0] != int(np.prod(self.input_shape)):
            raise ValueError(
                f"first layer takes {self.layers[0][0]} inputs, image has {int(np.prod(self.input_shape))}"
            )
        for (_, out), (nxt, _) in zip(self.layers, self.layers[1:]):
            if out != nxt:
                raise ValueError(f"layer dimension mismatch: {out} -> {nxt}")
        if self.layers[-1][1] != len(self.labels):
            raise ValueError(f"output width {self.layers[-1][1]} != {len(self.labels)} labels")

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "layers": [list(l) for l in self.layers],
            "head": self.head,
            "labels": list(self.labels),
            "input_center": self.input_center,
            "input_scale": self.input_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Architecture":
        return cls(
            tuple(d["input_shape"]),
            tuple(tuple(l) for l in d["layers"]),
            d["head"],
            tuple(d["labels"]),
            d.get("input_center", 0.0),
            d.get("input_scale", 1.0),
        )


def mlp(
    input_shape: Sequence[int],
    hidden: Sequence[int],
    labels: Sequence[str],
    head: str = "softmax",
    center: float = 0.0,
    scale: float = 1.0,
) -> Architecture:
    dims = [int(np.prod(input_shape)), *hidden, len(labels)]
    return Architecture(tuple(input_shape), tuple(zip(dims[:-1], dims[1:])), head, tuple(labels), center, scale)


def standardizer(X) -> tuple[float, float]:
    """Scalar mean and standard deviation of a training set, rounded to float32."""
    X = np.asarray(X, dtype=np.float64)
    sd = float(X.std())
    return float(np.float32(X.mean())), float(np.float32(sd if sd > 0 else 1.0))


@dataclass
class TinyNet:
    arch: Architecture
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        for (n_in, n_out), w, b in zip(self.arch.layers, self.weights, self.biases):
            if w.shape != (n_in, n_out) or b.shape != (n_out,):
                raise ValueError("parameter shapes do not match the architecture")
        if len(self.weights) != len(self.arch.layers) or len(self.biases) != len(self.arch.layers):
            raise ValueError("parameter count does not match the architecture")

    @property
    def head(self) -> str:
        return self.arch.head

    @property
    def labels(self) -> tuple[str, ...]:
        return self.arch.labels

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "TinyNet":
        return TinyNet(self.arch, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def all_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.params())

    def __call__(self, X):
        return forward(self, X)


def init(arch: Architecture, seed: int) -> TinyNet:
    """Uniform fan-in scaled initialisation (He-uniform bound), rounded to float32."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in arch.layers:
        bound = np.sqrt(6.0 / n_in)
        w = rng.uniform(-bound, bound, size=(n_in, n_out)).astype(np.float32).astype(np.float64)
        weights.append(w)
        biases.append(np.zeros(n_out))
    return TinyNet(arch, weights, biases)


def zeros(arch: Architecture) -> TinyNet:
    return TinyNet(arch, [np.zeros(l) for l in arch.layers], [np.zeros(l[1]) for l in arch.layers])


def _flatten(net: TinyNet, X) -> tuple[np.ndarray, bool]:
    X = np.asarray(X, dtype=np.float64)
    shape = net.arch.input_shape
    if X.shape == shape:
        return X.reshape(1, -1), True
    if X.shape[1:] != shape:
        raise ValueError(f"input shape {X.shape} does not match {shape}")
    return X.reshape(len(X), -1), False


def _standardize(net: TinyNet, A: np.ndarray) -> np.ndarray:
    a = net.arch
    if a.input_center == 0.0 and a.input_scale == 1.0:
        return A
    return (A - a.input_center) / a.input_scale


def _logits(net: TinyNet, A: np.ndarray):
    """Forward through all layers; returns logits and the per-layer inputs/pre-activations."""
    cache = []
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        Z = A @ w + b
        cache.append((A, Z))
        A = np.maximum(Z, 0.0) if i < len(net.weights) - 1 else Z
    return A, cache


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def forward(net: TinyNet, X) -> np.ndarray:
    """Class probabilities (softmax head) or per-label confidences (sigmoid head)."""
    A, single = _flatten(net, X)
    z, _ = _logits(net, _standardize(net, A))
    out = _softmax(z) if net.head == "softmax" else _sigmoid(z)
    return out[0] if single else out


def predict(net: TinyNet, X):
    """Argmax class index (lowest index wins ties) or raw confidences for multi-label nets."""
    probs = forward(net, X)
    if net.head == "sigmoid":
        return probs
    return np.argmax(probs, axis=-1)


def _targets(net: TinyNet, y, n: int) -> np.ndarray:
    if net.head == "softmax":
        y = np.atleast_1d(np.asarray(y, dtype=np.int64))
        if y.shape != (n,):
            raise ValueError(f"expected {n} class labels, got shape {y.shape}")
        if (y < 0).any() or (y >= len(net.labels)).any():
            raise ValueError("class label out of range")
        T = np.zeros((n, len(net.labels)))
        T[np.arange(n), y] = 1.0
        return T
    T = np.asarray(y, dtype=np.float64).reshape(n, -1)
    if T.shape[1] != len(net.labels):
        raise ValueError(f"expected {len(net.labels)} targets per sample, got {T.shape[1]}")
    return T


def _loss_and_backward(net: TinyNet, X, y, want_params: bool):
    A, single = _flatten(net, X)
    n = len(A)
    T = _targets(net, y, n)
    z, cache = _logits(net, _standardize(net, A))
    if net.head == "softmax":
        shifted = z - z.max(axis=1, keepdims=True)
        logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        loss = -(T * logp).sum() / n
        dz = (np.exp(logp) - T) / n
    else:
        # log(1 + e^z) - t z, summed over labels
        loss = (np.logaddexp(0.0, z) - T * z).sum() / n
        dz = (_sigmoid(z) - T) / n

    grads_w, grads_b = [None] * len(net.weights), [None] * len(net.weights)
    for i in range(len(net.weights) - 1, -1, -1):
        A_in, Z = cache[i]
        if i < len(net.weights) - 1:
            dz = dz * (Z > 0)
        if want_params:
            grads_w[i] = A_in.T @ dz
            grads_b[i] = dz.sum(axis=0)
        dz = dz @ net.weights[i].T
    gX = (dz / net.arch.input_scale).reshape((n, *net.arch.input_shape))
    if single:
        gX = gX[0]
    return loss, gX, grads_w, grads_b


def loss_and_input_grad(net: TinyNet, X, y) -> tuple[float, np.ndarray]:
    """Mean loss over the batch and its gradient with respect to the input pixels."""
    loss, gX, _, _ = _loss_and_backward(net, X, y, want_params=False)
    return float(loss), gX


def loss_and_grads(net: TinyNet, X, y):
    """Mean loss plus ``(weight_grads, bias_grads)`` lists aligned with the layers."""
    loss, _, gw, gb = _loss_and_backward(net, X, y, want_params=True)
    return float(loss), gw, gb


def preactivations(net: TinyNet, X) -> list[np.ndarray]:
    A, _ = _flatten(net, X)
    _, cache = _logits(net, _standardize(net, A))
    return [Z for _, Z in cache[:-1]]


def _round32(a: np.ndarray) -> np.ndarray:
    return a.astype(np.float32).astype(np.float64)


BatchHook = Callable[[TinyNet, np.ndarray, np.ndarray], np.ndarray]


def train(
    net: TinyNet,
    X,
    y,
    epochs: int,
    lr: float,
    seed: int,
    batch_size: int = 32,
    momentum: float = 0.9,
    batch_hook: BatchHook | None = None,
) -> tuple[TinyNet, list[float]]:
    """Mini-batch SGD with per-epoch reshuffling.

    Returns a trained copy and the mean mini-batch loss of each epoch.
    ``batch_hook`` may replace each mini-batch's inputs before the gradient
    step (adversarial training uses it). Parameters are kept float32-exact so
    checkpoints round-trip bit for bit.
    """
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    y = np.asarray(y)
    net = net.copy()
    rng = np.random.default_rng(seed)
    vel_w = [np.zeros_like(w) for w in net.weights]
    vel_b = [np.zeros_like(b) for b in net.biases]
    curve = []
    for _ in range(epochs):
        order = rng.permutation(n)
        losses, sizes = [], []
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            xb, yb = X[idx], y[idx]
            if batch_hook is not None:
                xb = batch_hook(net, xb, yb)
            loss, gw, gb = loss_and_grads(net, xb, yb)
            for i in range(len(net.weights)):
                vel_w[i] = momentum * vel_w[i] - lr * gw[i]
                vel_b[i] = momentum * vel_b[i] - lr * gb[i]
                net.weights[i] = _round32(net.weights[i] + vel_w[i])
                net.biases[i] = _round32(net.biases[i] + vel_b[i])
            losses.append(loss)
            sizes.append(len(idx))
        curve.append(float(np.average(losses, weights=sizes)))
    return net, curve


def accuracy(net: TinyNet, X, y) -> float:
    y = np.asarray(y)
    if len(y) == 0:
        raise ValueError("empty evaluation set")
    return float(np.mean(predict(net, X) == y))


def save(net: TinyNet, path: str | Path) -> None:
    """Header (architecture JSON) followed by little-endian float32 parameters."""
    header = json.dumps(net.arch.to_dict(), sort_keys=True).encode()
    blob = b"".join(np.ascontiguousarray(p, dtype="<f4").tobytes() for p in net.params())
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(blob)


def load(path: str | Path) -> TinyNet:
    raw = Path(path).read_bytes()
    if not raw.startswith(_MAGIC):
        raise ValueError(f"{path}: not a model checkpoint")
    off = len(_MAGIC)
    (hlen,) = struct.unpack_from("<I", raw, off)
    off += 4
    arch = Architecture.from_dict(json.loads(raw[off:off + hlen]))
    off += hlen
    weights, biases = [], []
    for n_in, n_out in arch.layers:
        for shape, dest in (((n_in, n_out), weights), ((n_out,), biases)):
            count = int(np.prod(shape))
            if off + 4 * count > len(raw):
                raise ValueError(f"{path}: truncated checkpoint")
            dest.append(np.frombuffer(raw, dtype="<f4", count=count, offset=off).astype(np.float64).reshape(shape))
            off += 4 * count
    if off != len(raw):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return TinyNet(arch, weights, biases)
