"""Small fully connected Q-network in numpy.

All parameters live in one flat float64 vector; per-layer weight and bias
arrays are views into it, so the optimizer updates everything with a few
vector operations.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

SCHEMA_VERSION = 1


class DivergenceError(FloatingPointError):
    pass


class WeightFileError(ValueError):
    pass


class MLP:
    def __init__(self, sizes: Sequence[int], params: Optional[np.ndarray] = None, seed: int = 0):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError(f"bad layer sizes {sizes}")
        self.sizes = sizes
        n = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
        if params is None:
            params = np.zeros(n)
            self.params = params
            self._bind()
            rng = np.random.default_rng(seed)
            for W in self.weights:
                limit = math.sqrt(6.0 / W.shape[0])
                W[...] = rng.uniform(-limit, limit, size=W.shape)
        else:
            params = np.array(params, dtype=float)
            if params.shape != (n,):
                raise ValueError(f"expected {n} parameters, got {params.shape}")
            self.params = params
            self._bind()

    def _bind(self):
        self.weights, self.biases = [], []
        i = 0
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            self.weights.append(self.params[i:i + a * b].reshape(a, b))
            i += a * b
            self.biases.append(self.params[i:i + b])
            i += b

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    @property
    def output_dim(self) -> int:
        return self.sizes[-1]

    def copy(self) -> "MLP":
        return MLP(self.sizes, self.params.copy())

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.sizes[0]:
            raise ValueError(f"input dimension {x.shape[-1]} != {self.sizes[0]}")
        h = x
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if i < last:
                h = np.maximum(h, 0.0)
        return h

    __call__ = forward

    def loss_and_grad(self, X: np.ndarray, actions: np.ndarray, targets: np.ndarray):
        """Mean squared error on the selected outputs, and its gradient."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.sizes[0]:
            raise ValueError(f"input dimension {X.shape[1]} != {self.sizes[0]}")
        acts = [X]
        h = X
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if i < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        B = X.shape[0]
        rows = np.arange(B)
        err = acts[-1][rows, actions] - targets
        loss = float(err @ err) / B
        grad = np.empty_like(self.params)
        gW, gb = _views(self.sizes, grad)
        dh = np.zeros_like(acts[-1])
        dh[rows, actions] = 2.0 * err / B
        for i in range(last, -1, -1):
            gW[i][...] = acts[i].T @ dh
            gb[i][...] = dh.sum(axis=0)
            if i:
                dh = (dh @ self.weights[i].T) * (acts[i] > 0.0)
        return loss, grad

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "layer_sizes": self.sizes,
            "layers": [
                {"weights": W.ravel().tolist(), "bias": b.tolist()}
                for W, b in zip(self.weights, self.biases)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MLP":
        if not isinstance(d, dict) or d.get("schema") != SCHEMA_VERSION:
            raise WeightFileError(f"unsupported weight schema {d.get('schema') if isinstance(d, dict) else d!r}")
        try:
            sizes = [int(s) for s in d["layer_sizes"]]
            layers = d["layers"]
            if len(layers) != len(sizes) - 1:
                raise WeightFileError("layer count does not match layer sizes")
            flat = []
            for (a, b), layer in zip(zip(sizes[:-1], sizes[1:]), layers):
                if len(layer["weights"]) != a * b or len(layer["bias"]) != b:
                    raise WeightFileError(f"layer {a}x{b} has wrong parameter count")
                flat += layer["weights"] + layer["bias"]
        except (KeyError, TypeError) as e:
            raise WeightFileError(f"malformed weight file: {e}") from e
        return cls(sizes, np.array(flat, dtype=float))


def _views(sizes, flat):
    ws, bs = [], []
    i = 0
    for a, b in zip(sizes[:-1], sizes[1:]):
        ws.append(flat[i:i + a * b].reshape(a, b))
        i += a * b
        bs.append(flat[i:i + b])
        i += b
    return ws, bs


def save(net: MLP, path: str | Path) -> None:
    Path(path).write_text(json.dumps(net.to_dict()) + "\n")


def load(path: str | Path, input_dim: Optional[int] = None, output_dim: Optional[int] = None) -> MLP:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise WeightFileError(f"{path}: not valid JSON ({e})") from e
    net = MLP.from_dict(d)
    if input_dim is not None and net.input_dim != input_dim:
        raise WeightFileError(f"{path}: input dimension {net.input_dim}, expected {input_dim}")
    if output_dim is not None and net.output_dim != output_dim:
        raise WeightFileError(f"{path}: output dimension {net.output_dim}, expected {output_dim}")
    return net


class Adam:
    def __init__(self, n_params: int, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m *= self.beta1
        self.m += (1 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1 - self.beta2) * grad * grad
        lr_t = self.lr * math.sqrt(1 - self.beta2 ** self.t) / (1 - self.beta1 ** self.t)
        params -= lr_t * self.m / (np.sqrt(self.v) + self.eps)


def train_arrays(net: MLP, opt: Adam, X: np.ndarray, actions: np.ndarray, targets: np.ndarray) -> float:
    loss, grad = net.loss_and_grad(X, actions, targets)
    if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
        raise DivergenceError(f"non-finite loss {loss} after {opt.t} optimizer steps")
    opt.step(net.params, grad)
    return loss


def train_batch(net: MLP, opt: Adam, batch) -> float:
    """One optimizer step on a list of (features, action, target); returns the pre-step loss."""
    if not batch:
        raise ValueError("empty batch")
    X = np.array([b[0] for b in batch], dtype=float)
    A = np.array([b[1] for b in batch], dtype=int)
    Y = np.array([b[2] for b in batch], dtype=float)
    if not np.all(np.isfinite(Y)):
        raise DivergenceError("non-finite training targets")
    return train_arrays(net, opt, X, A, Y)


def gradient_check(net: MLP, x, action: int, target: float, fraction: float = 0.01,
                   h: float = 1e-5, seed: int = 0, floor: float = 1e-6) -> float:
    """Max relative error between backprop and central differences.

    Checks a random ``fraction`` of the parameters (at least one). The
    relative error denominator is max(|analytic|, |numeric|, floor).
    """
    X = np.atleast_2d(np.asarray(x, dtype=float))
    A = np.array([action])
    Y = np.array([float(target)])
    _, grad = net.loss_and_grad(X, A, Y)
    rng = np.random.default_rng(seed)
    n = net.params.size
    idx = rng.choice(n, size=max(1, int(round(fraction * n))), replace=False)
    worst = 0.0
    for i in idx:
        old = net.params[i]
        net.params[i] = old + h
        up, _ = net.loss_and_grad(X, A, Y)
        net.params[i] = old - h
        down, _ = net.loss_and_grad(X, A, Y)
        net.params[i] = old
        num = (up - down) / (2 * h)
        denom = max(abs(grad[i]), abs(num), floor)
        worst = max(worst, abs(grad[i] - num) / denom)
    return worst
