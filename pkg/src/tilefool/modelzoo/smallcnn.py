"""A small, dependency-free convolutional net with exact backprop.

This backs the bundled desk-scale classifier so the whole toolkit runs
offline and bit-deterministically on CPU. Layers are channels-last and the
only ops are 3x3 same-padded convolutions (stride 1 or 2), ReLU, global
average pooling, and a dense head. Convolution is im2col via
sliding_window_view; the input-gradient path scatters through the same
windows with a 9-step strided loop, so no scatter-add bottlenecks.

Crafting only needs gradients w.r.t. the *input*, which is roughly the cost
of a second forward pass; parameter gradients exist for the one-off training
of the bundled weights (see tools/train_desk_model.py).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError


class Conv3x3:
    """3x3 convolution, SAME padding, stride 1 or 2, channels-last."""

    def __init__(self, weight: np.ndarray, bias: np.ndarray, stride: int = 1):
        weight = np.asarray(weight, dtype=np.float64)
        if weight.ndim != 4 or weight.shape[:2] != (3, 3):
            raise ValidationError(f"conv weight must be (3, 3, cin, cout), got {weight.shape}")
        if stride not in (1, 2):
            raise ValidationError(f"conv stride must be 1 or 2, got {stride}")
        self.weight = weight
        self.bias = np.asarray(bias, dtype=np.float64)
        self.stride = stride

    @property
    def cin(self) -> int:
        return self.weight.shape[2]

    @property
    def cout(self) -> int:
        return self.weight.shape[3]

    def _windows(self, x: np.ndarray) -> np.ndarray:
        # (B, Ho, Wo, 3, 3, Cin) view over the padded input
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2))
        win = win[:, :: self.stride, :: self.stride]
        # sliding_window_view puts window axes last: (B, Ho, Wo, Cin, 3, 3)
        return np.moveaxis(win, 3, 5)

    def forward(self, x: np.ndarray):
        b, h, w, _ = x.shape
        win = self._windows(x)
        bo, ho, wo = win.shape[:3]
        cols = win.reshape(bo, ho, wo, 9 * self.cin)
        y = cols @ self.weight.reshape(9 * self.cin, self.cout) + self.bias
        return y, (x.shape, cols)

    def backward(self, dout: np.ndarray, cache, need_param_grads: bool = False):
        x_shape, cols = cache
        b, h, w, cin = x_shape
        bo, ho, wo, cout = dout.shape
        wmat = self.weight.reshape(9 * self.cin, self.cout)
        dcols = (dout @ wmat.T).reshape(bo, ho, wo, 3, 3, cin)
        dxp = np.zeros((b, h + 2, w + 2, cin))
        s = self.stride
        for ki in range(3):
            for kj in range(3):
                dxp[:, ki:ki + s * ho:s, kj:kj + s * wo:s, :] += dcols[:, :, :, ki, kj, :]
        dx = dxp[:, 1:h + 1, 1:w + 1, :]
        if not need_param_grads:
            return dx, None, None
        dw = (cols.reshape(-1, 9 * cin).T @ dout.reshape(-1, cout)).reshape(self.weight.shape)
        db = dout.sum(axis=(0, 1, 2))
        return dx, dw, db

    def params(self):
        return {"weight": self.weight, "bias": self.bias}


class ReLU:
    def forward(self, x):
        y = np.maximum(x, 0.0)
        return y, x > 0

    def backward(self, dout, cache, need_param_grads: bool = False):
        return dout * cache, None, None

    def params(self):
        return {}


class GlobalAvgPool:
    """(B, H, W, C) -> (B, C) spatial mean."""

    def forward(self, x):
        return x.mean(axis=(1, 2)), x.shape

    def backward(self, dout, cache, need_param_grads: bool = False):
        b, h, w, c = cache
        return np.broadcast_to(dout[:, None, None, :] / (h * w), cache).copy(), None, None

    def params(self):
        return {}


class Dense:
    def __init__(self, weight: np.ndarray, bias: np.ndarray):
        self.weight = np.asarray(weight, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)

    def forward(self, x):
        return x @ self.weight + self.bias, x

    def backward(self, dout, cache, need_param_grads: bool = False):
        dx = dout @ self.weight.T
        if not need_param_grads:
            return dx, None, None
        return dx, cache.T @ dout, dout.sum(axis=0)

    def params(self):
        return {"weight": self.weight, "bias": self.bias}


class SequentialNet:
    """A plain layer stack mapping (B, H, W, C) inputs to (B, K) logits."""

    def __init__(self, layers: list):
        self.layers = list(layers)

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x, _ = layer.forward(x)
        return x

    def forward_with_caches(self, x: np.ndarray):
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def backward_input(self, dlogits: np.ndarray, caches: list) -> np.ndarray:
        d = dlogits
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            d, _, _ = layer.backward(d, cache)
        return d

    def backward_params(self, dlogits: np.ndarray, caches: list) -> list:
        """Per-layer parameter gradients (None entries for parameterless layers)."""
        d = dlogits
        grads = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            d, dw, db = self.layers[i].backward(d, caches[i], need_param_grads=True)
            if dw is not None:
                grads[i] = {"weight": dw, "bias": db}
        return grads

    def state_dict(self) -> dict:
        state = {}
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params().items():
                state[f"layer{i}.{name}"] = arr
        return state

    def load_state_dict(self, state: dict) -> None:
        for i, layer in enumerate(self.layers):
            for name in layer.params():
                key = f"layer{i}.{name}"
                if key not in state:
                    raise ValidationError(f"missing parameter {key} in state dict")
                arr = np.asarray(state[key], dtype=np.float64)
                if arr.shape != layer.params()[name].shape:
                    raise ValidationError(
                        f"parameter {key} shape {arr.shape} != expected "
                        f"{layer.params()[name].shape}")
                setattr(layer, name, arr)


def he_conv(rng: np.random.Generator, cin: int, cout: int, stride: int = 1) -> Conv3x3:
    scale = np.sqrt(2.0 / (9 * cin))
    return Conv3x3(rng.normal(0.0, scale, size=(3, 3, cin, cout)), np.zeros(cout), stride)


def he_dense(rng: np.random.Generator, cin: int, cout: int) -> Dense:
    scale = np.sqrt(2.0 / cin)
    return Dense(rng.normal(0.0, scale, size=(cin, cout)), np.zeros(cout))


def desk_architecture(rng: np.random.Generator | None = None,
                      channels: int = 3, classes: int = 10) -> SequentialNet:
    """The bundled 4-conv-layer texture classifier: 32x32 in, GAP head.

    Receptive fields stay small (<= 19 px) so decisions are driven by local
    texture statistics rather than global layout.
    """
    rng = rng or np.random.default_rng(0)
    return SequentialNet([
        he_conv(rng, channels, 12, stride=1), ReLU(),
        he_conv(rng, 12, 24, stride=2), ReLU(),
        he_conv(rng, 24, 36, stride=1), ReLU(),
        he_conv(rng, 36, 48, stride=2), ReLU(),
        GlobalAvgPool(),
        he_dense(rng, 48, classes),
    ])


# --------------------------------------------------------------------------
# One-off training utilities (used by tools/train_desk_model.py)
# --------------------------------------------------------------------------

@dataclass
class AdamParams:
    lr: float = 2e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    state: dict = field(default_factory=dict)

    def update(self, key: str, param: np.ndarray, grad: np.ndarray) -> np.ndarray:
        m, v, t = self.state.get(key, (np.zeros_like(param), np.zeros_like(param), 0))
        t += 1
        m = self.beta1 * m + (1 - self.beta1) * grad
        v = self.beta2 * v + (1 - self.beta2) * grad * grad
        self.state[key] = (m, v, t)
        mhat = m / (1 - self.beta1 ** t)
        vhat = v / (1 - self.beta2 ** t)
        return param - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def train_classifier(net: SequentialNet, images: np.ndarray, labels: np.ndarray,
                     epochs: int = 8, batch_size: int = 64, lr: float = 2e-3,
                     seed: int = 0, log_every: int = 0) -> None:
    """Adam + softmax cross-entropy training, in place."""
    from ..losses import ce_value_and_grad

    rng = np.random.default_rng(seed)
    opt = AdamParams(lr=lr)
    n = len(images)
    for epoch in range(epochs):
        perm = rng.permutation(n)
        running = 0.0
        batches = 0
        for start in range(0, n - batch_size + 1, batch_size):
            idx = perm[start:start + batch_size]
            logits, caches = net.forward_with_caches(images[idx])
            loss, dlogits = ce_value_and_grad(logits, labels[idx])
            grads = net.backward_params(dlogits, caches)
            for i, layer_grads in enumerate(grads):
                if layer_grads is None:
                    continue
                layer = net.layers[i]
                for name, grad in layer_grads.items():
                    new = opt.update(f"layer{i}.{name}", layer.params()[name], grad)
                    setattr(layer, name, new)
            running += loss
            batches += 1
        if log_every and (epoch + 1) % log_every == 0:
            print(f"  epoch {epoch + 1}/{epochs}  mean loss {running / max(batches, 1):.4f}")


def accuracy(net: SequentialNet, images: np.ndarray, labels: np.ndarray,
             batch_size: int = 256) -> float:
    hits = 0
    for start in range(0, len(images), batch_size):
        logits = net.forward(images[start:start + batch_size])
        hits += int((logits.argmax(axis=1) == labels[start:start + batch_size]).sum())
    return hits / len(images)


__all__ = [
    "AdamParams", "Conv3x3", "Dense", "GlobalAvgPool", "ReLU", "SequentialNet",
    "accuracy", "desk_architecture", "he_conv", "he_dense", "train_classifier",
]
