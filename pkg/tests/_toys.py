"""Tiny hand-analyzable adapters and helpers shared across the test suite."""

import numpy as np

from tilefool.modelzoo.adapters import ClassifierAdapter
from tilefool.modelzoo.data import SampledDataset
from tilefool.types import DatasetSpec


class LinearAdapter(ClassifierAdapter):
    """logits = flatten(normalized x) @ W + b; exact gradients by hand."""

    def __init__(self, weight, bias=None, input_hw=(1, 2), channels=1,
                 mean=0.0, std=1.0, model_id="linear_toy"):
        weight = np.asarray(weight, dtype=np.float64)
        k = weight.shape[1]
        bias = np.zeros(k) if bias is None else np.asarray(bias, dtype=np.float64)
        super().__init__(model_id, input_hw[0], input_hw[1], channels, k,
                         np.broadcast_to(np.asarray(mean, dtype=np.float64), (channels,)),
                         np.broadcast_to(np.asarray(std, dtype=np.float64), (channels,)))
        self.weight = weight
        self.bias = bias

    def _forward_normalized(self, z):
        return z.reshape(z.shape[0], -1) @ self.weight + self.bias

    def _grad_normalized(self, z, head_fn):
        logits = self._forward_normalized(z)
        value, dlogits = head_fn(logits)
        return value, logits, (dlogits @ self.weight.T).reshape(z.shape)


class PixelKeyAdapter(ClassifierAdapter):
    """Prediction is floor(50 * first pixel) mod K, so a +0.02 perturbation at
    that pixel advances the class by exactly one step (FR = 1 fixture)."""

    def __init__(self, input_hw=(2, 2), channels=1, classes=5):
        super().__init__("pixel_key_toy", input_hw[0], input_hw[1], channels,
                         classes, 0.0, 1.0, grad_capable=False)

    def _forward_normalized(self, z):
        keys = np.floor(z[:, 0, 0, 0] * 50).astype(np.int64) % self.class_count
        logits = np.zeros((z.shape[0], self.class_count))
        logits[np.arange(z.shape[0]), keys] = 10.0
        return logits


class SaturationTargetAdapter(ClassifierAdapter):
    """Clean images predict per-image classes; any input with max > 0.95 is
    pulled to `target` (TFR = FR = 1 fixture)."""

    def __init__(self, target=3, input_hw=(2, 2), channels=1, classes=5):
        super().__init__("saturation_toy", input_hw[0], input_hw[1], channels,
                         classes, 0.0, 1.0, grad_capable=False)
        self.target = target

    def _forward_normalized(self, z):
        b = z.shape[0]
        logits = np.zeros((b, self.class_count))
        varied = np.floor(z[:, 0, 0, 0] * 100).astype(np.int64) % (self.class_count - 1)
        logits[np.arange(b), varied] = 5.0
        saturated = z.reshape(b, -1).max(axis=1) > 0.95
        logits[saturated] = 0.0
        logits[saturated, self.target] = 9.0
        return logits


def fixture_dataset(images, source_id="fixture", split="validation", seed=0):
    """Wrap raw images as a SampledDataset with one item per pseudo-class."""
    images = np.asarray(images, dtype=np.float64)
    n = images.shape[0]
    return SampledDataset(
        spec=DatasetSpec(source_id=source_id, class_count=n, classes_chosen=n,
                         per_class=1, split=split, seed=seed),
        images=images,
        labels=np.arange(n),
        provenance=tuple(f"{source_id}:{i}" for i in range(n)),
    )


def central_diff(f, x, index, h=1e-6):
    """Scalar central finite difference of f at one coordinate of array x."""
    xp = np.array(x, dtype=np.float64)
    xm = np.array(x, dtype=np.float64)
    xp[index] += h
    xm[index] -= h
    return (f(xp) - f(xm)) / (2 * h)
