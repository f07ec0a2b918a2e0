"""Classifier adapters: one uniform face over model backends.

An adapter maps a batch of [0, 1] channels-last images to logits and, for
crafting, can push a logits-space gradient back to the input pixels.
Model-specific normalization is the adapter's private concern and never
mutates caller buffers.

The registry always contains the bundled numpy desk model (trained offline,
weights ship with the package) plus the common torchvision classifiers.
The torchvision entries import torch lazily and raise a clear ModelZooError
when pretrained weights cannot be loaded in the current environment.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from ..errors import ModelZooError, ValidationError
from .smallcnn import SequentialNet, desk_architecture

HeadFn = Callable[[np.ndarray], tuple[float, np.ndarray]]


class ClassifierAdapter:
    """Base adapter; subclasses implement the raw forward/backward pair."""

    def __init__(self, model_id: str, input_h: int, input_w: int, channels: int,
                 class_count: int, mean, std, grad_capable: bool = True,
                 eval_only: bool = False):
        self.model_id = model_id
        self.input_h = input_h
        self.input_w = input_w
        self.channels = channels
        self.class_count = class_count
        self.mean = np.asarray(mean, dtype=np.float64).reshape(1, 1, 1, -1)
        self.std = np.asarray(std, dtype=np.float64).reshape(1, 1, 1, -1)
        self.grad_capable = grad_capable
        self.eval_only = eval_only

    @property
    def input_hw(self) -> tuple[int, int]:
        return (self.input_h, self.input_w)

    def check_batch(self, images: np.ndarray) -> np.ndarray:
        images = np.asarray(images)
        expected = (self.input_h, self.input_w, self.channels)
        if images.ndim != 4 or images.shape[1:] != expected:
            raise ValidationError(
                f"{self.model_id} expects batches of shape (B, {expected[0]}, "
                f"{expected[1]}, {expected[2]}), got {images.shape}")
        return images

    def forward(self, images: np.ndarray) -> np.ndarray:
        """Batch of images -> (B, K) logits. Pure; never mutates `images`."""
        images = self.check_batch(images)
        if images.shape[0] == 0:
            return np.zeros((0, self.class_count))
        return self._forward_normalized((images - self.mean) / self.std)

    def value_and_input_grad(self, images: np.ndarray,
                             head_fn: HeadFn) -> tuple[float, np.ndarray, np.ndarray]:
        """Run forward, let `head_fn(logits) -> (value, dvalue/dlogits)`, and
        backpropagate to the input pixels. Returns (value, logits, grad)."""
        if not self.grad_capable:
            raise ModelZooError(f"{self.model_id} is not gradient-capable")
        images = self.check_batch(images)
        value, logits, grad_norm = self._grad_normalized((images - self.mean) / self.std,
                                                         head_fn)
        return value, logits, grad_norm / self.std

    # subclass surface ------------------------------------------------------

    def _forward_normalized(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _grad_normalized(self, z: np.ndarray,
                         head_fn: HeadFn) -> tuple[float, np.ndarray, np.ndarray]:
        raise NotImplementedError


def predict(adapter: ClassifierAdapter, images: np.ndarray,
            batch_size: int = 256) -> np.ndarray:
    """Argmax labels for a [0, 1]-range batch; deterministic and pure."""
    images = np.asarray(images)
    if images.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    adapter.check_batch(images)
    if float(images.min()) < 0.0 or float(images.max()) > 1.0:
        raise ValidationError(
            f"predict expects images in [0, 1], got range "
            f"[{images.min():.4f}, {images.max():.4f}]")
    out = [adapter.forward(images[s:s + batch_size]).argmax(axis=1)
           for s in range(0, len(images), batch_size)]
    return np.concatenate(out).astype(np.int64)


class NumpyNetAdapter(ClassifierAdapter):
    """Adapter over the in-package numpy net; always grad-capable and deterministic."""

    def __init__(self, model_id: str, net: SequentialNet, input_h: int, input_w: int,
                 channels: int, class_count: int, mean=0.5, std=0.5):
        super().__init__(model_id, input_h, input_w, channels, class_count,
                         np.broadcast_to(np.asarray(mean, dtype=np.float64), (channels,)),
                         np.broadcast_to(np.asarray(std, dtype=np.float64), (channels,)),
                         grad_capable=True)
        self.net = net

    def _forward_normalized(self, z):
        return self.net.forward(z)

    def _grad_normalized(self, z, head_fn):
        logits, caches = self.net.forward_with_caches(z)
        value, dlogits = head_fn(logits)
        return value, logits, self.net.backward_input(dlogits, caches)


class TorchvisionAdapter(ClassifierAdapter):
    """Pretrained torchvision classifier behind the numpy interface.

    Construction fails with a clear message when torch/torchvision or the
    pretrained weights are unavailable; the bundled desk model is the
    offline fallback.
    """

    _IMAGENET_MEAN = (0.485, 0.456, 0.406)
    _IMAGENET_STD = (0.229, 0.224, 0.225)

    def __init__(self, model_id: str, torchvision_name: str):
        try:
            import torch
            import torchvision.models as tv_models
        except ImportError as exc:
            raise ModelZooError(
                f"model {model_id!r} needs torch/torchvision (pip install "
                f"'tilefool[zoo]'); bundled desk models work without them") from exc
        try:
            model = tv_models.get_model(torchvision_name, weights="DEFAULT")
        except Exception as exc:
            raise ModelZooError(
                f"could not load pretrained weights for {model_id!r} "
                f"({type(exc).__name__}: {exc}); this environment likely has no "
                f"access to the torchvision weight store. The bundled "
                f"'desk_cnn_cifar10' model is always available offline") from exc
        model.eval()
        for p in model.parameters():
            p.requires_grad_(False)
        self._torch = torch
        self._model = model
        super().__init__(model_id, 224, 224, 3, 1000,
                         self._IMAGENET_MEAN, self._IMAGENET_STD, grad_capable=True)

    def _to_tensor(self, z: np.ndarray):
        return self._torch.from_numpy(np.ascontiguousarray(
            z.transpose(0, 3, 1, 2), dtype=np.float32))

    def _forward_normalized(self, z):
        with self._torch.no_grad():
            return self._model(self._to_tensor(z)).numpy().astype(np.float64)

    def _grad_normalized(self, z, head_fn):
        x = self._to_tensor(z).requires_grad_(True)
        logits_t = self._model(x)
        logits = logits_t.detach().numpy().astype(np.float64)
        value, dlogits = head_fn(logits)
        logits_t.backward(self._torch.from_numpy(dlogits.astype(np.float32)))
        grad = x.grad.numpy().astype(np.float64).transpose(0, 2, 3, 1)
        return value, logits, grad


# --------------------------------------------------------------------------
# Registry
# --------------------------------------------------------------------------

_DESK_WEIGHTS = "desk_cnn_cifar10.npz"


def _load_desk_net() -> SequentialNet:
    from importlib.resources import files

    net = desk_architecture()
    resource = files("tilefool.modelzoo").joinpath("weights", _DESK_WEIGHTS)
    try:
        with resource.open("rb") as fh:
            state = dict(np.load(fh))
    except FileNotFoundError as exc:
        raise ModelZooError(
            f"bundled desk weights missing ({_DESK_WEIGHTS}); reinstall the package "
            f"or regenerate them with tools/train_desk_model.py") from exc
    net.load_state_dict(state)
    return net


def _desk_factory() -> ClassifierAdapter:
    return NumpyNetAdapter("desk_cnn_cifar10", _load_desk_net(),
                           input_h=32, input_w=32, channels=3, class_count=10)


_REGISTRY: dict[str, Callable[[], ClassifierAdapter]] = {
    "desk_cnn_cifar10": _desk_factory,
    "desk_cnn": _desk_factory,
}

for _tv_name in ("resnet50", "resnet152", "vgg16", "vgg19", "densenet121",
                 "mobilenet_v2", "googlenet", "alexnet"):
    _REGISTRY[_tv_name] = (lambda name=_tv_name: TorchvisionAdapter(name, name))


def register_model(model_id: str, factory: Callable[[], ClassifierAdapter]) -> None:
    """Plug an extra adapter into the registry (e.g. a project-local model)."""
    _REGISTRY[model_id] = factory


def available_models() -> list[str]:
    return sorted(_REGISTRY)


def load_classifier(model_id: str) -> ClassifierAdapter:
    factory = _REGISTRY.get(model_id)
    if factory is None:
        raise ModelZooError(
            f"unknown model id {model_id!r}; available: {available_models()}")
    return factory()


__all__ = [
    "ClassifierAdapter", "NumpyNetAdapter", "TorchvisionAdapter",
    "available_models", "load_classifier", "predict", "register_model",
]
