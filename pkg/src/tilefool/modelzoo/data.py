"""Dataset sources and stratified (c, n) subsampling.

Three source families are registered:

  synth10            - procedurally generated 10-class texture set, 32x32x3.
                       Each class is a periodic 8x8 micro-texture motif
                       (checkers, stripes, dots, rings, ...) rendered on a
                       randomly placed object region over a color-ramp
                       background, at one of two scales, with a weaker
                       distractor texture from another class most of the
                       time. Fully deterministic from the item index, so it
                       needs no files and both splits are effectively
                       unlimited. This is what the bundled desk classifier
                       is trained on, and it is deliberately texture-driven:
                       classifiers trained on it are responsive to exactly
                       the kind of repeating local patterns tiled
                       perturbations produce.
  cifar10            - the standard python-pickled CIFAR-10 batches, read
                       from $CIFAR10_DIR when present.
  imagefolder:<root> - <root>/<split>/<class_dir>/*.png|jpg, decoded with
                       Pillow; needs an explicit target image size.

Sampling draws c distinct classes uniformly at random, then n items per
class uniformly at random without replacement, all from one seeded
generator, so equal arguments give byte-identical provenance lists.
"""

from __future__ import annotations

import os
import pickle
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import DataError, ValidationError
from ..tiling import bilinear_resize
from ..types import SPLITS, DatasetSpec, frozen_array

_SYNTH_STREAM = 737373


@dataclass(frozen=True)
class SampledDataset:
    """A stratified sample: images in [0, 1], labels, and per-item provenance."""

    spec: DatasetSpec
    images: np.ndarray
    labels: np.ndarray
    provenance: tuple

    def __post_init__(self):
        object.__setattr__(self, "images", frozen_array(self.images))
        object.__setattr__(self, "labels", frozen_array(self.labels, dtype=np.int64))
        object.__setattr__(self, "provenance", tuple(self.provenance))
        if self.images.ndim != 4:
            raise ValidationError(f"images must be (N, H, W, C), got {self.images.shape}")
        n_total = self.spec.total_samples
        if not (len(self.images) == len(self.labels) == len(self.provenance) == n_total):
            raise ValidationError(
                f"expected {n_total} samples (= c*n), got {len(self.images)} images, "
                f"{len(self.labels)} labels, {len(self.provenance)} provenance entries")
        values, counts = np.unique(self.labels, return_counts=True)
        if len(values) != self.spec.classes_chosen or not (counts == self.spec.per_class).all():
            raise ValidationError(
                "class histogram is not exactly flat: expected "
                f"{self.spec.classes_chosen} classes x {self.spec.per_class} items, got "
                f"{dict(zip(values.tolist(), counts.tolist()))}")

    def __len__(self) -> int:
        return len(self.images)

    def items(self):
        """Sequence of (image, label) pairs, viewing the underlying arrays."""
        return [(self.images[i], int(self.labels[i])) for i in range(len(self))]

    def class_histogram(self) -> dict[int, int]:
        values, counts = np.unique(self.labels, return_counts=True)
        return dict(zip(values.tolist(), counts.tolist()))


class DataSource:
    """One named pool of labeled images, addressable by (split, class, index)."""

    source_id: str
    class_count: int
    native_hw: Optional[tuple[int, int]]

    def per_class_count(self, split: str, class_id: int) -> int:
        raise NotImplementedError

    def load_item(self, split: str, class_id: int, index: int) -> np.ndarray:
        raise NotImplementedError


class Synth10Source(DataSource):
    """Deterministic 10-class micro-texture scenes; see module docstring."""

    source_id = "synth10"
    class_count = 10
    native_hw = (32, 32)
    _CAPS = {"train": 20000, "validation": 4000}

    def per_class_count(self, split: str, class_id: int) -> int:
        return self._CAPS[split]

    def load_item(self, split: str, class_id: int, index: int) -> np.ndarray:
        if index >= self._CAPS[split]:
            raise DataError(f"synth10 {split} index {index} out of range")
        split_code = SPLITS.index(split)
        rng = np.random.default_rng([_SYNTH_STREAM, split_code, class_id, index])
        return synth_texture_image(class_id, rng)


def class_motif(class_id: int) -> np.ndarray:
    """The zero-mean 8x8 base motif of one synth10 class."""
    yy, xx = np.mgrid[0:8, 0:8]
    if class_id == 0:      # fine checkerboard
        m = ((xx // 2 + yy // 2) % 2) * 2.0 - 1.0
    elif class_id == 1:    # horizontal stripes
        m = ((yy // 2) % 2) * 2.0 - 1.0
    elif class_id == 2:    # vertical stripes
        m = ((xx // 2) % 2) * 2.0 - 1.0
    elif class_id == 3:    # diagonal stripes
        m = (((xx + yy) // 2) % 2) * 2.0 - 1.0
    elif class_id == 4:    # anti-diagonal stripes
        m = (((xx - yy) // 2) % 2) * 2.0 - 1.0
    elif class_id == 5:    # dots
        m = -np.ones((8, 8))
        m[2:6, 2:6] = 0.0
        m[3:5, 3:5] = 1.0
    elif class_id == 6:    # plus signs
        m = -np.ones((8, 8))
        m[3:5, 1:7] = 1.0
        m[1:7, 3:5] = 1.0
    elif class_id == 7:    # diamond rings
        d = np.abs(xx - 3.5) + np.abs(yy - 3.5)
        m = np.where((d > 2.0) & (d <= 4.0), 1.0, -1.0)
    elif class_id == 8:    # X crossings
        m = -np.ones((8, 8))
        m[np.abs(xx - yy) <= 1] = 1.0
        m[np.abs(xx + yy - 7) <= 1] = 1.0
    elif class_id == 9:    # coarse checkerboard
        m = ((xx // 4 + yy // 4) % 2) * 2.0 - 1.0
    else:
        raise DataError(f"synth10 has classes 0..9, got {class_id}")
    return m - m.mean()


def _textured_region(rng: np.random.Generator, class_id: int, hw: int) -> np.ndarray:
    """Class motif tiled at a random scale/phase, masked to a random rectangle."""
    m = class_motif(class_id)
    if rng.uniform() < 0.5:
        m = -m                                  # polarity flip
    if int(rng.integers(1, 3)) == 2:
        m = np.repeat(np.repeat(m, 2, axis=0), 2, axis=1)
    reps = hw // m.shape[0] + 1
    tex = np.tile(m, (reps, reps))[:hw, :hw]
    tex = np.roll(tex, (int(rng.integers(0, m.shape[0])),
                        int(rng.integers(0, m.shape[1]))), axis=(0, 1))
    cy, cx = rng.uniform(8, hw - 8, size=2)
    hy, hx = rng.uniform(6, 13, size=2)
    yy, xx = np.mgrid[0:hw, 0:hw]
    mask = ((np.abs(yy - cy) <= hy) & (np.abs(xx - cx) <= hx)).astype(float)
    return tex * mask


def synth_texture_image(class_id: int, rng: np.random.Generator,
                        hw: int = 32) -> np.ndarray:
    """One synth10 sample: main textured object, likely distractor, ramp, noise."""
    base = rng.uniform(0.3, 0.7, size=3)
    ang = rng.uniform(0, 2 * np.pi)
    yy, xx = np.mgrid[0:hw, 0:hw]
    ramp = ((np.cos(ang) * xx + np.sin(ang) * yy) / hw - 0.5) * rng.uniform(0.0, 0.3)
    img = base[None, None, :] + ramp[:, :, None]

    amp = rng.uniform(0.07, 0.30)
    tint = rng.uniform(0.5, 1.0, size=3)
    img += amp * _textured_region(rng, class_id, hw)[:, :, None] * tint[None, None, :]

    if rng.uniform() < 0.72:
        other = int((class_id + rng.integers(1, 10)) % 10)
        damp = amp * rng.uniform(0.35, 0.82)
        dtint = rng.uniform(0.5, 1.0, size=3)
        img += damp * _textured_region(rng, other, hw)[:, :, None] * dtint[None, None, :]

    img += rng.normal(0.0, 0.025, size=img.shape)
    return np.clip(img, 0.0, 1.0)


class Cifar10Source(DataSource):
    """CIFAR-10 from the python-pickled batches under $CIFAR10_DIR."""

    source_id = "cifar10"
    class_count = 10
    native_hw = (32, 32)

    def __init__(self, root: Optional[str] = None):
        root = root or os.environ.get("CIFAR10_DIR")
        if not root or not Path(root).is_dir():
            raise DataError(
                "cifar10 source needs the python-version batch files; set CIFAR10_DIR "
                "to the directory containing data_batch_1..5 and test_batch")
        self.root = Path(root)
        self._cache: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def _split_arrays(self, split: str) -> tuple[np.ndarray, np.ndarray]:
        if split not in self._cache:
            names = ([f"data_batch_{i}" for i in range(1, 6)]
                     if split == "train" else ["test_batch"])
            data, labels = [], []
            for name in names:
                path = self.root / name
                if not path.exists():
                    raise DataError(f"cifar10 batch file missing: {path}")
                with open(path, "rb") as fh:
                    batch = pickle.load(fh, encoding="latin1")
                data.append(np.asarray(batch["data"], dtype=np.uint8))
                labels.extend(batch["labels"])
            raw = np.concatenate(data).reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
            self._cache[split] = (raw.astype(np.float64) / 255.0,
                                  np.asarray(labels, dtype=np.int64))
        return self._cache[split]

    def _class_indices(self, split: str, class_id: int) -> np.ndarray:
        _, labels = self._split_arrays(split)
        return np.flatnonzero(labels == class_id)

    def per_class_count(self, split: str, class_id: int) -> int:
        return len(self._class_indices(split, class_id))

    def load_item(self, split: str, class_id: int, index: int) -> np.ndarray:
        images, _ = self._split_arrays(split)
        return images[self._class_indices(split, class_id)[index]]


class ImageFolderSource(DataSource):
    """Directory-of-class-directories layout, decoded with Pillow."""

    _EXTS = (".png", ".jpg", ".jpeg", ".bmp")

    def __init__(self, root: str):
        self.root = Path(root)
        if not self.root.is_dir():
            raise DataError(f"imagefolder root does not exist: {root}")
        self.source_id = f"imagefolder:{root}"
        self.native_hw = None
        first_split = self._split_dir("train") if (self.root / "train").is_dir() else None
        probe = first_split or self._split_dir("validation")
        self.classes = sorted(p.name for p in probe.iterdir() if p.is_dir())
        if not self.classes:
            raise DataError(f"imagefolder has no class directories under {probe}")
        self.class_count = len(self.classes)
        self._listing: dict[tuple[str, int], list[Path]] = {}

    def _split_dir(self, split: str) -> Path:
        for candidate in (split, {"validation": "val"}.get(split, split)):
            path = self.root / candidate
            if path.is_dir():
                return path
        raise DataError(f"imagefolder split directory missing: {self.root / split}")

    def _files(self, split: str, class_id: int) -> list[Path]:
        key = (split, class_id)
        if key not in self._listing:
            class_dir = self._split_dir(split) / self.classes[class_id]
            if not class_dir.is_dir():
                raise DataError(f"class directory missing: {class_dir}")
            self._listing[key] = sorted(
                p for p in class_dir.iterdir() if p.suffix.lower() in self._EXTS)
        return self._listing[key]

    def per_class_count(self, split: str, class_id: int) -> int:
        return len(self._files(split, class_id))

    def load_item(self, split: str, class_id: int, index: int) -> np.ndarray:
        from PIL import Image

        with Image.open(self._files(split, class_id)[index]) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
        return arr


_SOURCE_FACTORIES = {
    "synth10": Synth10Source,
    "cifar10": Cifar10Source,
}


def get_data_source(source_id: str) -> DataSource:
    if source_id.startswith("imagefolder:"):
        return ImageFolderSource(source_id.split(":", 1)[1])
    factory = _SOURCE_FACTORIES.get(source_id)
    if factory is None:
        raise DataError(
            f"unknown dataset source {source_id!r}; available: "
            f"{sorted(_SOURCE_FACTORIES)} or 'imagefolder:<root>'")
    return factory()


def sample_dataset(source_id: str, c: int, n: int, split: str, seed: int,
                   image_hw: Optional[tuple[int, int]] = None) -> SampledDataset:
    """Draw c classes x n items, stratified and reproducible under `seed`."""
    if split not in SPLITS:
        raise ValidationError(f"split must be one of {SPLITS}, got {split!r}")
    source = get_data_source(source_id)
    rng = np.random.default_rng(seed)

    eligible = [cls for cls in range(source.class_count)
                if source.per_class_count(split, cls) >= n]
    if len(eligible) < c:
        raise DataError(
            f"source {source_id!r} has only {len(eligible)} classes with >= {n} "
            f"items in split {split!r}, need {c}")
    chosen = rng.choice(np.asarray(eligible), size=c, replace=False)

    images, labels, provenance = [], [], []
    for cls in chosen.tolist():
        count = source.per_class_count(split, cls)
        picks = rng.choice(count, size=n, replace=False)
        for idx in picks.tolist():
            img = source.load_item(split, cls, idx)
            if image_hw is not None and img.shape[:2] != tuple(image_hw):
                img = bilinear_resize(img, image_hw[0], image_hw[1])
            images.append(img)
            labels.append(cls)
            provenance.append(f"{source_id}:{split}:c{cls}:i{idx}")

    shapes = {img.shape for img in images}
    if len(shapes) > 1:
        raise DataError(
            f"items have mixed shapes {sorted(shapes)}; pass image_hw to resize them")

    spec = DatasetSpec(source_id=source_id, class_count=source.class_count,
                       classes_chosen=c, per_class=n, split=split, seed=seed)
    return SampledDataset(spec=spec, images=np.stack(images), labels=np.asarray(labels),
                          provenance=tuple(provenance))


def resolve_dataset(dataset, image_hw: Optional[tuple[int, int]] = None) -> SampledDataset:
    """Accept a SampledDataset as-is or materialize a DatasetSpec through the registry."""
    if isinstance(dataset, SampledDataset):
        return dataset
    if isinstance(dataset, DatasetSpec):
        return sample_dataset(dataset.source_id, dataset.classes_chosen, dataset.per_class,
                              dataset.split, dataset.seed, image_hw=image_hw)
    raise ValidationError(
        f"expected a SampledDataset or DatasetSpec, got {type(dataset).__name__}")


__all__ = [
    "Cifar10Source", "DataSource", "ImageFolderSource", "SampledDataset",
    "Synth10Source", "get_data_source", "resolve_dataset", "sample_dataset",
    "synth_texture_image",
]
