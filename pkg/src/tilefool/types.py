"""Core domain types shared by crafting, evaluation, and persistence.

Everything here is an immutable value object with its invariants checked at
construction time; the tensor math lives in :mod:`tilefool.tiling` and friends.
Arrays held by these types are marked read-only so instances can be shared
freely between concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import TileSpecError, ValidationError

LOSS_IDS = ("ce", "df_margin", "cos_sim")
STEP_RULES = ("sign_step", "adam")
NORM_ORDERS = ("inf", "2")
SPLITS = ("train", "validation")
PERTURBATION_ORIGINS = ("tiled", "resized", "masked", "loaded")

# Losses with a defined targeted form. Margin and cosine heads have no
# documented targeted objective, so targeted runs are restricted to ce.
TARGETED_LOSS_IDS = ("ce",)
SURROGATE_KINDS = ("uniform", "constant")
LABEL_MODES = ("dataset", "clean_pred")


def frozen_array(values, dtype=None) -> np.ndarray:
    """Copy `values` into a C-contiguous read-only ndarray."""
    arr = np.array(values, dtype=dtype, copy=True, order="C")
    arr.setflags(write=False)
    return arr


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ValidationError(message)


@dataclass(frozen=True)
class Patch:
    """The trainable local texture: a (h, w, channels) array of pixel-intensity
    offsets on the [0, 1] pixel scale. The only object the attack optimizes."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", frozen_array(self.values))
        v = self.values
        _require(v.ndim == 3, f"patch must be rank-3 (h, w, c), got shape {v.shape}")
        h, w, c = v.shape
        _require(h >= 1 and w >= 1, f"patch spatial dims must be >= 1, got {h}x{w}")
        _require(c in (1, 3), f"patch channels must be 1 or 3, got {c}")
        _require(np.issubdtype(v.dtype, np.floating), "patch values must be floating point")
        _require(bool(np.isfinite(v).all()), "patch values must all be finite")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def channels(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class TileSpec:
    """Split ratio and the image geometry it divides.

    alpha tiles of shape (image_h/alpha, image_w/alpha) cover the image exactly.
    """

    alpha: int
    image_h: int
    image_w: int

    def __post_init__(self):
        for name in ("alpha", "image_h", "image_w"):
            val = getattr(self, name)
            _require(isinstance(val, (int, np.integer)) and val > 0,
                     f"{name} must be a positive integer, got {val!r}")
        if self.image_h % self.alpha != 0:
            raise TileSpecError(
                f"split ratio {self.alpha} does not divide image height {self.image_h}")
        if self.image_w % self.alpha != 0:
            raise TileSpecError(
                f"split ratio {self.alpha} does not divide image width {self.image_w}")

    @property
    def patch_h(self) -> int:
        return self.image_h // self.alpha

    @property
    def patch_w(self) -> int:
        return self.image_w // self.alpha

    @property
    def patch_shape(self) -> tuple[int, int]:
        return (self.patch_h, self.patch_w)


def validate_tile_spec(alpha: int, image_h: int, image_w: int) -> TileSpec:
    """Build a TileSpec, raising TileSpecError naming the offending dimension."""
    return TileSpec(alpha=alpha, image_h=image_h, image_w=image_w)


def new_patch(spec: TileSpec, channels: int = 3) -> Patch:
    """All-zero patch of the shape implied by `spec` (the crafting start state)."""
    return Patch(np.zeros((spec.patch_h, spec.patch_w, channels), dtype=np.float64))


@dataclass(frozen=True)
class NormBudget:
    """(p, epsilon) bound on the tiled perturbation, in [0, 1] pixel units."""

    p: str
    epsilon: float

    def __post_init__(self):
        _require(self.p in NORM_ORDERS, f"norm order must be one of {NORM_ORDERS}, got {self.p!r}")
        _require(np.isfinite(self.epsilon) and self.epsilon > 0,
                 f"epsilon must be a positive real, got {self.epsilon!r}")

    @property
    def is_linf(self) -> bool:
        return self.p == "inf"


@dataclass(frozen=True)
class AttackConfig:
    """Everything the crafting loop consumes.

    Fields beyond the basic loop knobs: `clamp_inputs` keeps perturbed pixels
    inside [0, 1] before the model sees them (turn off only for strict
    unconstrained replication); `label_mode` picks dataset labels or the
    model's clean predictions for label-dependent losses; `surrogate` and
    `surrogate_per_epoch` shape the synthetic batches used when `data_free`.
    """

    epochs: int
    batch_size: int
    loss_id: str
    kappa: float = 0.0
    target_label: Optional[int] = None
    step_rule: str = "adam"
    step_size: float = 0.01
    seed: int = 0
    data_free: bool = False
    clamp_inputs: bool = True
    label_mode: str = "dataset"
    surrogate: str = "uniform"
    surrogate_per_epoch: int = 1000

    def __post_init__(self):
        _require(isinstance(self.epochs, (int, np.integer)) and self.epochs >= 0,
                 f"epochs must be a non-negative integer, got {self.epochs!r}")
        _require(isinstance(self.batch_size, (int, np.integer)) and self.batch_size >= 1,
                 f"batch_size must be a positive integer, got {self.batch_size!r}")
        _require(self.loss_id in LOSS_IDS,
                 f"loss_id must be one of {LOSS_IDS}, got {self.loss_id!r}")
        _require(self.kappa >= 0, f"kappa must be non-negative, got {self.kappa!r}")
        if self.target_label is not None:
            _require(isinstance(self.target_label, (int, np.integer)) and self.target_label >= 0,
                     f"target_label must be a non-negative class index, got {self.target_label!r}")
            _require(self.loss_id in TARGETED_LOSS_IDS,
                     f"targeted crafting is only defined for losses {TARGETED_LOSS_IDS}, "
                     f"got {self.loss_id!r}")
        _require(self.step_rule in STEP_RULES,
                 f"step_rule must be one of {STEP_RULES}, got {self.step_rule!r}")
        _require(self.step_size > 0, f"step_size must be positive, got {self.step_size!r}")
        if self.data_free:
            _require(self.loss_id == "cos_sim",
                     "data_free requires loss_id='cos_sim' (the only loss defined "
                     "without ground-truth labels)")
        _require(self.label_mode in LABEL_MODES,
                 f"label_mode must be one of {LABEL_MODES}, got {self.label_mode!r}")
        _require(self.surrogate in SURROGATE_KINDS,
                 f"surrogate must be one of {SURROGATE_KINDS}, got {self.surrogate!r}")
        _require(self.surrogate_per_epoch >= 1,
                 "surrogate_per_epoch must be a positive integer")


@dataclass(frozen=True)
class Perturbation:
    """A full-image perturbation (image_h, image_w, c) plus how it was produced."""

    values: np.ndarray
    origin: str

    def __post_init__(self):
        object.__setattr__(self, "values", frozen_array(self.values))
        v = self.values
        _require(v.ndim == 3, f"perturbation must be rank-3, got shape {v.shape}")
        _require(np.issubdtype(v.dtype, np.floating), "perturbation values must be floating point")
        _require(bool(np.isfinite(v).all()), "perturbation values must all be finite")
        _require(self.origin in PERTURBATION_ORIGINS,
                 f"origin must be one of {PERTURBATION_ORIGINS}, got {self.origin!r}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape


@dataclass(frozen=True)
class DatasetSpec:
    """How a training/eval subset is drawn: c classes, n items per class."""

    source_id: str
    class_count: int
    classes_chosen: int
    per_class: int
    split: str
    seed: int

    def __post_init__(self):
        _require(self.class_count >= 1, "class_count must be positive")
        _require(self.classes_chosen >= 1, "classes_chosen must be positive")
        _require(self.per_class >= 1, "per_class must be positive")
        _require(self.classes_chosen <= self.class_count,
                 f"classes_chosen={self.classes_chosen} exceeds class_count={self.class_count}")
        _require(self.split in SPLITS, f"split must be one of {SPLITS}, got {self.split!r}")

    @property
    def total_samples(self) -> int:
        return self.classes_chosen * self.per_class


@dataclass(frozen=True)
class EvalReport:
    """Fooling-ratio result with full provenance.

    `flips`, `clean_labels`, `adv_labels` and `provenance` are the per-sample
    audit log; the aggregate ratios are exact rational counts over them.
    A targeted flip is by definition a subset of all flips, so
    targeted_fooling_ratio <= fooling_ratio always.
    """

    fooling_ratio: float
    targeted_fooling_ratio: Optional[float]
    n_evaluated: int
    source_model: str
    target_model: str
    uap_metadata: dict = field(default_factory=dict)
    target_label: Optional[int] = None
    flips: Optional[np.ndarray] = None
    clean_labels: Optional[np.ndarray] = None
    adv_labels: Optional[np.ndarray] = None
    provenance: Optional[tuple] = None

    def __post_init__(self):
        _require(self.n_evaluated >= 1, "n_evaluated must be positive")
        _require(0.0 <= self.fooling_ratio <= 1.0,
                 f"fooling_ratio must lie in [0, 1], got {self.fooling_ratio}")
        if self.targeted_fooling_ratio is not None:
            _require(0.0 <= self.targeted_fooling_ratio <= self.fooling_ratio,
                     f"targeted_fooling_ratio {self.targeted_fooling_ratio} must lie in "
                     f"[0, fooling_ratio={self.fooling_ratio}]")
        for name in ("flips", "clean_labels", "adv_labels"):
            arr = getattr(self, name)
            if arr is not None:
                object.__setattr__(self, name, frozen_array(arr))
                _require(len(getattr(self, name)) == self.n_evaluated,
                         f"{name} length must equal n_evaluated")
        if self.flips is not None:
            _require(int(self.flips.sum()) == round(self.fooling_ratio * self.n_evaluated),
                     "fooling_ratio does not match the per-sample flip log")

    @classmethod
    def from_labels(cls, clean_labels, adv_labels, *, source_model: str, target_model: str,
                    uap_metadata: Optional[dict] = None, target_label: Optional[int] = None,
                    provenance: Optional[tuple] = None) -> "EvalReport":
        """Derive the report from per-sample labels so the ratios are exact by construction."""
        clean_labels = np.asarray(clean_labels)
        adv_labels = np.asarray(adv_labels)
        _require(clean_labels.shape == adv_labels.shape and clean_labels.ndim == 1,
                 "label vectors must be 1-D and of equal length")
        n = int(clean_labels.shape[0])
        _require(n >= 1, "cannot build a report from an empty evaluation")
        flips = clean_labels != adv_labels
        fr = float(int(flips.sum()) / n)
        tfr = None
        if target_label is not None:
            tfr = float(int((flips & (adv_labels == target_label)).sum()) / n)
        return cls(
            fooling_ratio=fr,
            targeted_fooling_ratio=tfr,
            n_evaluated=n,
            source_model=source_model,
            target_model=target_model,
            uap_metadata=dict(uap_metadata or {}),
            target_label=target_label,
            flips=flips,
            clean_labels=clean_labels,
            adv_labels=adv_labels,
            provenance=tuple(provenance) if provenance is not None else None,
        )

    def to_record(self) -> dict:
        """JSON-serializable record, including the per-sample audit arrays."""
        rec = {
            "type": "eval_report",
            "fooling_ratio": self.fooling_ratio,
            "targeted_fooling_ratio": self.targeted_fooling_ratio,
            "n_evaluated": self.n_evaluated,
            "source_model": self.source_model,
            "target_model": self.target_model,
            "target_label": self.target_label,
            "uap_metadata": self.uap_metadata,
        }
        if self.flips is not None:
            rec["flips"] = [int(b) for b in self.flips]
        if self.clean_labels is not None:
            rec["clean_labels"] = [int(x) for x in self.clean_labels]
        if self.adv_labels is not None:
            rec["adv_labels"] = [int(x) for x in self.adv_labels]
        if self.provenance is not None:
            rec["provenance"] = list(self.provenance)
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "EvalReport":
        return cls(
            fooling_ratio=rec["fooling_ratio"],
            targeted_fooling_ratio=rec.get("targeted_fooling_ratio"),
            n_evaluated=rec["n_evaluated"],
            source_model=rec.get("source_model", "unknown"),
            target_model=rec.get("target_model", "unknown"),
            uap_metadata=rec.get("uap_metadata", {}),
            target_label=rec.get("target_label"),
            flips=np.asarray(rec["flips"], dtype=bool) if "flips" in rec else None,
            clean_labels=np.asarray(rec["clean_labels"]) if "clean_labels" in rec else None,
            adv_labels=np.asarray(rec["adv_labels"]) if "adv_labels" in rec else None,
            provenance=tuple(rec["provenance"]) if "provenance" in rec else None,
        )


__all__ = [
    "AttackConfig", "DatasetSpec", "EvalReport", "NormBudget", "Patch",
    "Perturbation", "TileSpec", "frozen_array", "new_patch", "validate_tile_spec",
    "LOSS_IDS", "STEP_RULES", "NORM_ORDERS", "SPLITS", "TARGETED_LOSS_IDS",
    "SURROGATE_KINDS", "LABEL_MODES", "replace",
]
