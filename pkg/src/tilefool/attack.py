"""The crafting loop: tile the patch, push a batch through the classifier,
step the patch against the loss gradient, project back into the budget.

Per epoch the loop runs floor(|X|/m) iterations over a fresh random
permutation of the dataset, so every epoch covers each sample at most once
and a trailing partial batch is dropped. The gradient reaches the patch
through the tile adjoint (block sum), never by treating the full-image
perturbation as a leaf. After *every* iteration the projection guarantees
the tiled perturbation satisfies the norm budget.

A NaN/Inf loss or gradient aborts the run with a diagnostic instead of
skipping the batch; silent skips would corrupt reproducibility.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import DataError, NonFiniteLossError, ValidationError
from .losses import get_loss_head
from .modelzoo.adapters import ClassifierAdapter, predict
from .modelzoo.data import SampledDataset, resolve_dataset
from .tiling import measure_norm, project_l2, project_linf, tile, tile_adjoint
from .types import AttackConfig, NormBudget, Patch, Perturbation, TileSpec, new_patch

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class AdamMoments:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


@dataclass(frozen=True)
class CraftState:
    """Everything one crafting stream carries between iterations."""

    patch: Patch
    spec: TileSpec
    budget: NormBudget
    config: AttackConfig
    epoch: int = 0
    iteration: int = 0
    optimizer_state: Optional[AdamMoments] = None
    rng_state: Optional[dict] = None


@dataclass(frozen=True)
class CraftRecord:
    epoch: int
    iteration: int
    loss: float
    norm: float
    wall_ms: float


@dataclass
class CraftLog:
    """Per-iteration loss/norm trace plus run-level metadata."""

    records: list[CraftRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, record: CraftRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def jsonl_lines(self):
        """Newline-delimited records {epoch, iteration, loss, norm, wall_ms}."""
        for r in self.records:
            yield json.dumps({"epoch": r.epoch, "iteration": r.iteration,
                              "loss": r.loss, "norm": r.norm, "wall_ms": r.wall_ms})

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for line in self.jsonl_lines():
                fh.write(line + "\n")


def _project(patch: Patch, spec: TileSpec, budget: NormBudget) -> Patch:
    if budget.is_linf:
        return project_linf(patch, budget.epsilon)
    return project_l2(patch, spec, budget.epsilon)


def step(state: CraftState, gradient_on_patch: np.ndarray) -> CraftState:
    """One optimizer update of the patch (minimize form), then projection.

    Epoch/iteration counters are the caller's to advance.
    """
    g = np.asarray(gradient_on_patch, dtype=np.float64)
    v = state.patch.values
    if g.shape != v.shape:
        raise ValidationError(f"gradient shape {g.shape} != patch shape {v.shape}")
    if not np.isfinite(g).all():
        raise NonFiniteLossError("non-finite gradient reached the optimizer",
                                 epoch=state.epoch, iteration=state.iteration)
    cfg = state.config
    opt = state.optimizer_state
    if cfg.step_rule == "sign_step":
        new_values = v - cfg.step_size * np.sign(g)
    else:  # adam
        if opt is None:
            opt = AdamMoments(np.zeros_like(v), np.zeros_like(v), 0)
        t = opt.t + 1
        m = ADAM_BETA1 * opt.m + (1 - ADAM_BETA1) * g
        second = ADAM_BETA2 * opt.v + (1 - ADAM_BETA2) * g * g
        m_hat = m / (1 - ADAM_BETA1 ** t)
        v_hat = second / (1 - ADAM_BETA2 ** t)
        new_values = v - cfg.step_size * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        opt = AdamMoments(m, second, t)
    projected = _project(Patch(new_values), state.spec, state.budget)
    return replace(state, patch=projected, optimizer_state=opt)


def _clamp_composition(x: np.ndarray, delta: np.ndarray, clamp: bool):
    """Compose x + delta, optionally clamped to the valid pixel box.

    Returns the model input and the pass-through gradient mask (1 inside the
    box, 0 where the clamp cut); None mask means identity.
    """
    raw = x + delta
    if not clamp:
        return raw, None
    composed = np.clip(raw, 0.0, 1.0)
    mask = ((raw >= 0.0) & (raw <= 1.0)).astype(np.float64)
    return composed, mask


def craft(dataset, classifier: ClassifierAdapter, spec: TileSpec, budget: NormBudget,
          config: AttackConfig, on_record=None) -> tuple[Patch, Perturbation, CraftLog]:
    """Run the full crafting loop on a sampled dataset.

    `dataset` may be a SampledDataset or a DatasetSpec (resolved through the
    source registry at the classifier's input shape). `on_record`, when
    given, is called with each CraftRecord as it is produced, so callers can
    stream the log to durable storage.
    """
    if config.data_free:
        raise ValidationError("config.data_free is set; use craft_data_free")
    samples = resolve_dataset(dataset, image_hw=classifier.input_hw)
    if len(samples) == 0:
        raise DataError("cannot craft from an empty dataset")
    if len(samples) < config.batch_size:
        raise DataError(
            f"dataset of {len(samples)} samples is smaller than batch size "
            f"{config.batch_size}")
    return _craft_impl(samples, classifier, spec, budget, config, on_record)


def craft_data_free(classifier: ClassifierAdapter, spec: TileSpec, budget: NormBudget,
                    config: AttackConfig,
                    on_record=None) -> tuple[Patch, Perturbation, CraftLog]:
    """Crafting without real data: batches are synthesized surrogate images and
    the cosine head compares logits on x versus x + delta."""
    if not config.data_free:
        raise ValidationError("craft_data_free requires config.data_free = True")
    if config.surrogate_per_epoch < config.batch_size:
        raise DataError(
            f"surrogate_per_epoch {config.surrogate_per_epoch} is smaller than "
            f"batch size {config.batch_size}")
    return _craft_impl(None, classifier, spec, budget, config, on_record)


def _craft_impl(samples: Optional[SampledDataset], classifier: ClassifierAdapter,
                spec: TileSpec, budget: NormBudget, config: AttackConfig,
                on_record=None) -> tuple[Patch, Perturbation, CraftLog]:
    if (classifier.input_h, classifier.input_w) != (spec.image_h, spec.image_w):
        raise ValidationError(
            f"classifier input {classifier.input_h}x{classifier.input_w} does not "
            f"match tile spec image {spec.image_h}x{spec.image_w}")
    head = get_loss_head(config.loss_id)
    if config.target_label is not None and not (
            0 <= config.target_label < classifier.class_count):
        raise ValidationError(
            f"target label {config.target_label} is not a class index of "
            f"{classifier.model_id} (K={classifier.class_count})")

    rng = np.random.default_rng(config.seed)
    state = CraftState(patch=new_patch(spec, classifier.channels), spec=spec,
                       budget=budget, config=config)
    log = CraftLog(meta={"model": classifier.model_id, "alpha": spec.alpha,
                         "norm": budget.p, "epsilon": budget.epsilon,
                         "loss": config.loss_id, "data_free": config.data_free})

    labels = None
    clean_logits = None
    if samples is not None:
        if head.needs_labels:
            if config.label_mode == "clean_pred":
                labels = predict(classifier, samples.images)
            else:
                labels = samples.labels
        if head.needs_clean_logits:
            clean_logits = _forward_batched(classifier, samples.images)
        n_items = len(samples)
    else:
        n_items = config.surrogate_per_epoch

    iterations = n_items // config.batch_size
    m = config.batch_size

    for epoch in range(1, config.epochs + 1):
        if samples is not None:
            perm = rng.permutation(n_items)
        for it in range(1, iterations + 1):
            t0 = time.perf_counter()
            if samples is not None:
                idx = perm[(it - 1) * m: it * m]
                x = samples.images[idx]
                batch_labels = labels[idx] if labels is not None else None
                batch_clean = clean_logits[idx] if clean_logits is not None else None
            else:
                x = _surrogate_batch(rng, m, classifier, config.surrogate)
                batch_labels = None
                batch_clean = classifier.forward(x)

            delta = tile(state.patch, spec)
            composed, mask = _clamp_composition(x, delta.values, config.clamp_inputs)

            def head_fn(logits):
                return head.value_and_grad(batch_clean, logits, batch_labels,
                                           config.target_label, config.kappa)

            loss, _, g_images = classifier.value_and_input_grad(composed, head_fn)
            if not np.isfinite(loss):
                raise NonFiniteLossError(
                    f"loss became non-finite ({loss}) at epoch {epoch} iteration {it}; "
                    f"aborting the run", epoch=epoch, iteration=it)
            if mask is not None:
                g_images = g_images * mask
            g_patch = tile_adjoint(g_images.sum(axis=0), spec)

            state = step(state, g_patch)
            state = replace(state, epoch=epoch, iteration=it)
            record = CraftRecord(
                epoch=epoch, iteration=it, loss=float(loss),
                norm=measure_norm(tile(state.patch, spec), budget),
                wall_ms=(time.perf_counter() - t0) * 1e3)
            log.append(record)
            if on_record is not None:
                on_record(record)

    return state.patch, tile(state.patch, spec), log


def _forward_batched(classifier: ClassifierAdapter, images: np.ndarray,
                     batch_size: int = 256) -> np.ndarray:
    out = [classifier.forward(images[s:s + batch_size])
           for s in range(0, len(images), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, classifier.class_count))


def _surrogate_batch(rng: np.random.Generator, m: int, classifier: ClassifierAdapter,
                     kind: str) -> np.ndarray:
    shape = (m, classifier.input_h, classifier.input_w, classifier.channels)
    if kind == "constant":
        return np.full(shape, 0.5)
    return rng.uniform(0.0, 1.0, size=shape)


__all__ = [
    "AdamMoments", "CraftLog", "CraftRecord", "CraftState",
    "craft", "craft_data_free", "step",
]
