"""Per-batch loss heads on classifier logits, with analytic gradients.

Three heads are interchangeable in the crafting loop:

  ce        - softmax cross-entropy. Untargeted crafting *maximizes* it
              against the reference labels; targeted crafting *minimizes* it
              against the constant target label.
  df_margin - clamped logit margin max(z_ref - max_{j != ref} z_j, -kappa),
              minimized; drives the reference logit below the runner-up.
  cos_sim   - mean row-wise cosine similarity between clean and adversarial
              logit vectors, minimized. Needs no labels, so it is the head
              used for data-free crafting.

The attack loop consumes a uniform minimize interface (`get_loss_head`), so
the negation for untargeted ce lives here, not in the optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ValidationError
from .types import LOSS_IDS

Array = np.ndarray


@dataclass(frozen=True)
class LogitsBatch:
    """A (batch, classes) logits array plus optional per-row reference labels."""

    values: Array
    labels: Optional[Array] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 2:
            raise ValidationError(f"logits must be rank-2 (batch, classes), got {values.shape}")
        if not np.isfinite(values).all():
            raise ValidationError("logits must all be finite")
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            object.__setattr__(self, "labels", labels)
            if labels.shape != (values.shape[0],):
                raise ValidationError(
                    f"labels shape {labels.shape} must be ({values.shape[0]},)")
            if labels.size and (labels.min() < 0 or labels.max() >= values.shape[1]):
                raise ValidationError(
                    f"labels must lie in [0, {values.shape[1]}), got range "
                    f"[{labels.min()}, {labels.max()}]")

    @property
    def batch(self) -> int:
        return self.values.shape[0]

    @property
    def classes(self) -> int:
        return self.values.shape[1]


def _log_softmax(z: Array) -> Array:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _softmax(z: Array) -> Array:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def ce_value_and_grad(logits: Array, labels: Array) -> tuple[float, Array]:
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    m = logits.shape[0]
    rows = np.arange(m)
    value = float(-_log_softmax(logits)[rows, labels].mean())
    grad = _softmax(logits)
    grad[rows, labels] -= 1.0
    return value, grad / m


def df_margin_value_and_grad(logits: Array, labels: Array,
                             kappa: float) -> tuple[float, Array]:
    """Mean clamped margin max(z_ref - max_{j != ref} z_j, -kappa) and gradient.

    The gradient is the almost-everywhere one: zero where the clamp engages,
    +-1/m on the reference and runner-up logits elsewhere.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    m, k = logits.shape
    rows = np.arange(m)
    masked = logits.copy()
    masked[rows, labels] = -np.inf
    runner_up = masked.argmax(axis=1)
    margins = logits[rows, labels] - logits[rows, runner_up]
    clamped = np.maximum(margins, -kappa)
    value = float(clamped.mean())
    grad = np.zeros_like(logits)
    active = margins > -kappa
    grad[rows[active], labels[active]] = 1.0 / m
    grad[rows[active], runner_up[active]] -= 1.0 / m
    return value, grad


def cos_sim_value_and_grad(clean_logits: Array, adv_logits: Array) -> tuple[float, Array]:
    """Mean row-wise cosine similarity and its gradient w.r.t. the adversarial logits.

    The denominator is sqrt(|a|^2 * |b|^2), which returns exactly 1.0 for
    bit-identical rows; the result is clipped to [-1, 1] against roundoff.
    """
    clean = np.asarray(clean_logits, dtype=np.float64)
    adv = np.asarray(adv_logits, dtype=np.float64)
    if clean.shape != adv.shape:
        raise ValidationError(f"logit shapes differ: {clean.shape} vs {adv.shape}")
    sc = (clean * clean).sum(axis=1)
    sa = (adv * adv).sum(axis=1)
    if (sc == 0).any() or (sa == 0).any():
        raise ValidationError("cosine similarity is undefined for a zero-norm logit row")
    num = (clean * adv).sum(axis=1)
    den = np.sqrt(sc * sa)
    cos = np.clip(num / den, -1.0, 1.0)
    m = clean.shape[0]
    value = float(cos.mean())
    grad = (clean / den[:, None] - (cos / sa)[:, None] * adv) / m
    return value, grad


def _require_labels(batch: LogitsBatch, op: str) -> Array:
    if batch.labels is None:
        raise ValidationError(f"{op} requires reference labels on the logits batch")
    return batch.labels


def loss_ce_untargeted(adv_logits: LogitsBatch) -> float:
    """Mean cross-entropy against the batch labels. Crafting maximizes this."""
    labels = _require_labels(adv_logits, "loss_ce_untargeted")
    return ce_value_and_grad(adv_logits.values, labels)[0]


def loss_ce_targeted(adv_logits: LogitsBatch, target_label: int) -> float:
    """Mean cross-entropy against a constant target label. Crafting minimizes this."""
    if not 0 <= target_label < adv_logits.classes:
        raise ValidationError(
            f"target label {target_label} out of range [0, {adv_logits.classes})")
    labels = np.full(adv_logits.batch, target_label, dtype=np.int64)
    return ce_value_and_grad(adv_logits.values, labels)[0]


def loss_df_margin(adv_logits: LogitsBatch, kappa: float) -> float:
    """Mean clamped reference-vs-runner-up margin. Crafting minimizes this."""
    if kappa < 0:
        raise ValidationError(f"kappa must be non-negative, got {kappa!r}")
    labels = _require_labels(adv_logits, "loss_df_margin")
    return df_margin_value_and_grad(adv_logits.values, labels, kappa)[0]


def loss_cos_sim(clean_logits: LogitsBatch, adv_logits: LogitsBatch) -> float:
    """Mean row-wise cosine similarity between clean and adversarial logits.
    Crafting minimizes this; no labels needed."""
    return cos_sim_value_and_grad(clean_logits.values, adv_logits.values)[0]


# --------------------------------------------------------------------------
# Uniform minimize interface for the crafting loop
# --------------------------------------------------------------------------

HeadFn = Callable[..., tuple[float, Array]]


@dataclass(frozen=True)
class LossHead:
    """One crafting objective in minimize form.

    `value_and_grad(clean_logits, adv_logits, labels, target_label, kappa)`
    returns the objective value and its gradient w.r.t. the adversarial
    logits; a crafting step follows the negative gradient.
    """

    loss_id: str
    needs_labels: bool
    needs_clean_logits: bool
    supports_targeted: bool
    data_free_capable: bool
    _fn: HeadFn

    def value_and_grad(self, clean_logits: Optional[Array], adv_logits: Array,
                       labels: Optional[Array], target_label: Optional[int],
                       kappa: float) -> tuple[float, Array]:
        return self._fn(clean_logits, adv_logits, labels, target_label, kappa)


def _ce_head(clean, adv, labels, target_label, kappa):
    if target_label is not None:
        tgt = np.full(adv.shape[0], target_label, dtype=np.int64)
        return ce_value_and_grad(adv, tgt)
    if labels is None:
        raise ValidationError("untargeted ce head requires labels")
    value, grad = ce_value_and_grad(adv, labels)
    return -value, -grad


def _df_head(clean, adv, labels, target_label, kappa):
    if labels is None:
        raise ValidationError("df_margin head requires labels")
    return df_margin_value_and_grad(adv, labels, kappa)


def _cos_head(clean, adv, labels, target_label, kappa):
    if clean is None:
        raise ValidationError("cos_sim head requires clean logits")
    return cos_sim_value_and_grad(clean, adv)


LOSS_REGISTRY: dict[str, LossHead] = {
    "ce": LossHead("ce", needs_labels=True, needs_clean_logits=False,
                   supports_targeted=True, data_free_capable=False, _fn=_ce_head),
    "df_margin": LossHead("df_margin", needs_labels=True, needs_clean_logits=False,
                          supports_targeted=False, data_free_capable=False, _fn=_df_head),
    "cos_sim": LossHead("cos_sim", needs_labels=False, needs_clean_logits=True,
                        supports_targeted=False, data_free_capable=True, _fn=_cos_head),
}

assert tuple(sorted(LOSS_REGISTRY)) == tuple(sorted(LOSS_IDS))


def get_loss_head(loss_id: str) -> LossHead:
    try:
        return LOSS_REGISTRY[loss_id]
    except KeyError:
        raise ValidationError(
            f"unknown loss id {loss_id!r}; available: {sorted(LOSS_REGISTRY)}") from None


__all__ = [
    "LogitsBatch", "LossHead", "LOSS_REGISTRY", "get_loss_head",
    "ce_value_and_grad", "df_margin_value_and_grad", "cos_sim_value_and_grad",
    "loss_ce_untargeted", "loss_ce_targeted", "loss_df_margin", "loss_cos_sim",
]
