"""Perturbation artifact files: a self-validating binary container.

Layout (all integers little-endian):

    bytes 0..3   magic "UAP1"
    u32          format version (currently 1)
    u32          metadata byte length
    ...          UTF-8 JSON metadata document
    tensor       patch      [u32 rank, u32 dims..., float32 row-major data]
    tensor       tiled perturbation, same encoding

Both the patch and its tiled form are stored so downstream consumers need no
tiling code; on both save and load the file refuses to exist unless the
stored perturbation re-tiles bit-exactly from the stored patch and satisfies
the stored norm budget.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ArtifactFormatError, ArtifactIntegrityError
from .tiling import measure_norm, tile
from .types import NormBudget, Patch, Perturbation, TileSpec

MAGIC = b"UAP1"
FORMAT_VERSION = 1
L2_SLACK = 1e-6

_REQUIRED_METADATA = ("alpha", "epsilon", "norm")


@dataclass(frozen=True)
class Artifact:
    """A loaded artifact: typed pieces plus the raw metadata document."""

    patch: Patch
    spec: TileSpec
    budget: NormBudget
    metadata: dict
    perturbation: Perturbation


def _check_budget(delta_values: np.ndarray, budget: NormBudget, stage: str) -> None:
    norm = measure_norm(delta_values, budget)
    if budget.is_linf:
        # stored tensors are float32; rounding to nearest is monotone, so a
        # patch clamped to eps in float64 stays within float32(eps)
        limit = max(budget.epsilon, float(np.float32(budget.epsilon)))
    else:
        limit = budget.epsilon + max(L2_SLACK, budget.epsilon * 1e-6)
    if norm > limit:
        raise ArtifactIntegrityError(
            f"{stage}: tiled perturbation norm {norm:.6g} exceeds the stored "
            f"L{budget.p} budget epsilon={budget.epsilon:.6g}")


def _pack_tensor(arr: np.ndarray) -> bytes:
    data = np.ascontiguousarray(arr, dtype="<f4")
    head = struct.pack("<I", data.ndim) + struct.pack(f"<{data.ndim}I", *data.shape)
    return head + data.tobytes()


def save_artifact(path, patch: Patch, spec: TileSpec, budget: NormBudget,
                  metadata: dict, perturbation: Optional[Perturbation] = None) -> Path:
    """Write an artifact file; refuses to write one that violates its own invariants.

    `perturbation` defaults to tile(patch, spec); passing one explicitly is
    only useful to prove that mismatched tensors are rejected.
    """
    path = Path(path)
    patch32 = np.asarray(patch.values, dtype="<f4")
    if perturbation is None:
        delta32 = np.tile(patch32, (spec.alpha, spec.alpha, 1))
    else:
        delta32 = np.asarray(perturbation.values, dtype="<f4")
        if delta32.shape != (spec.image_h, spec.image_w, patch32.shape[2]) or \
                not np.array_equal(np.tile(patch32, (spec.alpha, spec.alpha, 1)), delta32):
            raise ArtifactIntegrityError(
                "refusing to save: stored perturbation does not equal the stored "
                "patch tiled with the stored split ratio")
    _check_budget(delta32, budget, "refusing to save")

    meta = dict(metadata)
    meta.setdefault("alpha", spec.alpha)
    meta.setdefault("image_h", spec.image_h)
    meta.setdefault("image_w", spec.image_w)
    meta.setdefault("epsilon", budget.epsilon)
    meta.setdefault("norm", budget.p)
    meta.setdefault("created_at", datetime.now(timezone.utc).isoformat())
    meta.setdefault("toolkit_version", _toolkit_version())
    if meta["alpha"] != spec.alpha or meta["norm"] != budget.p:
        raise ArtifactIntegrityError(
            "metadata alpha/norm disagree with the spec and budget being saved")

    meta_bytes = json.dumps(meta).encode("utf-8")
    blob = (MAGIC + struct.pack("<I", FORMAT_VERSION)
            + struct.pack("<I", len(meta_bytes)) + meta_bytes
            + _pack_tensor(patch32) + _pack_tensor(delta32))
    path.write_bytes(blob)
    return path


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.offset = 0

    def take(self, n: int, section: str) -> bytes:
        if self.offset + n > len(self.blob):
            raise ArtifactFormatError(
                f"truncated artifact: missing or incomplete {section} "
                f"(needed {n} bytes at offset {self.offset}, file has {len(self.blob)})")
        out = self.blob[self.offset:self.offset + n]
        self.offset += n
        return out

    def u32(self, section: str) -> int:
        return struct.unpack("<I", self.take(4, section))[0]

    def tensor(self, name: str) -> np.ndarray:
        rank = self.u32(f"{name} tensor rank")
        if rank > 8:
            raise ArtifactFormatError(f"implausible {name} tensor rank {rank}")
        dims = [self.u32(f"{name} tensor dims") for _ in range(rank)]
        count = int(np.prod(dims, dtype=np.int64)) if dims else 1
        raw = self.take(4 * count, f"{name} tensor data")
        return np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float32)


def load_artifact(path) -> Artifact:
    """Read, validate, and type an artifact file."""
    blob = Path(path).read_bytes()
    reader = _Reader(blob)
    magic = reader.take(4, "magic header")
    if magic != MAGIC:
        raise ArtifactFormatError(f"bad magic {magic!r}; expected {MAGIC!r}")
    version = reader.u32("version field")
    if version != FORMAT_VERSION:
        raise ArtifactFormatError(
            f"unsupported artifact version {version}; this toolkit reads "
            f"version {FORMAT_VERSION}")
    meta_len = reader.u32("metadata length")
    meta_bytes = reader.take(meta_len, "metadata document")
    try:
        metadata = json.loads(meta_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArtifactFormatError(f"metadata document is not valid UTF-8 JSON: {exc}") from exc
    for key in _REQUIRED_METADATA:
        if key not in metadata:
            raise ArtifactFormatError(f"metadata is missing required key {key!r}")

    patch_values = reader.tensor("patch")
    delta_values = reader.tensor("perturbation")
    if reader.offset != len(blob):
        raise ArtifactFormatError(
            f"trailing garbage: {len(blob) - reader.offset} unexpected bytes "
            f"after the perturbation tensor")
    if patch_values.ndim != 3 or delta_values.ndim != 3:
        raise ArtifactFormatError("stored tensors must be rank-3 (h, w, c)")

    alpha = int(metadata["alpha"])
    spec = TileSpec(alpha=alpha, image_h=delta_values.shape[0],
                    image_w=delta_values.shape[1])
    budget = NormBudget(p=str(metadata["norm"]), epsilon=float(metadata["epsilon"]))

    if patch_values.shape[:2] != (spec.patch_h, spec.patch_w):
        raise ArtifactIntegrityError(
            f"stored patch shape {patch_values.shape[:2]} does not match the "
            f"shape {(spec.patch_h, spec.patch_w)} implied by alpha={alpha} and "
            f"image {spec.image_h}x{spec.image_w}")
    if not np.array_equal(np.tile(patch_values, (alpha, alpha, 1)), delta_values):
        raise ArtifactIntegrityError(
            "stored perturbation does not re-tile bit-exactly from the stored patch")
    _check_budget(delta_values, budget, "rejecting artifact")

    return Artifact(patch=Patch(patch_values), spec=spec, budget=budget,
                    metadata=metadata,
                    perturbation=Perturbation(delta_values, origin="loaded"))


def build_metadata(*, spec: TileSpec, budget: NormBudget, config, source_model: str,
                   dataset_spec=None, extra: Optional[dict] = None) -> dict:
    """The full provenance block a crafted artifact carries."""
    meta = {
        "alpha": spec.alpha,
        "image_h": spec.image_h,
        "image_w": spec.image_w,
        "epsilon": budget.epsilon,
        "norm": budget.p,
        "source_model": source_model,
        "loss": config.loss_id,
        "kappa": config.kappa,
        "target_label": config.target_label,
        "optimizer": config.step_rule,
        "step_size": config.step_size,
        "epochs": config.epochs,
        "batch_size": config.batch_size,
        "seed": config.seed,
        "clamp_inputs": config.clamp_inputs,
        "data_free": config.data_free,
        "surrogate": config.surrogate if config.data_free else None,
        "created_at": datetime.now(timezone.utc).isoformat(),
        "toolkit_version": _toolkit_version(),
    }
    if dataset_spec is not None:
        meta["dataset"] = {
            "source_id": dataset_spec.source_id,
            "classes_chosen": dataset_spec.classes_chosen,
            "per_class": dataset_spec.per_class,
            "split": dataset_spec.split,
            "seed": dataset_spec.seed,
        }
    if extra:
        meta.update(extra)
    return meta


def _toolkit_version() -> str:
    from . import __version__

    return __version__


__all__ = ["Artifact", "FORMAT_VERSION", "MAGIC", "build_metadata",
           "load_artifact", "save_artifact"]
