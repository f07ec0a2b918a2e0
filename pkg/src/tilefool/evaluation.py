"""Fooling-ratio metrics and the experiment harnesses built on them.

The fooling ratio compares the model's prediction on x + delta against its
prediction on x itself (the clean prediction, not the dataset label), so a
"flip" is a change of the model's own mind. The targeted variant counts only
flips that land on the requested label, hence TFR <= FR structurally.

Every report keeps its per-sample flip log; the aggregate ratios are exact
counts over it and any table can be re-derived from persisted records.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from statistics import median
from typing import Optional, Sequence

import numpy as np

from .attack import craft
from .errors import DataError, ValidationError
from .modelzoo.adapters import ClassifierAdapter, load_classifier, predict
from .modelzoo.data import SampledDataset, sample_dataset
from .tiling import MaskRegion, mask_blocks, resize_perturbation
from .types import (AttackConfig, DatasetSpec, EvalReport, NormBudget, Perturbation,
                    TileSpec)


def _compose(images: np.ndarray, delta: np.ndarray) -> np.ndarray:
    return np.clip(images + delta, 0.0, 1.0)


def _fit_to_adapter(delta: Perturbation, adapter: ClassifierAdapter,
                    uap_metadata: Optional[dict]) -> tuple[Perturbation, dict]:
    """Resize the perturbation to the adapter's input shape when needed,
    recording the method in the metadata copy that travels with the report."""
    meta = dict(uap_metadata or {})
    if delta.values.shape[:2] != (adapter.input_h, adapter.input_w):
        linf_eps = None
        if meta.get("norm") == "inf" and "epsilon" in meta:
            linf_eps = float(meta["epsilon"])
        delta = resize_perturbation(delta, adapter.input_h, adapter.input_w,
                                    linf_epsilon=linf_eps)
        meta["resized_to"] = [adapter.input_h, adapter.input_w]
        meta["resize_method"] = "bilinear"
    if delta.values.shape[2] != adapter.channels:
        raise ValidationError(
            f"perturbation has {delta.values.shape[2]} channels, adapter "
            f"{adapter.model_id} expects {adapter.channels}")
    return delta, meta


def fooling_ratio(delta: Perturbation, adapter: ClassifierAdapter,
                  testset: SampledDataset, uap_metadata: Optional[dict] = None,
                  batch_size: int = 256) -> EvalReport:
    """FR = |{x : predict(x + delta) != predict(x)}| / N, with clamped composition."""
    return _evaluate(delta, adapter, testset, uap_metadata, None, batch_size)


def targeted_fooling_ratio(delta: Perturbation, adapter: ClassifierAdapter,
                           testset: SampledDataset, target_label: int,
                           uap_metadata: Optional[dict] = None,
                           batch_size: int = 256) -> EvalReport:
    """FR plus TFR = fraction of samples that both flip and land on `target_label`."""
    if not 0 <= target_label < adapter.class_count:
        raise ValidationError(
            f"target label {target_label} out of range [0, {adapter.class_count})")
    return _evaluate(delta, adapter, testset, uap_metadata, target_label, batch_size)


def _evaluate(delta, adapter, testset, uap_metadata, target_label, batch_size) -> EvalReport:
    if len(testset) == 0:
        raise DataError("cannot evaluate on an empty test set")
    delta, meta = _fit_to_adapter(delta, adapter, uap_metadata)
    clean = predict(adapter, testset.images, batch_size=batch_size)
    adv = predict(adapter, _compose(testset.images, delta.values), batch_size=batch_size)
    return EvalReport.from_labels(
        clean, adv,
        source_model=str(meta.get("source_model", "unknown")),
        target_model=adapter.model_id,
        uap_metadata=meta,
        target_label=target_label,
        provenance=testset.provenance,
    )


# --------------------------------------------------------------------------
# Transfer matrix
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TransferCell:
    artifact_id: str
    target_model: str
    report: Optional[EvalReport] = None
    error: Optional[str] = None

    def to_record(self) -> dict:
        rec = {"type": "transfer_cell", "artifact_id": self.artifact_id,
               "target_model": self.target_model, "error": self.error}
        if self.report is not None:
            rec["report"] = self.report.to_record()
        return rec


@dataclass
class TransferMatrix:
    """Rows = source artifacts, columns = target models."""

    sources: list[str]
    targets: list[str]
    cells: dict[tuple[str, str], TransferCell] = field(default_factory=dict)

    def cell(self, artifact_id: str, target_model: str) -> TransferCell:
        return self.cells[(artifact_id, target_model)]

    def records(self):
        for art in self.sources:
            for tgt in self.targets:
                yield self.cells[(art, tgt)].to_record()

    def render(self) -> str:
        header = ["artifact \\ target"] + list(self.targets)
        rows = [header]
        for art in self.sources:
            row = [art]
            for tgt in self.targets:
                cell = self.cells[(art, tgt)]
                if cell.error is not None:
                    row.append("ERR")
                else:
                    row.append(f"{cell.report.fooling_ratio * 100:.2f}")
            rows.append(row)
        return format_table(rows)


def artifact_label(metadata: dict, fallback: str = "uap") -> str:
    parts = [str(metadata.get("source_model", fallback))]
    if "alpha" in metadata:
        parts.append(f"a{metadata['alpha']}")
    if "loss" in metadata:
        parts.append(str(metadata["loss"]))
    if "seed" in metadata:
        parts.append(f"s{metadata['seed']}")
    return "-".join(parts)


def transfer_sweep(artifacts: Sequence, target_models: Sequence[str],
                   testset_spec: DatasetSpec, max_workers: int = 1) -> TransferMatrix:
    """Evaluate every (artifact, target model) pair on one held-out test set
    per target, resizing when shapes differ. Per-cell failures stay in-cell."""
    from .artifact import Artifact, load_artifact

    loaded: list[Artifact] = []
    labels: list[str] = []
    for item in artifacts:
        art = item if isinstance(item, Artifact) else load_artifact(item)
        base = artifact_label(art.metadata)
        label, k = base, 2
        while label in labels:
            label, k = f"{base}#{k}", k + 1
        loaded.append(art)
        labels.append(label)

    matrix = TransferMatrix(sources=labels, targets=list(target_models))

    def run_column(target_model: str) -> list[TransferCell]:
        try:
            adapter = load_classifier(target_model)
            testset = sample_dataset(testset_spec.source_id, testset_spec.classes_chosen,
                                     testset_spec.per_class, testset_spec.split,
                                     testset_spec.seed, image_hw=adapter.input_hw)
        except Exception as exc:
            return [TransferCell(label, target_model, error=f"{type(exc).__name__}: {exc}")
                    for label in labels]
        column = []
        for label, art in zip(labels, loaded):
            try:
                report = fooling_ratio(art.perturbation, adapter, testset,
                                       uap_metadata=art.metadata)
                column.append(TransferCell(label, target_model, report=report))
            except Exception as exc:
                column.append(TransferCell(label, target_model,
                                           error=f"{type(exc).__name__}: {exc}"))
        return column

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            columns = list(pool.map(run_column, matrix.targets))
    else:
        columns = [run_column(t) for t in matrix.targets]

    for column in columns:
        for cell in column:
            matrix.cells[(cell.artifact_id, cell.target_model)] = cell
    return matrix


# --------------------------------------------------------------------------
# Position ablation
# --------------------------------------------------------------------------

def position_ablation(delta: Perturbation, adapter: ClassifierAdapter,
                      testset: SampledDataset, regions: Sequence[MaskRegion],
                      uap_metadata: Optional[dict] = None) -> list[EvalReport]:
    """One fooling-ratio report per masked variant of the perturbation."""
    reports = []
    for region in regions:
        masked = mask_blocks(delta, region)
        meta = dict(uap_metadata or {})
        meta["mask_region"] = region.kind
        reports.append(fooling_ratio(masked, adapter, testset, uap_metadata=meta))
    return reports


# --------------------------------------------------------------------------
# Data-efficiency sweep
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepCell:
    c: int
    n: int
    alpha: int
    fooling_ratios: tuple = ()
    seeds: tuple = ()
    error: Optional[str] = None

    @property
    def median_fr(self) -> Optional[float]:
        return median(self.fooling_ratios) if self.fooling_ratios else None

    def to_record(self) -> dict:
        return {"type": "sweep_cell", "c": self.c, "n": self.n, "alpha": self.alpha,
                "seeds": list(self.seeds), "fooling_ratios": list(self.fooling_ratios),
                "median_fr": self.median_fr, "error": self.error}


@dataclass
class SweepTable:
    """Rows = split ratio alpha, columns = (c, n) training-budget cells."""

    grid: list[tuple[int, int]]
    alphas: list[int]
    cells: dict[tuple[int, int, int], SweepCell] = field(default_factory=dict)

    def cell(self, c: int, n: int, alpha: int) -> SweepCell:
        return self.cells[(c, n, alpha)]

    def records(self):
        for alpha in self.alphas:
            for c, n in self.grid:
                yield self.cells[(c, n, alpha)].to_record()

    def render(self) -> str:
        header = ["alpha \\ (c,n)"] + [f"({c},{n})" for c, n in self.grid]
        rows = [header]
        for alpha in self.alphas:
            row = [str(alpha)]
            for c, n in self.grid:
                cell = self.cells[(c, n, alpha)]
                row.append("ERR" if cell.error else f"{cell.median_fr * 100:.2f}")
            rows.append(row)
        return format_table(rows)


def data_efficiency_sweep(c_n_grid: Sequence[tuple[int, int]], alphas: Sequence[int],
                          adapter: ClassifierAdapter, budget: NormBudget,
                          config: AttackConfig, train_source: str,
                          testset: SampledDataset,
                          seeds: Optional[Sequence[int]] = None) -> SweepTable:
    """Craft one perturbation per (c, n, alpha, seed) and report held-out FR.

    Infeasible cells are marked and the sweep continues. `seeds` defaults to
    the config seed; pass several to get median-over-seeds cells.
    """
    seeds = list(seeds) if seeds is not None else [config.seed]
    table = SweepTable(grid=[(int(c), int(n)) for c, n in c_n_grid],
                       alphas=[int(a) for a in alphas])
    for alpha in table.alphas:
        for c, n in table.grid:
            try:
                spec = TileSpec(alpha=alpha, image_h=adapter.input_h,
                                image_w=adapter.input_w)
                ratios = []
                for seed in seeds:
                    cfg = replace(config, seed=seed)
                    train = sample_dataset(train_source, c, n, "train", seed,
                                           image_hw=adapter.input_hw)
                    _, delta, _ = craft(train, adapter, spec, budget, cfg)
                    report = fooling_ratio(delta, adapter, testset,
                                           uap_metadata={"alpha": alpha, "seed": seed,
                                                         "source_model": adapter.model_id})
                    ratios.append(report.fooling_ratio)
                table.cells[(c, n, alpha)] = SweepCell(c, n, alpha, tuple(ratios),
                                                       tuple(seeds))
            except Exception as exc:
                table.cells[(c, n, alpha)] = SweepCell(
                    c, n, alpha, error=f"{type(exc).__name__}: {exc}")
    return table


# --------------------------------------------------------------------------
# Rendering / persistence helpers
# --------------------------------------------------------------------------

def format_table(rows: list[list[str]]) -> str:
    widths = [max(len(str(row[i])) for row in rows) for i in range(len(rows[0]))]
    lines = []
    for k, row in enumerate(rows):
        lines.append("  ".join(str(cell).ljust(widths[i]) for i, cell in enumerate(row)))
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def render_reports_table(reports: Sequence[EvalReport]) -> str:
    rows = [["source", "target", "region/label", "N", "FR %", "TFR %"]]
    for r in reports:
        extra = str(r.uap_metadata.get("mask_region",
                                       r.target_label if r.target_label is not None else ""))
        tfr = "" if r.targeted_fooling_ratio is None else f"{r.targeted_fooling_ratio * 100:.2f}"
        rows.append([r.source_model, r.target_model, extra, str(r.n_evaluated),
                     f"{r.fooling_ratio * 100:.2f}", tfr])
    return format_table(rows)


def write_jsonl(path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


__all__ = [
    "SweepCell", "SweepTable", "TransferCell", "TransferMatrix", "artifact_label",
    "data_efficiency_sweep", "fooling_ratio", "format_table", "position_ablation",
    "read_jsonl", "render_reports_table", "targeted_fooling_ratio", "transfer_sweep",
    "write_jsonl",
]
