"""tilefool: universal adversarial perturbations from tiled texture patches.

A small texture patch is optimized under a norm budget, tiled to image size,
and evaluated by how often the resulting single fixed perturbation changes a
classifier's predictions. The package covers crafting (data-dependent and
data-free), L-inf/L2 budgets, cross-model and cross-shape evaluation,
position masking, data-efficiency sweeps, and a binary artifact format.
"""

__version__ = "0.1.0"

from .types import (AttackConfig, DatasetSpec, EvalReport, NormBudget, Patch,
                    Perturbation, TileSpec, new_patch, validate_tile_spec)
from .tiling import (MaskRegion, bilinear_resize, mask_blocks, measure_norm,
                     project_l2, project_linf, resize_perturbation, tile, tile_adjoint)
from .losses import (LogitsBatch, get_loss_head, loss_ce_targeted, loss_ce_untargeted,
                     loss_cos_sim, loss_df_margin)
from .attack import CraftLog, CraftState, craft, craft_data_free, step
from .modelzoo import (ClassifierAdapter, SampledDataset, available_models,
                       load_classifier, predict, sample_dataset)
from .evaluation import (SweepTable, TransferMatrix, data_efficiency_sweep,
                         fooling_ratio, position_ablation, targeted_fooling_ratio,
                         transfer_sweep)
from .artifact import Artifact, build_metadata, load_artifact, save_artifact
from .viz import render_visuals

__all__ = [
    "__version__",
    "AttackConfig", "DatasetSpec", "EvalReport", "NormBudget", "Patch",
    "Perturbation", "TileSpec", "new_patch", "validate_tile_spec",
    "MaskRegion", "bilinear_resize", "mask_blocks", "measure_norm",
    "project_l2", "project_linf", "resize_perturbation", "tile", "tile_adjoint",
    "LogitsBatch", "get_loss_head", "loss_ce_targeted", "loss_ce_untargeted",
    "loss_cos_sim", "loss_df_margin",
    "CraftLog", "CraftState", "craft", "craft_data_free", "step",
    "ClassifierAdapter", "SampledDataset", "available_models", "load_classifier",
    "predict", "sample_dataset",
    "SweepTable", "TransferMatrix", "data_efficiency_sweep", "fooling_ratio",
    "position_ablation", "targeted_fooling_ratio", "transfer_sweep",
    "Artifact", "build_metadata", "load_artifact", "save_artifact",
    "render_visuals",
]
