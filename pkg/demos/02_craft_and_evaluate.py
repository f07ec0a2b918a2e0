#!/usr/bin/env python3
"""Craft a tiled perturbation against the bundled classifier and measure how
often it changes the model's predictions.

The bundled desk model is a small numpy CNN trained on synth10, a procedural
10-class texture dataset, so this runs offline on CPU in under a minute. The
crafted artifact is saved to disk, reloaded, and rendered as PNGs.

Run: python demos/02_craft_and_evaluate.py
"""

import tempfile
from pathlib import Path

import numpy as np

from tilefool import (AttackConfig, NormBudget, TileSpec, build_metadata, craft,
                      fooling_ratio, load_artifact, load_classifier,
                      render_visuals, sample_dataset, save_artifact)

model = load_classifier("desk_cnn_cifar10")
print(f"model: {model.model_id} ({model.input_h}x{model.input_w}x{model.channels}, "
      f"{model.class_count} classes)")

train = sample_dataset("synth10", 10, 20, "train", seed=0)
test = sample_dataset("synth10", 10, 50, "validation", seed=99)
print(f"train: {len(train)} images, held-out test: {len(test)} images")

spec = TileSpec(alpha=4, image_h=32, image_w=32)
budget = NormBudget("inf", 10 / 255)
config = AttackConfig(epochs=8, batch_size=50, loss_id="ce", seed=0)
print(f"\ncrafting: alpha={spec.alpha}, patch {spec.patch_shape}, "
      f"eps={budget.epsilon:.4f}, {config.epochs} epochs ...")

patch, delta, log = craft(train, model, spec, budget, config)
print(f"loss trace: {log.records[0].loss:.3f} -> {log.records[-1].loss:.3f} "
      f"over {len(log)} iterations")
print(f"final perturbation L-inf norm: {np.abs(delta.values).max():.4f}")

report = fooling_ratio(delta, model, test,
                       uap_metadata={"source_model": model.model_id})
print(f"\nfooling ratio on held-out data: {report.fooling_ratio * 100:.1f}% "
      f"(N={report.n_evaluated})")

out = Path(tempfile.mkdtemp(prefix="tilefool_demo_"))
meta = build_metadata(spec=spec, budget=budget, config=config,
                      source_model=model.model_id, dataset_spec=train.spec)
artifact_path = save_artifact(out / "demo.uap", patch, spec, budget, meta)
reloaded = load_artifact(artifact_path)
assert np.array_equal(np.tile(reloaded.patch.values, (spec.alpha, spec.alpha, 1)),
                      reloaded.perturbation.values)
print(f"\nartifact saved and re-verified: {artifact_path}")

written = render_visuals(reloaded.perturbation, out, images=test.images[:2],
                         metadata=reloaded.metadata)
print("rendered:", ", ".join(p.name for p in written))
