#!/usr/bin/env python3
"""Walk through the geometry core: patches, tiling, norms, and projections.

A perturbation is never optimized at image size. Instead a small patch v is
tiled alpha x alpha times to fill the image, so the image-level perturbation
is periodic by construction and the optimization problem has 1/alpha^2 as
many variables. This script shows the tiling identity, the two norm budgets,
and how each projection keeps the *tiled* perturbation inside its budget.

Run: python demos/01_tiling_and_budgets.py
"""

import numpy as np

from tilefool import (NormBudget, Patch, TileSpec, measure_norm, project_l2,
                      project_linf, tile, validate_tile_spec)

rng = np.random.default_rng(0)

# --- a 2x2 patch tiled over a 4x4 image -----------------------------------
spec = TileSpec(alpha=2, image_h=4, image_w=4)
patch = Patch(np.array([[1.0, 2.0], [3.0, 4.0]])[:, :, None])
delta = tile(patch, spec)
print("patch:")
print(patch.values[:, :, 0])
print("tiled perturbation (note the periodic blocks):")
print(delta.values[:, :, 0])

# --- the split ratio must divide the image --------------------------------
print("\nvalid split ratios for 224x224:", end=" ")
print([a for a in range(1, 33) if 224 % a == 0])
try:
    validate_tile_spec(3, 224, 224)
except Exception as exc:
    print("alpha=3 on 224x224 ->", exc)

# --- norms of a tiled perturbation -----------------------------------------
spec = TileSpec(alpha=8, image_h=224, image_w=224)
v = Patch(rng.uniform(-0.05, 0.05, size=(28, 28, 3)))
delta = tile(v, spec)
linf = NormBudget("inf", 10 / 255)
l2 = NormBudget("2", 40.0)
print(f"\nmax |v|                 = {np.abs(v.values).max():.6f}")
print(f"L-inf norm of tiled     = {measure_norm(delta, linf):.6f}  (identical)")
print(f"L2 norm of patch        = {np.linalg.norm(v.values):.4f}")
print(f"L2 norm of tiled        = {measure_norm(delta, l2):.4f}  "
      f"(= alpha * patch norm = {8 * np.linalg.norm(v.values):.4f})")

# --- projections ------------------------------------------------------------
big = Patch(rng.uniform(-0.5, 0.5, size=(28, 28, 3)))
clamped = project_linf(big, linf.epsilon)
print(f"\nafter L-inf projection: max |v| = {np.abs(clamped.values).max():.6f} "
      f"(epsilon = {linf.epsilon:.6f})")

scaled = project_l2(big, spec, l2.epsilon)
print(f"after L2 projection:    tiled L2 = "
      f"{measure_norm(tile(scaled, spec), l2):.4f} (epsilon = {l2.epsilon})")
