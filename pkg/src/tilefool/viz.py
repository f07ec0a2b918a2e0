"""Static visual outputs: the perturbation itself and clean/perturbed pairs.

Stored perturbations are small signed reals, so for display they are min-max
rescaled to [0, 255]; a constant (e.g. all-zero) perturbation falls back to
mid-gray. The rescale bounds go into a JSON sidecar next to each image so
the mapping stays auditable.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np

from .types import Perturbation


def perturbation_to_display(values: np.ndarray) -> tuple[np.ndarray, dict]:
    """Min-max rescale to uint8; returns the image and the sidecar record."""
    lo = float(values.min())
    hi = float(values.max())
    if hi == lo:
        img = np.full(values.shape, 128, dtype=np.uint8)
    else:
        img = np.round((values - lo) / (hi - lo) * 255.0).astype(np.uint8)
    sidecar = {"rescale": "minmax", "min": lo, "max": hi,
               "note": "display-only rescale; stored values are unquantized reals"}
    return img, sidecar


def _save_png(path: Path, img: np.ndarray) -> None:
    from PIL import Image

    if img.shape[2] == 1:
        img = img[:, :, 0]
    Image.fromarray(img).save(path)


def render_visuals(delta: Perturbation, out_dir, images: Optional[np.ndarray] = None,
                   metadata: Optional[dict] = None, max_pairs: int = 8) -> list[Path]:
    """Write uap.png (+ sidecar) and optional clean/perturbed sample pairs.

    Sample pairs use the clamped composition clip(x + delta, 0, 1), mapped to
    [0, 255] by straight quantization (they are real images, not rescaled).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    display, sidecar = perturbation_to_display(delta.values)
    if metadata:
        sidecar["uap_metadata"] = metadata
    uap_path = out_dir / "uap.png"
    _save_png(uap_path, display)
    (out_dir / "uap.png.json").write_text(json.dumps(sidecar, indent=2))
    written += [uap_path, out_dir / "uap.png.json"]

    if images is not None:
        for i, clean in enumerate(images[:max_pairs]):
            perturbed = np.clip(clean + delta.values, 0.0, 1.0)
            clean_img = np.round(np.clip(clean, 0.0, 1.0) * 255.0).astype(np.uint8)
            pert_img = np.round(perturbed * 255.0).astype(np.uint8)
            for tag, arr in (("clean", clean_img), ("perturbed", pert_img)):
                path = out_dir / f"sample{i:02d}_{tag}.png"
                _save_png(path, arr)
                written.append(path)
    return written


__all__ = ["perturbation_to_display", "render_visuals"]
