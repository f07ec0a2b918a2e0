"""The tile operator, its adjoint, norm budgets, resizing, and block masks.

A patch v of shape (H/alpha, W/alpha, c) is repeated alpha times along each
spatial axis to fill the image: delta[i, j, k] = v[i mod h, j mod w, k].
Because tiling is a linear gather, its adjoint (the map an upstream image
gradient takes back onto the patch) is the sum over the alpha^2 blocks; that
is what makes optimizing the patch instead of the full image cheap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .types import NormBudget, Patch, Perturbation, TileSpec


def tile(patch: Patch, spec: TileSpec) -> Perturbation:
    """Repeat `patch` alpha x alpha times to image size."""
    v = patch.values
    if v.shape[:2] != (spec.patch_h, spec.patch_w):
        raise ValidationError(
            f"patch shape {v.shape[:2]} does not match spec patch shape "
            f"{(spec.patch_h, spec.patch_w)} (alpha={spec.alpha}, "
            f"image {spec.image_h}x{spec.image_w})")
    return Perturbation(np.tile(v, (spec.alpha, spec.alpha, 1)), origin="tiled")


def tile_adjoint(image_grad: np.ndarray, spec: TileSpec) -> np.ndarray:
    """Pull an (image_h, image_w, c) gradient back onto the patch: block sum."""
    g = np.asarray(image_grad)
    if g.ndim != 3 or g.shape[:2] != (spec.image_h, spec.image_w):
        raise ValidationError(
            f"gradient shape {g.shape} incompatible with image "
            f"{spec.image_h}x{spec.image_w}")
    a, h, w, c = spec.alpha, spec.patch_h, spec.patch_w, g.shape[2]
    return g.reshape(a, h, a, w, c).sum(axis=(0, 2))


def measure_norm(delta, budget: NormBudget) -> float:
    """L-inf: max absolute entry. L2: flat Euclidean norm over all pixels and channels."""
    values = delta.values if isinstance(delta, Perturbation) else np.asarray(delta)
    if not np.isfinite(values).all():
        raise ValidationError("cannot measure the norm of a non-finite perturbation")
    if values.size == 0:
        return 0.0
    if budget.is_linf:
        return float(np.abs(values).max())
    return float(np.linalg.norm(values.ravel()))


def project_linf(patch: Patch, epsilon: float) -> Patch:
    """Clamp every entry to [-epsilon, epsilon].

    Because tiling only repeats values, this bounds the tiled perturbation's
    L-inf norm by epsilon for any split ratio.
    """
    if epsilon <= 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon!r}")
    v = patch.values
    if np.abs(v).max(initial=0.0) <= epsilon:
        return patch
    return Patch(np.clip(v, -epsilon, epsilon))


def project_l2(patch: Patch, spec: TileSpec, epsilon: float) -> Patch:
    """Rescale so the *tiled* perturbation lies in the L2 ball of radius epsilon.

    The tiled norm is alpha * ||v||_2 exactly (alpha^2 identical blocks), so a
    single scalar rescale lands on the sphere when the budget is exceeded.
    """
    if epsilon <= 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon!r}")
    tiled_norm = spec.alpha * float(np.linalg.norm(patch.values.ravel()))
    if tiled_norm <= epsilon:
        return patch
    return Patch(patch.values * (epsilon / tiled_norm))


def bilinear_resize(values: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample of an (H, W, C) array with half-pixel centers.

    Uses the a + w*(b - a) interpolation form, which preserves constants
    exactly and is a bit-exact identity when the shape does not change.
    """
    src = np.asarray(values, dtype=np.float64)
    h, w = src.shape[:2]

    def axis_coords(n_out, n_in):
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1.0)
        lo = np.floor(pos).astype(np.intp)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    y0, y1, wy = axis_coords(out_h, h)
    x0, x1, wx = axis_coords(out_w, w)

    tl = src[np.ix_(y0, x0)]
    tr = src[np.ix_(y0, x1)]
    bl = src[np.ix_(y1, x0)]
    br = src[np.ix_(y1, x1)]
    wx = wx[None, :, None]
    wy = wy[:, None, None]
    top = tl + wx * (tr - tl)
    bot = bl + wx * (br - bl)
    return top + wy * (bot - top)


def resize_perturbation(delta: Perturbation, out_h: int, out_w: int,
                        linf_epsilon: float | None = None) -> Perturbation:
    """Bilinear resize for cross-shape evaluation.

    Pass `linf_epsilon` when the source artifact was L-inf bounded: bilinear
    output is a convex combination so the clamp is a no-op safeguard, kept so
    the budget invariant is explicit rather than implied.
    """
    if out_h < 1 or out_w < 1:
        raise ValidationError(f"output dims must be positive, got {out_h}x{out_w}")
    out = bilinear_resize(delta.values, out_h, out_w)
    if linf_epsilon is not None:
        out = np.clip(out, -linf_epsilon, linf_epsilon)
    return Perturbation(out, origin="resized")


MASK_KINDS = ("top_left", "top_right", "bottom_left", "bottom_right",
              "center", "round", "top", "bottom", "left", "right", "full")

_CORNERS = {"top_left", "top_right", "bottom_left", "bottom_right"}
_HALVES = {"top", "bottom", "left", "right"}


@dataclass(frozen=True)
class MaskRegion:
    """A named subset of the alpha x alpha tile blocks of `grid`.

    Corner and half kinds need an even alpha; center (the middle
    (alpha/2)^2 blocks) and round (its complement) need alpha divisible
    by 4 so the central block set sits symmetrically.
    """

    kind: str
    grid: TileSpec

    def __post_init__(self):
        if self.kind not in MASK_KINDS:
            raise ValidationError(f"mask kind must be one of {MASK_KINDS}, got {self.kind!r}")
        a = self.grid.alpha
        if self.kind in _CORNERS | _HALVES and a % 2 != 0:
            raise ValidationError(
                f"mask kind {self.kind!r} needs an even split ratio, got alpha={a}")
        if self.kind in ("center", "round") and (a < 4 or a % 4 != 0):
            raise ValidationError(
                f"mask kind {self.kind!r} needs alpha >= 4 divisible by 4 so a central "
                f"(alpha/2)x(alpha/2) block set exists, got alpha={a}")

    def block_mask(self) -> np.ndarray:
        """Boolean (alpha, alpha) selection over tile blocks."""
        a = self.grid.alpha
        rows = np.arange(a)[:, None]
        cols = np.arange(a)[None, :]
        half = a // 2
        if self.kind == "full":
            return np.ones((a, a), dtype=bool)
        if self.kind == "top_left":
            return (rows < half) & (cols < half)
        if self.kind == "top_right":
            return (rows < half) & (cols >= half)
        if self.kind == "bottom_left":
            return (rows >= half) & (cols < half)
        if self.kind == "bottom_right":
            return (rows >= half) & (cols >= half)
        if self.kind == "top":
            return np.broadcast_to(rows < half, (a, a)).copy()
        if self.kind == "bottom":
            return np.broadcast_to(rows >= half, (a, a)).copy()
        if self.kind == "left":
            return np.broadcast_to(cols < half, (a, a)).copy()
        if self.kind == "right":
            return np.broadcast_to(cols >= half, (a, a)).copy()
        lo, hi = a // 4, a // 4 + half
        center = (rows >= lo) & (rows < hi) & (cols >= lo) & (cols < hi)
        if self.kind == "center":
            return center
        return ~center  # round

    def pixel_mask(self) -> np.ndarray:
        """Expand the block mask to an (image_h, image_w) boolean mask."""
        return np.kron(self.block_mask(),
                       np.ones((self.grid.patch_h, self.grid.patch_w), dtype=bool))


def mask_blocks(delta: Perturbation, region: MaskRegion) -> Perturbation:
    """Zero out every entry outside the region's selected tile blocks."""
    g = region.grid
    if delta.values.shape[:2] != (g.image_h, g.image_w):
        raise ValidationError(
            f"perturbation shape {delta.values.shape[:2]} incompatible with mask grid "
            f"image {g.image_h}x{g.image_w}")
    masked = delta.values * region.pixel_mask()[:, :, None]
    return Perturbation(masked, origin="masked")


__all__ = [
    "MASK_KINDS", "MaskRegion", "bilinear_resize", "mask_blocks", "measure_norm",
    "project_l2", "project_linf", "resize_perturbation", "tile", "tile_adjoint",
]
