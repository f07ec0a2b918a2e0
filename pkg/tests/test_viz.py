"""Display rendering: min-max rescale, block structure, sample pairs."""

import json

import numpy as np
from PIL import Image

from tilefool.tiling import tile
from tilefool.types import Patch, Perturbation, TileSpec
from tilefool.viz import perturbation_to_display, render_visuals


def test_minmax_rescale_range_and_sidecar():
    rng = np.random.default_rng(0)
    values = rng.uniform(-0.04, 0.04, size=(16, 16, 3))
    img, sidecar = perturbation_to_display(values)
    assert img.dtype == np.uint8
    assert img.min() == 0 and img.max() == 255  # min-max stretch hits both ends
    assert sidecar["rescale"] == "minmax"
    assert sidecar["min"] == values.min() and sidecar["max"] == values.max()


def test_zero_perturbation_renders_mid_gray():
    img, sidecar = perturbation_to_display(np.zeros((8, 8, 3)))
    assert (img == 128).all()
    assert sidecar["min"] == sidecar["max"] == 0.0


def test_tiled_artifact_renders_identical_blocks(tmp_path):
    rng = np.random.default_rng(1)
    spec = TileSpec(8, 32, 32)
    delta = tile(Patch(rng.uniform(-0.05, 0.05, size=(4, 4, 3))), spec)
    written = render_visuals(delta, tmp_path)
    arr = np.asarray(Image.open(tmp_path / "uap.png"))
    blocks = arr.reshape(8, 4, 8, 4, 3)
    for i in range(8):
        for j in range(8):
            assert np.array_equal(blocks[i, :, j], blocks[0, :, 0])
    sidecar = json.loads((tmp_path / "uap.png.json").read_text())
    assert sidecar["rescale"] == "minmax"
    assert (tmp_path / "uap.png") in written


def test_sample_pairs_written_with_valid_range(tmp_path):
    rng = np.random.default_rng(2)
    delta = Perturbation(rng.uniform(-0.1, 0.1, size=(8, 8, 3)), origin="loaded")
    images = rng.uniform(0, 1, size=(3, 8, 8, 3))
    written = render_visuals(delta, tmp_path, images=images, max_pairs=2)
    pair_files = sorted(p.name for p in tmp_path.glob("sample*"))
    assert pair_files == ["sample00_clean.png", "sample00_perturbed.png",
                          "sample01_clean.png", "sample01_perturbed.png"]
    for name in pair_files:
        arr = np.asarray(Image.open(tmp_path / name))
        assert arr.dtype == np.uint8
        assert arr.min() >= 0 and arr.max() <= 255
    assert len(written) == 6  # uap.png + sidecar + 4 pair images


def test_single_channel_rendering(tmp_path):
    delta = Perturbation(np.linspace(-1, 1, 64).reshape(8, 8, 1), origin="loaded")
    render_visuals(delta, tmp_path)
    arr = np.asarray(Image.open(tmp_path / "uap.png"))
    assert arr.shape == (8, 8)
