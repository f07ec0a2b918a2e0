"""Fooling-ratio metrics, transfer matrix, position ablation, sweeps."""

import numpy as np
import pytest

from tilefool.artifact import Artifact, save_artifact, load_artifact
from tilefool.errors import DataError, ValidationError
from tilefool.evaluation import (data_efficiency_sweep, fooling_ratio,
                                 position_ablation, read_jsonl, render_reports_table,
                                 targeted_fooling_ratio, transfer_sweep, write_jsonl)
from tilefool.tiling import MaskRegion, tile
from tilefool.types import (AttackConfig, DatasetSpec, NormBudget, Patch,
                            Perturbation, TileSpec)

from _toys import (LinearAdapter, PixelKeyAdapter, SaturationTargetAdapter,
                   fixture_dataset)


def test_zero_perturbation_gives_zero_fr_exactly():
    rng = np.random.default_rng(0)
    adapter = LinearAdapter(rng.normal(size=(4, 3)), input_hw=(2, 2))
    testset = fixture_dataset(rng.uniform(0.1, 0.9, size=(7, 2, 2, 1)))
    delta = Perturbation(np.zeros((2, 2, 1)), origin="tiled")
    report = fooling_ratio(delta, adapter, testset)
    assert report.fooling_ratio == 0.0
    assert report.n_evaluated == 7
    tr = targeted_fooling_ratio(delta, adapter, testset, 1)
    assert tr.targeted_fooling_ratio == 0.0


def test_flip_all_stub_gives_fr_one():
    adapter = PixelKeyAdapter(input_hw=(2, 2))
    rng = np.random.default_rng(1)
    testset = fixture_dataset(rng.uniform(0.2, 0.8, size=(5, 2, 2, 1)))
    delta = Perturbation(np.full((2, 2, 1), 0.02), origin="loaded")
    report = fooling_ratio(delta, adapter, testset)
    assert report.fooling_ratio == 1.0


def test_three_sample_enumeration_fixture():
    """Hand-built linear case: exactly 2 of 3 predictions flip, 1 lands on target."""
    weight = np.array([[1.0, 0.0, 0.0],
                       [0.0, 1.0, 0.0]])
    bias = np.array([0.0, 0.0, 0.35])
    adapter = LinearAdapter(weight, bias, input_hw=(1, 2), channels=1)
    images = np.array([[[[0.9], [0.1]]],
                       [[[0.1], [0.9]]],
                       [[[0.5], [0.45]]]])
    delta_values = np.array([[[-0.6], [0.2]]])

    # independent enumeration with plain loops
    expected_clean, expected_adv = [], []
    for img in images:
        logits = [img[0, 0, 0], img[0, 1, 0], 0.35]
        expected_clean.append(int(np.argmax(logits)))
        pert = np.clip(img + delta_values, 0, 1)
        logits = [pert[0, 0, 0], pert[0, 1, 0], 0.35]
        expected_adv.append(int(np.argmax(logits)))
    flips = sum(c != a for c, a in zip(expected_clean, expected_adv))
    hits = sum(c != a and a == 2 for c, a in zip(expected_clean, expected_adv))
    assert flips == 2 and hits == 1  # the fixture is what it claims to be

    testset = fixture_dataset(images)
    delta = Perturbation(delta_values, origin="loaded")
    report = targeted_fooling_ratio(delta, adapter, testset, target_label=2)
    assert report.fooling_ratio == 2 / 3
    assert report.targeted_fooling_ratio == 1 / 3
    assert np.array_equal(report.clean_labels, expected_clean)
    assert np.array_equal(report.adv_labels, expected_adv)


def test_targeted_extreme_stub():
    adapter = SaturationTargetAdapter(target=4, input_hw=(2, 2))
    rng = np.random.default_rng(2)
    images = rng.uniform(0.1, 0.9, size=(6, 2, 2, 1))
    testset = fixture_dataset(images)
    delta = Perturbation(np.full((2, 2, 1), 0.9), origin="loaded")
    report = targeted_fooling_ratio(delta, adapter, testset, target_label=4)
    assert report.fooling_ratio == 1.0
    assert report.targeted_fooling_ratio == 1.0


def test_tfr_never_exceeds_fr_randomized():
    rng = np.random.default_rng(3)
    for _ in range(20):
        adapter = LinearAdapter(rng.normal(size=(4, 4)), input_hw=(2, 2))
        testset = fixture_dataset(rng.uniform(0, 1, size=(9, 2, 2, 1)))
        delta = Perturbation(rng.uniform(-0.3, 0.3, size=(2, 2, 1)), origin="loaded")
        report = targeted_fooling_ratio(delta, adapter, testset,
                                        int(rng.integers(0, 4)))
        assert report.targeted_fooling_ratio <= report.fooling_ratio


def test_fr_invariant_to_testset_ordering():
    rng = np.random.default_rng(4)
    adapter = LinearAdapter(rng.normal(size=(4, 3)), input_hw=(2, 2))
    images = rng.uniform(0, 1, size=(10, 2, 2, 1))
    delta = Perturbation(rng.uniform(-0.4, 0.4, size=(2, 2, 1)), origin="loaded")
    r1 = fooling_ratio(delta, adapter, fixture_dataset(images))
    perm = rng.permutation(10)
    r2 = fooling_ratio(delta, adapter, fixture_dataset(images[perm]))
    assert r1.fooling_ratio == r2.fooling_ratio


def test_empty_testset_rejected():
    rng = np.random.default_rng(5)
    adapter = LinearAdapter(rng.normal(size=(4, 3)), input_hw=(2, 2))
    delta = Perturbation(np.zeros((2, 2, 1)), origin="loaded")
    with pytest.raises((DataError, ValidationError)):
        fooling_ratio(delta, adapter, fixture_dataset(np.zeros((0, 2, 2, 1))))


def test_report_jsonl_reaggregation_bit_exact(tmp_path):
    rng = np.random.default_rng(6)
    adapter = LinearAdapter(rng.normal(size=(4, 3)), input_hw=(2, 2))
    testset = fixture_dataset(rng.uniform(0, 1, size=(8, 2, 2, 1)))
    delta = Perturbation(rng.uniform(-0.4, 0.4, size=(2, 2, 1)), origin="loaded")
    report = fooling_ratio(delta, adapter, testset)
    path = tmp_path / "r.jsonl"
    write_jsonl(path, [report.to_record()])
    rec = read_jsonl(path)[0]
    flips = np.asarray(rec["flips"], dtype=bool)
    assert flips.sum() / rec["n_evaluated"] == report.fooling_ratio
    recomputed = (np.asarray(rec["clean_labels"]) != np.asarray(rec["adv_labels"]))
    assert np.array_equal(recomputed, flips)


def _small_artifact(tmp_path, name, alpha=2, eps=0.05, seed=0, hw=4):
    rng = np.random.default_rng(seed)
    spec = TileSpec(alpha, hw, hw)
    patch = Patch(rng.uniform(-eps, eps, size=(hw // alpha, hw // alpha, 3)))
    path = tmp_path / name
    save_artifact(path, patch, spec, NormBudget("inf", eps),
                  {"source_model": f"toy{seed}", "seed": seed, "loss": "ce"})
    return path


class _Synth4Adapter(LinearAdapter):
    """Linear adapter on 4x4x3 inputs, registered as a zoo plug-in for sweeps."""


def test_transfer_sweep_counting_and_consistency(tmp_path, monkeypatch):
    from tilefool.modelzoo import adapters as zoo

    rng = np.random.default_rng(7)
    made = {}

    def make_adapter(model_id, seed):
        def factory():
            if model_id not in made:
                r = np.random.default_rng(seed)
                made[model_id] = _Synth4Adapter(
                    r.normal(size=(48, 5)), input_hw=(4, 4), channels=3,
                    model_id=model_id)
            return made[model_id]
        return factory

    monkeypatch.setitem(zoo._REGISTRY, "toy_a", make_adapter("toy_a", 1))
    monkeypatch.setitem(zoo._REGISTRY, "toy_b", make_adapter("toy_b", 2))

    # synth10 resized to 4x4 serves as the shared testset source
    testset_spec = DatasetSpec("synth10", 10, 4, 2, "validation", 99)
    artifacts = [_small_artifact(tmp_path, f"a{i}.uap", seed=i) for i in range(6)]
    matrix = transfer_sweep(artifacts, ["toy_a", "toy_b"], testset_spec)

    assert len(matrix.cells) == 12  # 6 artifacts x 2 targets
    assert all(cell.error is None for cell in matrix.cells.values())

    # single artifact on one model equals a direct fooling_ratio call
    art = load_artifact(artifacts[0])
    from tilefool.modelzoo.data import sample_dataset
    adapter = zoo._REGISTRY["toy_a"]()
    testset = sample_dataset("synth10", 4, 2, "validation", 99, image_hw=(4, 4))
    direct = fooling_ratio(art.perturbation, adapter, testset,
                           uap_metadata=art.metadata)
    cell = matrix.cell(matrix.sources[0], "toy_a")
    assert cell.report.fooling_ratio == direct.fooling_ratio

    rendered = matrix.render()
    assert "toy_a" in rendered and "toy_b" in rendered


def test_transfer_sweep_resizes_mismatched_artifacts(tmp_path, monkeypatch):
    from tilefool.modelzoo import adapters as zoo

    rng = np.random.default_rng(8)
    adapter = _Synth4Adapter(rng.normal(size=(48, 5)), input_hw=(4, 4), channels=3,
                             model_id="toy_c")
    monkeypatch.setitem(zoo._REGISTRY, "toy_c", lambda: adapter)
    big = _small_artifact(tmp_path, "big.uap", alpha=2, hw=8)
    matrix = transfer_sweep([big], ["toy_c"],
                            DatasetSpec("synth10", 10, 3, 2, "validation", 5))
    cell = matrix.cells[(matrix.sources[0], "toy_c")]
    assert cell.error is None
    assert cell.report.uap_metadata.get("resize_method") == "bilinear"


def test_transfer_sweep_per_cell_failure_recorded(tmp_path):
    artifacts = [_small_artifact(tmp_path, "x.uap", seed=3)]
    matrix = transfer_sweep(artifacts, ["no_such_model"],
                            DatasetSpec("synth10", 10, 3, 2, "validation", 5))
    cell = matrix.cells[(matrix.sources[0], "no_such_model")]
    assert cell.error is not None and "no_such_model" in cell.error


def test_position_ablation_full_equals_unmasked():
    rng = np.random.default_rng(9)
    adapter = LinearAdapter(rng.normal(size=(48, 5)), input_hw=(4, 4), channels=3)
    testset = fixture_dataset(rng.uniform(0, 1, size=(10, 4, 4, 3)))
    spec = TileSpec(2, 4, 4)
    delta = tile(Patch(rng.uniform(-0.2, 0.2, size=(2, 2, 3))), spec)
    regions = [MaskRegion(kind, spec) for kind in
               ("full", "top_left", "top_right", "bottom_left", "bottom_right")]
    reports = position_ablation(delta, adapter, testset, regions)
    assert len(reports) == 5
    unmasked = fooling_ratio(delta, adapter, testset)
    assert reports[0].fooling_ratio == unmasked.fooling_ratio
    assert reports[0].uap_metadata["mask_region"] == "full"
    table = render_reports_table(reports)
    assert "top_left" in table


def test_data_efficiency_sweep_shapes_and_errors():
    rng = np.random.default_rng(10)
    adapter = LinearAdapter(rng.normal(size=(48, 10)), input_hw=(4, 4), channels=3,
                            model_id="sweep_toy")
    budget = NormBudget("inf", 0.05)
    config = AttackConfig(epochs=1, batch_size=2, loss_id="ce", seed=0,
                          label_mode="clean_pred")
    testset = fixture_dataset(rng.uniform(0, 1, size=(8, 4, 4, 3)))

    grid = [(2, 1), (2, 2), (30, 1)]  # the 30-class cell is infeasible on synth10
    table = data_efficiency_sweep(grid, [1, 2], adapter, budget, config,
                                  "synth10", testset, seeds=[0, 1, 2])
    assert len(table.cells) == len(grid) * 2
    ok = table.cell(2, 2, 1)
    assert ok.error is None and len(ok.fooling_ratios) == 3
    bad = table.cell(30, 1, 1)
    assert bad.error is not None
    rendered = table.render()
    assert "ERR" in rendered and "(2,2)" in rendered

    degenerate = data_efficiency_sweep([(1, 1)], [1], adapter, budget,
                                       AttackConfig(epochs=1, batch_size=1,
                                                    loss_id="ce", seed=0,
                                                    label_mode="clean_pred"),
                                       "synth10", testset)
    assert len(degenerate.cells) == 1
