"""Crafting loop: step rules, oracles, budget invariants, determinism, data-free."""

import numpy as np
import pytest

from tilefool.attack import AdamMoments, CraftState, craft, craft_data_free, step
from tilefool.errors import DataError, NonFiniteLossError, ValidationError
from tilefool.losses import get_loss_head
from tilefool.tiling import measure_norm, tile, tile_adjoint
from tilefool.types import AttackConfig, NormBudget, Patch, TileSpec, new_patch

from _toys import LinearAdapter, fixture_dataset

LINF = NormBudget("inf", 10 / 255)


def toy_adapter(seed=0, hw=(4, 4), channels=1, classes=3):
    rng = np.random.default_rng(seed)
    d = hw[0] * hw[1] * channels
    return LinearAdapter(rng.normal(scale=0.8, size=(d, classes)),
                         rng.normal(scale=0.1, size=classes),
                         input_hw=hw, channels=channels)


def toy_dataset(n=12, seed=1, hw=(4, 4), channels=1):
    rng = np.random.default_rng(seed)
    return fixture_dataset(rng.uniform(0.2, 0.8, size=(n, hw[0], hw[1], channels)))


def test_epochs_zero_returns_zero_patch():
    adapter = toy_adapter()
    cfg = AttackConfig(epochs=0, batch_size=4, loss_id="ce", label_mode="clean_pred")
    patch, delta, log = craft(toy_dataset(), adapter, TileSpec(2, 4, 4), LINF, cfg)
    assert not patch.values.any()
    assert not delta.values.any()
    assert len(log) == 0


def test_dataset_smaller_than_batch_rejected():
    adapter = toy_adapter()
    cfg = AttackConfig(epochs=1, batch_size=100, loss_id="ce", label_mode="clean_pred")
    with pytest.raises(DataError, match="smaller than batch"):
        craft(toy_dataset(n=12), adapter, TileSpec(2, 4, 4), LINF, cfg)


def test_shape_mismatch_rejected():
    adapter = toy_adapter(hw=(4, 4))
    cfg = AttackConfig(epochs=1, batch_size=4, loss_id="ce", label_mode="clean_pred")
    with pytest.raises(ValidationError, match="does not\n match|does not match"):
        craft(toy_dataset(), adapter, TileSpec(2, 8, 8), LINF, cfg)


def test_single_sign_step_matches_analytic_oracle():
    """One sign-step iteration against the closed-form gradient of a linear model."""
    hw, channels, classes = (2, 2), 1, 3
    adapter = toy_adapter(seed=3, hw=hw, channels=channels, classes=classes)
    rng = np.random.default_rng(4)
    images = rng.uniform(0.25, 0.75, size=(5, 2, 2, 1))
    dataset = fixture_dataset(images)
    spec = TileSpec(2, 2, 2)  # patch is a single pixel per channel
    s = 0.004
    cfg = AttackConfig(epochs=1, batch_size=5, loss_id="ce", step_rule="sign_step",
                       step_size=s, seed=0, label_mode="clean_pred")
    patch, delta, log = craft(dataset, adapter, spec, LINF, cfg)

    # oracle: labels are the clean argmax; untargeted ce head minimizes -CE,
    # whose logits gradient is -(softmax - onehot)/m; map through W^T, sum over
    # the batch, block-sum onto the patch, then take v = clamp(-s * sign(g), eps)
    logits = images.reshape(5, -1) @ adapter.weight + adapter.bias
    labels = logits.argmax(axis=1)
    z = logits - logits.max(axis=1, keepdims=True)
    softmax = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    dlogits = softmax.copy()
    dlogits[np.arange(5), labels] -= 1.0
    dlogits = -dlogits / 5
    g_images = (dlogits @ adapter.weight.T).reshape(5, 2, 2, 1)
    g_patch = tile_adjoint(g_images.sum(axis=0), spec)
    expected = np.clip(-s * np.sign(g_patch), -LINF.epsilon, LINF.epsilon)
    assert np.allclose(patch.values, expected, atol=1e-12)
    assert len(log) == 1


def test_adam_two_step_scalar_trace():
    """Two adam updates on a one-element patch against the hand recursion."""
    spec = TileSpec(1, 1, 1)
    budget = NormBudget("inf", 1.0)  # loose: projection inactive
    cfg = AttackConfig(epochs=1, batch_size=1, loss_id="ce", step_rule="adam",
                       step_size=0.1)
    state = CraftState(patch=new_patch(spec, 1), spec=spec, budget=budget, config=cfg)

    g1, g2 = 0.3, -0.2
    state = step(state, np.full((1, 1, 1), g1))
    state = step(state, np.full((1, 1, 1), g2))

    b1, b2, eps = 0.9, 0.999, 1e-8
    v = 0.0
    m1 = b1 * 0 + (1 - b1) * g1
    s1 = b2 * 0 + (1 - b2) * g1 * g1
    v -= 0.1 * (m1 / (1 - b1)) / (np.sqrt(s1 / (1 - b2)) + eps)
    m2 = b1 * m1 + (1 - b1) * g2
    s2 = b2 * s1 + (1 - b2) * g2 * g2
    v -= 0.1 * (m2 / (1 - b1 ** 2)) / (np.sqrt(s2 / (1 - b2 ** 2)) + eps)
    assert state.patch.values[0, 0, 0] == pytest.approx(v, rel=1e-12)
    assert state.optimizer_state.t == 2


def test_zero_gradient_leaves_patch_unchanged():
    spec = TileSpec(2, 4, 4)
    for rule in ("sign_step", "adam"):
        cfg = AttackConfig(epochs=1, batch_size=1, loss_id="ce", step_rule=rule)
        start = Patch(np.full((2, 2, 1), 0.01))
        state = CraftState(patch=start, spec=spec, budget=LINF, config=cfg)
        out = step(state, np.zeros((2, 2, 1)))
        assert np.array_equal(out.patch.values, start.values)


def test_non_finite_gradient_aborts():
    spec = TileSpec(2, 4, 4)
    cfg = AttackConfig(epochs=1, batch_size=1, loss_id="ce")
    state = CraftState(patch=new_patch(spec, 1), spec=spec, budget=LINF, config=cfg)
    g = np.zeros((2, 2, 1))
    g[0, 0, 0] = np.nan
    with pytest.raises(NonFiniteLossError):
        step(state, g)


def test_gradient_shape_mismatch_rejected():
    spec = TileSpec(2, 4, 4)
    cfg = AttackConfig(epochs=1, batch_size=1, loss_id="ce")
    state = CraftState(patch=new_patch(spec, 1), spec=spec, budget=LINF, config=cfg)
    with pytest.raises(ValidationError):
        step(state, np.zeros((3, 3, 1)))


def test_budget_invariant_every_iteration_linf_and_l2():
    adapter = toy_adapter(seed=5)
    dataset = toy_dataset(n=16, seed=6)
    for budget in (NormBudget("inf", 0.02), NormBudget("2", 0.15)):
        cfg = AttackConfig(epochs=4, batch_size=4, loss_id="ce", step_size=0.05,
                           label_mode="clean_pred")
        patch, delta, log = craft(dataset, adapter, TileSpec(2, 4, 4), budget, cfg)
        assert len(log) == 16  # 4 epochs x 4 iterations
        slack = 0.0 if budget.is_linf else 1e-6
        assert all(rec.norm <= budget.epsilon + slack for rec in log.records)
        assert measure_norm(delta, budget) <= budget.epsilon + slack


def test_determinism_bit_identical():
    adapter = toy_adapter(seed=7)
    dataset = toy_dataset(n=12, seed=8)
    cfg = AttackConfig(epochs=3, batch_size=4, loss_id="ce", seed=123,
                       label_mode="clean_pred")
    p1, d1, _ = craft(dataset, adapter, TileSpec(2, 4, 4), LINF, cfg)
    p2, d2, _ = craft(dataset, adapter, TileSpec(2, 4, 4), LINF, cfg)
    assert p1.values.tobytes() == p2.values.tobytes()
    assert d1.values.tobytes() == d2.values.tobytes()


def test_gradient_routing_through_tile():
    """Perturbing one patch coordinate moves all alpha^2 image coordinates:
    the craft-loop gradient matches finite differences of the tiled objective."""
    adapter = toy_adapter(seed=9)
    rng = np.random.default_rng(10)
    images = rng.uniform(0.3, 0.7, size=(6, 4, 4, 1))
    spec = TileSpec(2, 4, 4)
    head = get_loss_head("ce")
    labels = adapter.forward(images).argmax(axis=1)

    def objective(v_values):
        composed = np.clip(images + tile(Patch(v_values), spec).values, 0, 1)
        value, _, _ = adapter.value_and_input_grad(
            composed, lambda z: head.value_and_grad(None, z, labels, None, 0.0))
        return value

    v0 = rng.uniform(-0.01, 0.01, size=(2, 2, 1))
    composed = np.clip(images + tile(Patch(v0), spec).values, 0, 1)
    _, _, g_images = adapter.value_and_input_grad(
        composed, lambda z: head.value_and_grad(None, z, labels, None, 0.0))
    g_patch = tile_adjoint(g_images.sum(axis=0), spec)

    for idx in [(0, 0, 0), (0, 1, 0), (1, 0, 0), (1, 1, 0)]:
        h = 1e-6
        vp = v0.copy(); vp[idx] += h
        vm = v0.copy(); vm[idx] -= h
        fd = (objective(vp) - objective(vm)) / (2 * h)
        assert fd == pytest.approx(g_patch[idx], rel=1e-3, abs=1e-10)


def test_craft_data_free_initial_cosine_is_exactly_one():
    adapter = toy_adapter(seed=11)
    cfg = AttackConfig(epochs=1, batch_size=8, loss_id="cos_sim", data_free=True,
                       surrogate_per_epoch=16, seed=0)
    patch, delta, log = craft_data_free(adapter, TileSpec(2, 4, 4), LINF, cfg)
    assert log.records[0].loss == 1.0
    assert len(log) == 2
    assert measure_norm(delta, LINF) <= LINF.epsilon


def test_craft_data_free_constant_surrogate_gradients_identical_across_batch():
    adapter = toy_adapter(seed=12)
    batch = np.full((6, 4, 4, 1), 0.5)
    clean_logits = adapter.forward(batch)
    head = get_loss_head("cos_sim")
    delta = np.full((4, 4, 1), 0.01)
    _, _, g = adapter.value_and_input_grad(
        np.clip(batch + delta, 0, 1),
        lambda z: head.value_and_grad(clean_logits, z, None, None, 0.0))
    for i in range(1, 6):
        assert np.allclose(g[i], g[0], atol=1e-15)


def test_craft_data_free_requires_flag_and_vice_versa():
    adapter = toy_adapter()
    spec = TileSpec(2, 4, 4)
    with pytest.raises(ValidationError):
        craft_data_free(adapter, spec, LINF,
                        AttackConfig(epochs=1, batch_size=2, loss_id="cos_sim"))
    with pytest.raises(ValidationError):
        craft(toy_dataset(), adapter, spec, LINF,
              AttackConfig(epochs=1, batch_size=2, loss_id="cos_sim", data_free=True))


def test_craft_targeted_label_validated_against_classifier():
    adapter = toy_adapter(classes=3)
    cfg = AttackConfig(epochs=1, batch_size=4, loss_id="ce", target_label=7,
                       label_mode="clean_pred")
    with pytest.raises(ValidationError, match="target label"):
        craft(toy_dataset(), adapter, TileSpec(2, 4, 4), LINF, cfg)


def test_craft_targeted_moves_predictions_toward_target():
    adapter = toy_adapter(seed=13)
    dataset = toy_dataset(n=20, seed=14)
    target = 2
    cfg = AttackConfig(epochs=10, batch_size=10, loss_id="ce", target_label=target,
                       step_size=0.02, label_mode="clean_pred")
    _, delta, _ = craft(dataset, adapter, TileSpec(1, 4, 4), LINF, cfg)

    def mean_target_prob(images):
        logits = adapter.forward(images)
        z = logits - logits.max(axis=1, keepdims=True)
        p = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
        return p[:, target].mean()

    before = mean_target_prob(dataset.images)
    after = mean_target_prob(np.clip(dataset.images + delta.values, 0, 1))
    assert after > before


def test_no_clamp_mode_runs_and_respects_budget():
    adapter = toy_adapter(seed=15)
    dataset = toy_dataset(n=8, seed=16)
    cfg = AttackConfig(epochs=2, batch_size=4, loss_id="ce", clamp_inputs=False,
                       label_mode="clean_pred")
    _, delta, log = craft(dataset, adapter, TileSpec(2, 4, 4), LINF, cfg)
    assert len(log) == 4
    assert measure_norm(delta, LINF) <= LINF.epsilon


def test_df_margin_crafting_drives_margin_down():
    adapter = toy_adapter(seed=17)
    dataset = toy_dataset(n=20, seed=18)
    cfg = AttackConfig(epochs=8, batch_size=10, loss_id="df_margin", kappa=0.0,
                       step_size=0.02, label_mode="clean_pred")
    _, delta, log = craft(dataset, adapter, TileSpec(2, 4, 4), LINF, cfg)
    assert log.records[-1].loss < log.records[0].loss


def test_craft_log_jsonl_round_trip(tmp_path):
    import json

    adapter = toy_adapter(seed=19)
    dataset = toy_dataset(n=8, seed=20)
    cfg = AttackConfig(epochs=2, batch_size=4, loss_id="ce", label_mode="clean_pred")
    _, _, log = craft(dataset, adapter, TileSpec(2, 4, 4), LINF, cfg)
    path = tmp_path / "log.jsonl"
    log.write_jsonl(path)
    lines = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(lines) == len(log)
    assert set(lines[0]) == {"epoch", "iteration", "loss", "norm", "wall_ms"}
    assert [rec["loss"] for rec in lines] == [r.loss for r in log.records]
