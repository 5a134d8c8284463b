import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from freqmask.masks import (Mask, MaskFormatError, MaskLearnConfig, base_losses, complementary_mask,
                            filtered_accuracy, learn_mask_global, learn_mask_single,
                            learn_masks_per_image, mask_apply, mask_objective,
                            suppressed_fraction)
from freqmask.model import Checkpoint, small_cnn
from freqmask.spectral import conjugate_flip

from conftest import numeric_grad


def symmetric(rng, shape):
    g = rng.normal(size=shape)
    return (g + conjugate_flip(g)) / 2


def test_identity_and_zero_masks(rng):
    z = rng.normal(size=(3, 16, 16))
    assert_allclose(mask_apply(z, np.ones((16, 16))), z, atol=1e-10)
    assert_array_equal(mask_apply(z, np.zeros((16, 16))), 0)


def test_dc_mask_gives_image_mean(rng):
    z = rng.normal(size=(16, 16))
    m = np.zeros((16, 16))
    m[0, 0] = 1
    assert_allclose(mask_apply(z, m), np.full((16, 16), z.mean()), atol=1e-12)


def test_mask_apply_is_linear_in_mask(rng):
    z = rng.normal(size=(16, 16))
    m1, m2 = symmetric(rng, (16, 16)), symmetric(rng, (16, 16))
    lhs = mask_apply(z, 2.5 * m1 - 0.7 * m2)
    assert_allclose(lhs, 2.5 * mask_apply(z, m1) - 0.7 * mask_apply(z, m2), atol=1e-10)


def test_mask_apply_size_mismatch():
    with pytest.raises(ValueError):
        mask_apply(np.zeros((8, 8)), np.ones((16, 16)))


def test_objective_at_identity_single_sample():
    arch = small_cnn(5)
    ck = Checkpoint(arch, arch.init_weights(0))
    z = np.random.default_rng(0).normal(size=(1, 32, 32))
    obj = mask_objective(ck, np.ones((32, 32)), z, np.array([2]), lam=1e-3, p=1)
    assert obj.value == pytest.approx(2.024, abs=1e-12)


def test_objective_equals_batch_size_without_penalty(toy_ckpt, rng):
    z = rng.normal(size=(7, 8, 8))
    obj = mask_objective(toy_ckpt, np.ones((8, 8)), z, rng.integers(0, 3, 7), lam=0.0)
    assert obj.value == pytest.approx(7.0, abs=1e-12)
    assert_allclose(obj.grad, 0, atol=1e-12)


@pytest.mark.parametrize("p", [1, 2])
def test_objective_gradient_matches_finite_differences(toy_ckpt, rng, p):
    z = rng.normal(size=(4, 8, 8))
    y = rng.integers(0, 3, 4)
    m = 1 + 0.3 * symmetric(rng, (8, 8))
    base = base_losses(toy_ckpt, z, y)
    obj = mask_objective(toy_ckpt, m, z, y, lam=1e-2, p=p, base=base)

    def f(v):
        return mask_objective(toy_ckpt, v, z, y, lam=1e-2, p=p, base=base).value

    coords = list(rng.choice(64, 25, replace=False))
    num = numeric_grad(f, m, 1e-6, coords).ravel()[coords]
    ana = obj.grad.ravel()[coords]
    assert np.max(np.abs(ana - num) / np.maximum(np.abs(num), 1e-6)) < 1e-4


def test_per_image_objective_separates(toy_ckpt, rng):
    z = rng.normal(size=(3, 8, 8))
    y = np.array([0, 1, 2])
    stack = np.stack([1 + 0.2 * symmetric(rng, (8, 8)) for _ in range(3)])
    joint = mask_objective(toy_ckpt, stack, z, y)
    for i in range(3):
        single = mask_objective(toy_ckpt, stack[i], z[i:i + 1], y[i:i + 1])
        assert joint.per_mask[i] == pytest.approx(single.value, rel=1e-12)
        assert_allclose(joint.grad[i], single.grad, atol=1e-12)


def test_exponent_clamp_is_flagged(toy_ckpt, rng):
    z = 50 * rng.normal(size=(2, 8, 8))
    y = np.array([0, 1])
    obj = mask_objective(toy_ckpt, np.zeros((8, 8)), z, y, exp_clamp=1e-3)
    assert obj.clamped and np.isfinite(obj.value)


def test_complementary_mask_examples():
    assert_array_equal(complementary_mask(np.array([[0.0, 0.5], [0.5, 0.0]])), [[1, 0], [0, 1]])
    assert_array_equal(complementary_mask(np.ones((4, 4))), 0)
    m = np.array([[1e-9, -0.2], [3.0, 2e-8]])
    mc = complementary_mask(m)
    assert_array_equal(mc, [[1, 0], [0, 0]])  # magnitude threshold: -0.2 is kept
    assert np.max(np.abs(mc * m)) < 1e-8 * np.max(m)


def _toy_data(ck, rng, n=6):
    z = rng.normal(size=(n, 8, 8))
    return z, ck.predict(z)  # labels = predictions, so every image is classified correctly


def test_global_mask_without_penalty_stays_at_ones(toy_ckpt, rng):
    x, y = _toy_data(toy_ckpt, rng)
    m = learn_mask_global(toy_ckpt, x, y, MaskLearnConfig(lam=0.0, max_iter=30))
    assert_array_equal(m.values, 1.0)
    assert m.metadata["image_id"] == "global"


def test_global_mask_sparsifies_and_keeps_symmetry(toy_ckpt, rng):
    x, y = _toy_data(toy_ckpt, rng)
    cfg = MaskLearnConfig(lam=1e-2, lr=1e-2, max_iter=300)
    m = learn_mask_global(toy_ckpt, x, y, cfg)
    assert np.abs(m.values).sum() < 64
    assert m.is_symmetric()
    best = m.trace[:, 2]
    assert np.all(np.diff(best) <= 0)  # best-so-far never increases
    assert filtered_accuracy(toy_ckpt, x, y, m.values) == 1.0


def test_minibatch_global_mask_is_seeded(toy_ckpt, rng):
    x, y = _toy_data(toy_ckpt, rng, 10)
    cfg = MaskLearnConfig(lam=1e-2, lr=1e-2, max_iter=40, batch_size=4, seed=3)
    a = learn_mask_global(toy_ckpt, x, y, cfg)
    b = learn_mask_global(toy_ckpt, x, y, cfg)
    assert_array_equal(a.values, b.values)


def test_single_image_masks_sparse_invariant_deterministic(toy_ckpt, rng):
    x, y = _toy_data(toy_ckpt, rng, 4)
    cfg = MaskLearnConfig(lr=1e-2, max_iter=600)
    masks, skipped = learn_masks_per_image(toy_ckpt, x, y, [10, 11, 12, 13], cfg)
    assert skipped == [] and sorted(masks) == [10, 11, 12, 13]
    again, _ = learn_masks_per_image(toy_ckpt, x, y, [10, 11, 12, 13], cfg)
    for k in masks:
        assert_array_equal(masks[k].values, again[k].values)
        assert masks[k].is_symmetric()
        assert masks[k].metadata["label"] == str(int(y[k - 10]))
    stack = np.stack([masks[k].values for k in sorted(masks)])
    assert suppressed_fraction(stack) > 0.5
    xbar = mask_apply(toy_ckpt.normalize(x), stack)
    assert_array_equal(toy_ckpt.predict(xbar), y)


def test_stacked_masks_equal_separate_runs(toy_ckpt, rng):
    x, y = _toy_data(toy_ckpt, rng, 3)
    cfg = MaskLearnConfig(lr=1e-2, max_iter=120)
    masks, _ = learn_masks_per_image(toy_ckpt, x, y, [0, 1, 2], cfg)
    for i in range(3):
        alone = learn_mask_single(toy_ckpt, x[i], int(y[i]), cfg, image_id=i)
        assert_allclose(alone.values, masks[i].values, atol=1e-12)


def test_misclassified_image_is_skipped(toy_ckpt, rng):
    x, y = _toy_data(toy_ckpt, rng, 3)
    wrong = (y + 1) % 3
    assert learn_mask_single(toy_ckpt, x[0], int(wrong[0])) is None
    masks, skipped = learn_masks_per_image(toy_ckpt, x, np.array([wrong[0], y[1], y[2]]), [5, 6, 7],
                                           MaskLearnConfig(max_iter=5))
    assert skipped == [5] and sorted(masks) == [6, 7]


def test_config_validation():
    with pytest.raises(ValueError):
        MaskLearnConfig(lam=-1)
    with pytest.raises(ValueError):
        MaskLearnConfig(p=3)


def test_mask_file_round_trip(tmp_path, rng):
    m = Mask(symmetric(rng, (8, 8)), {"lambda": "0.001", "image_id": "global"})
    p = tmp_path / "m.smsk"
    m.save(p)
    back = Mask.load(p)
    assert_array_equal(back.values, m.values)
    assert back.metadata == m.metadata
    raw = p.read_bytes()
    assert raw[:4] == b"SMSK" and int.from_bytes(raw[5:9], "little") == 8
    with pytest.raises(MaskFormatError):
        Mask.from_bytes(b"JUNK" + raw[4:])
    with pytest.raises(MaskFormatError):
        Mask.from_bytes(raw[:40])


def test_mask_rejects_non_finite():
    with pytest.raises(ValueError):
        Mask(np.full((4, 4), np.nan))
