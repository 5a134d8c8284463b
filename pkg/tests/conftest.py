import os
import time

import numpy as np
import pytest

from freqmask.data import AugmentPolicy, generate_synthetic
from freqmask.masks import MaskLearnConfig, learn_mask_global, learn_masks_per_image
from freqmask.model import Checkpoint, toy_cnn
from freqmask.training import TrainConfig, pgd_attack, train


def numeric_grad(f, x, eps=1e-6, coords=None):
    """Central differences of scalar f at array x (all coords, or a list of flat indices)."""
    x = np.array(x, dtype=np.float64)
    flat = x.ravel()
    idx = range(flat.size) if coords is None else coords
    out = np.zeros(flat.size)
    for i in idx:
        old = flat[i]
        flat[i] = old + eps
        fp = f(x)
        flat[i] = old - eps
        fm = f(x)
        flat[i] = old
        out[i] = (fp - fm) / (2 * eps)
    return out.reshape(x.shape)


@pytest.fixture
def toy_ckpt():
    arch = toy_cnn(3, 8)
    return Checkpoint(arch, arch.init_weights(3), {"mean": "0.0", "std": "1.0"})


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, repeated in the terminal summary so the
# results are visible without -s
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


# ---------------------------------------------------------------- session pipeline
# Trained models and learned masks shared by the acceptance and pipeline tests.
# Set FREQMASK_ACCEPT_N to learn per-image masks on fewer validation images.

PER_IMAGE_N = int(os.environ.get("FREQMASK_ACCEPT_N", "300"))
VANILLA_CFG = TrainConfig(epochs=20, seed=0)
ADV_CFG = TrainConfig(seed=0, augment=AugmentPolicy("adversarial"))
MASK_CFG = MaskLearnConfig(lr=1e-2)


@pytest.fixture(scope="session")
def split():
    return generate_synthetic(5, 200, 0)


@pytest.fixture(scope="session")
def vanilla(split):
    t0 = time.perf_counter()
    ck = train(split, VANILLA_CFG)
    ck.train_seconds = time.perf_counter() - t0
    return ck


@pytest.fixture(scope="session")
def robust(split):
    t0 = time.perf_counter()
    ck = train(split, ADV_CFG)
    ck.train_seconds = time.perf_counter() - t0
    return ck


@pytest.fixture(scope="session")
def attacked(split, vanilla):
    """Validation images attacked against the vanilla model."""
    return pgd_attack(vanilla, split.val_x, split.val_y, 0.1, 0.02, 10)


@pytest.fixture(scope="session")
def masks_n(split, vanilla):
    n = PER_IMAGE_N
    t0 = time.perf_counter()
    masks, skipped = learn_masks_per_image(vanilla, split.val_x[:n], split.val_y[:n], split.val_ids[:n], MASK_CFG)
    return masks, skipped, time.perf_counter() - t0


@pytest.fixture(scope="session")
def masks_a(split, robust, attacked):
    n = PER_IMAGE_N
    t0 = time.perf_counter()
    masks, skipped = learn_masks_per_image(robust, attacked[:n], split.val_y[:n], split.val_ids[:n], MASK_CFG)
    return masks, skipped, time.perf_counter() - t0


@pytest.fixture(scope="session")
def global_mask(split, vanilla):
    t0 = time.perf_counter()
    mask = learn_mask_global(vanilla, split.val_x, split.val_y, MASK_CFG)
    return mask, time.perf_counter() - t0
