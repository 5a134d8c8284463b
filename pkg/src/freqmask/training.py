"""Training with a one-cycle schedule, PGD attacks and adversarial training."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Tensor
from .data import AugmentPolicy, DatasetSplit, augment_image
from .model import Checkpoint, small_cnn

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"training loss became non-finite in epoch {epoch}")
        self.epoch = epoch


@dataclass
class TrainConfig:
    epochs: int = 50
    max_lr: float = 1e-3
    peak_fraction: float = 0.3
    batch_size: int = 64
    seed: int = 0
    augment: AugmentPolicy = field(default_factory=AugmentPolicy)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.max_lr > 0:
            raise ValueError("max_lr must be positive")
        if not 0 < self.peak_fraction < 1:
            raise ValueError("peak_fraction must lie in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def one_cycle_lr(step: int, total_steps: int, max_lr: float, peak_fraction: float = 0.3,
                 div_factor: float = 25.0) -> float:
    """Cosine warm-up from max_lr/div_factor to max_lr, then cosine annealing to 0.

    The peak sits at step round(peak_fraction * (total_steps - 1)) and the
    final step has learning rate exactly 0.
    """
    if total_steps <= 1:
        return max_lr
    last = total_steps - 1
    peak = min(max(int(round(peak_fraction * last)), 1), last - 1) if last > 1 else 1
    start = max_lr / div_factor
    if step <= peak:
        frac = step / peak
        return start + (max_lr - start) * (1 - math.cos(math.pi * frac)) / 2
    frac = (step - peak) / (last - peak)
    if frac >= 1:
        return 0.0
    return max_lr * (1 + math.cos(math.pi * frac)) / 2


def evaluate(ckpt: Checkpoint, x_raw: np.ndarray, y: np.ndarray, batch: int = 512) -> tuple[float, float]:
    """(mean cross entropy, accuracy) on raw-pixel images."""
    z = ckpt.normalize(x_raw)
    logits = ckpt.logits(z, batch)
    losses = ad.cross_entropy_per_sample(Tensor(logits), y).data
    return float(losses.mean()), float(np.mean(logits.argmax(axis=1) == y))


def input_gradient(ckpt: Checkpoint, x_raw: np.ndarray, y: np.ndarray,
                   weights: list[np.ndarray] | None = None) -> np.ndarray:
    """d(sum of per-sample losses)/dx for raw-pixel inputs."""
    x = Tensor(x_raw, requires_grad=True)
    z = ad.mul(ad.sub(x, ckpt.mean), 1.0 / ckpt.std)
    params = [Tensor(w) for w in (weights if weights is not None else ckpt.weights)]
    loss = ad.tsum(ad.cross_entropy_per_sample(ckpt.forward(z, params), y))
    loss.backward()
    return x.grad


def pgd_attack(ckpt: Checkpoint, x: np.ndarray, y: np.ndarray, eps: float = 0.1,
               alpha: float = 0.02, steps: int = 10, weights=None, batch: int = 512) -> np.ndarray:
    """L-infinity PGD in [0, 1] pixel space, starting from the clean image.

    Each step moves by alpha * sign(grad), projects onto the eps-ball around
    ``x`` and clips to [0, 1].
    """
    if eps < 0 or alpha < 0:
        raise ValueError("eps and alpha must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    if eps == 0 or steps == 0:
        return x.copy()
    out = np.empty_like(x)
    for i in range(0, len(x), batch):
        xc, yc = x[i:i + batch], y[i:i + batch]
        lo, hi = np.maximum(xc - eps, 0.0), np.minimum(xc + eps, 1.0)
        adv = xc.copy()
        for _ in range(steps):
            g = input_gradient(ckpt, adv, yc, weights)
            adv = np.clip(adv + alpha * np.sign(g), lo, hi)
        out[i:i + batch] = adv
    return out


def train(split: DatasetSplit, cfg: TrainConfig, arch=None) -> Checkpoint:
    """Adam + one-cycle training; returns the weights of the lowest validation-loss epoch.

    With ``cfg.augment.kind == 'adversarial'`` every minibatch is replaced by
    its PGD perturbation against the current weights before the update, and
    the epoch is chosen by validation loss on PGD-perturbed validation images.
    """
    arch = arch or small_cnn(split.num_classes, split.side)
    weights = arch.init_weights(cfg.seed)
    policy = cfg.augment
    n = len(split.train_x)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    total = cfg.epochs * steps_per_epoch
    state = AdamState(lr=cfg.max_lr)
    meta = {"mean": repr(split.mean), "std": repr(split.std), "seed": str(cfg.seed),
            "epochs": str(cfg.epochs), "max_lr": repr(cfg.max_lr),
            "batch_size": str(cfg.batch_size), **policy.as_metadata(), **split.source}
    probe = Checkpoint(arch, weights, meta)  # shares the live weight arrays
    best = (math.inf, 0, None)
    history = []
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        perm = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        running = 0.0
        for b in range(steps_per_epoch):
            idx = perm[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            xb = np.stack([augment_image(split.train_x[j], policy, cfg.seed, epoch, int(j)) for j in idx])
            yb = split.train_y[idx]
            if policy.kind == "adversarial":
                xb = pgd_attack(probe, xb, yb, policy.eps, policy.alpha, policy.steps)
            params = [Tensor(w, requires_grad=True) for w in weights]
            loss = ad.cross_entropy(probe.forward(Tensor(probe.normalize(xb)), params), yb)
            if not np.isfinite(loss.data):
                raise TrainingDiverged(epoch)
            loss.backward()
            ad.adam_step(weights, [p.grad for p in params], state,
                         lr=one_cycle_lr(step, total, cfg.max_lr, cfg.peak_fraction))
            running += loss.item() * len(idx)
            step += 1
        val_loss, val_acc = evaluate(probe, split.val_x, split.val_y)
        row = {"epoch": epoch, "train_loss": running / n, "val_loss": val_loss, "val_accuracy": val_acc}
        select = val_loss
        if policy.kind == "adversarial" and policy.eps > 0 and policy.steps > 0:
            # select on the loss being trained: validation loss under the same attack
            x_att = pgd_attack(probe, split.val_x, split.val_y, policy.eps, policy.alpha, policy.steps)
            row["val_adv_loss"], row["val_adv_accuracy"] = evaluate(probe, x_att, split.val_y)
            select = row["val_adv_loss"]
        if not (np.isfinite(val_loss) and np.isfinite(select)):
            raise TrainingDiverged(epoch)
        history.append(row)
        log.info("epoch %d %s", epoch, " ".join(f"{k} {v:.4f}" for k, v in row.items() if k != "epoch"))
        if select < best[0]:
            best = (select, epoch, [w.copy() for w in weights])
    meta.update(best_epoch=str(best[1]), best_val_loss=repr(best[0]))
    return Checkpoint(arch, best[2], meta, history)


def adversarial_train(split: DatasetSplit, cfg: TrainConfig, arch=None) -> Checkpoint:
    if cfg.augment.kind != "adversarial":
        raise ValueError("adversarial_train needs an adversarial augment policy")
    return train(split, cfg, arch)
