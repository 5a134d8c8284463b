"""Learnable Fourier-domain modulatory masks.

A mask M multiplies the spectrum of a (normalized) image and the product is
mapped back to pixels, x_bar = Re(ifft2(M * fft2(x))).  Masks are learned
for a frozen classifier by minimising

    sum_x exp([L(x_bar, y) - L(x, y)]**2) + lam * ||M||_p

so the per-sample loss is left unchanged while the mask becomes small.
Mask entries of conjugate frequencies are tied, which keeps x_bar real.
"""

from __future__ import annotations

import hashlib
import io
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .model import Checkpoint, format_metadata, parse_metadata
from .spectral import conjugate_flip, fft2, ifft2

log = logging.getLogger(__name__)

MASK_MAGIC = b"SMSK"
MASK_VERSION = 1
COMPLEMENT_THRESHOLD = 1e-8


class MaskFormatError(ValueError):
    pass


class MaskOptimizationError(RuntimeError):
    def __init__(self, iteration: int):
        super().__init__(f"mask objective became non-finite at iteration {iteration}")
        self.iteration = iteration


@dataclass
class Mask:
    """d x d real frequency weights in unshifted layout."""

    values: np.ndarray
    metadata: dict[str, str] = field(default_factory=dict)
    trace: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise ValueError(f"mask must be square, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("mask has non-finite entries")

    @property
    def d(self) -> int:
        return self.values.shape[0]

    @classmethod
    def ones(cls, d: int) -> "Mask":
        return cls(np.ones((d, d)))

    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.values, conjugate_flip(self.values)))

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(MASK_MAGIC)
        buf.write(struct.pack("<B", MASK_VERSION))
        buf.write(struct.pack("<I", self.d))
        buf.write(self.values.astype("<f8").tobytes())
        buf.write(format_metadata(self.metadata))
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Mask":
        if raw[:4] != MASK_MAGIC:
            raise MaskFormatError(f"not an SMSK mask (magic {raw[:4]!r})")
        if len(raw) < 9:
            raise MaskFormatError("truncated mask header")
        (version,) = struct.unpack_from("<B", raw, 4)
        if version != MASK_VERSION:
            raise MaskFormatError(f"unsupported mask version {version}")
        (d,) = struct.unpack_from("<I", raw, 5)
        end = 9 + 8 * d * d
        if len(raw) < end:
            raise MaskFormatError(f"truncated mask values: need {end} bytes, have {len(raw)}")
        values = np.frombuffer(raw, dtype="<f8", count=d * d, offset=9).reshape(d, d).astype(np.float64)
        return cls(values, parse_metadata(raw[end:]))

    def save(self, path):
        from .report import atomic_write_bytes

        atomic_write_bytes(path, self.to_bytes())

    @classmethod
    def load(cls, path) -> "Mask":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


@dataclass
class MaskLearnConfig:
    lam: float = 1e-3
    p: int = 1
    lr: float = 1e-3
    max_iter: int = 2000
    batch_size: int | None = None  # global scope only; None = whole set per step
    seed: int = 0
    tol: float = 1e-6
    patience: int = 50
    exp_clamp: float = 50.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.p not in (1, 2):
            raise ValueError("p must be 1 or 2")
        if self.max_iter < 1 or self.patience < 1:
            raise ValueError("max_iter and patience must be >= 1")

    def as_metadata(self) -> dict[str, str]:
        return {"lambda": repr(self.lam), "p": str(self.p), "lr": repr(self.lr),
                "seed": str(self.seed)}


# ---------------------------------------------------------------- the layer


def spectral_filter(z: Tensor, mask: Tensor, z_hat: np.ndarray | None = None) -> Tensor:
    """Re(ifft2(mask * fft2(z))) as a graph node.

    ``mask`` is [d, d] (shared by every image) or matches ``z`` [n, d, d].
    ``z_hat`` may carry a precomputed fft2(z.data).
    """
    if mask.shape[-2:] != z.shape[-2:] or (mask.data.ndim == 3 and mask.shape != z.shape):
        raise ValueError(f"mask shape {mask.shape} does not fit images {z.shape}")
    spec = fft2(z.data) if z_hat is None else z_hat
    out = ifft2(mask.data * spec)
    d2 = z.shape[-1] * z.shape[-2]

    def grad_fn(g):
        g_hat = fft2(g)
        gz = ifft2(mask.data * g_hat) if z.requires_grad else None
        gm = None
        if mask.requires_grad:
            gm = (spec * np.conj(g_hat)).real / d2
            if mask.data.ndim == 2 and gm.ndim == 3:
                gm = gm.sum(axis=0)
        return gz, gm

    return ad.make_result(out, (z, mask), grad_fn, "spectral_filter")


def mask_apply(z, mask) -> np.ndarray:
    """Filter normalized image(s) ``z`` with mask values (array or Mask)."""
    values = mask.values if isinstance(mask, Mask) else np.asarray(mask, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if values.shape[-2:] != z.shape[-2:]:
        raise ValueError(f"mask side {values.shape[-2:]} does not match image side {z.shape[-2:]}")
    return ifft2(values * fft2(z))


def complementary_mask(mask) -> np.ndarray:
    """1 where the mask magnitude is below 1e-8 (a suppressed frequency), else 0."""
    values = mask.values if isinstance(mask, Mask) else np.asarray(mask, dtype=np.float64)
    return (np.abs(values) < COMPLEMENT_THRESHOLD).astype(np.float64)


def suppressed_fraction(mask) -> float:
    """Fraction of entries with magnitude below 1e-8."""
    return float(complementary_mask(mask).mean())


# ---------------------------------------------------------------- objective


@dataclass
class ObjectiveValue:
    value: float
    per_mask: np.ndarray  # objective split by mask (length 1 for a shared mask)
    grad: np.ndarray  # full gradient, lam * sign(M) for the l1 part
    grad_smooth: np.ndarray  # gradient of the invariance term alone
    delta: np.ndarray  # per-sample L(x_bar) - L(x)
    clamped: bool


def base_losses(ckpt: Checkpoint, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    return ad.cross_entropy_per_sample(Tensor(ckpt.logits(z)), y).data


def _norm_value_grad(values: np.ndarray, p: int, axes) -> tuple[np.ndarray, np.ndarray]:
    if p == 1:
        return np.abs(values).sum(axis=axes), np.sign(values)
    norm = np.sqrt((values * values).sum(axis=axes))
    safe = np.where(norm > 0, norm, 1.0)
    grad = values / (safe[..., None, None] if values.ndim == 3 else safe)
    return norm, grad


def mask_objective(ckpt: Checkpoint, mask, z: np.ndarray, y: np.ndarray, lam: float = 1e-3,
                   p: int = 1, base: np.ndarray | None = None, z_hat: np.ndarray | None = None,
                   exp_clamp: float = 50.0) -> ObjectiveValue:
    """Evaluate the invariance-plus-sparsity objective and its gradient in M.

    A [d, d] mask is shared by all of ``z``; an [n, d, d] stack pairs mask i
    with image i and the objective separates into one term per mask.
    Exponents above ``exp_clamp`` are clamped (zero gradient there).
    """
    values = mask.values if isinstance(mask, Mask) else np.asarray(mask, dtype=np.float64)
    if base is None:
        base = base_losses(ckpt, z, y)
    m = Tensor(values, requires_grad=True)
    xbar = spectral_filter(Tensor(z), m, z_hat)
    losses = ad.cross_entropy_per_sample(ckpt.forward(xbar), y)
    delta = ad.sub(losses, base)
    sq = ad.square(delta)
    clamped = bool(np.any(sq.data > exp_clamp))
    terms = ad.exp(ad.clamp_max(sq, exp_clamp))
    inv = ad.tsum(terms)
    inv.backward()
    per_sample_axes = (-2, -1)
    norm, ngrad = _norm_value_grad(values, p, per_sample_axes)
    if values.ndim == 3:
        per_mask = terms.data + lam * norm
    else:
        per_mask = np.array([inv.item() + lam * float(norm)])
    return ObjectiveValue(
        value=float(per_mask.sum()),
        per_mask=per_mask,
        grad=m.grad + lam * ngrad,
        grad_smooth=m.grad,
        delta=delta.data,
        clamped=clamped,
    )


# ---------------------------------------------------------------- optimization


def _l1_pseudo_gradient(values, g_smooth, lam):
    """Minimum-norm subgradient of g_smooth + lam*|M| (orthant-wise)."""
    pg = g_smooth + lam * np.sign(values)
    at_zero = values == 0
    zg = np.where(g_smooth < -lam, g_smooth + lam, np.where(g_smooth > lam, g_smooth - lam, 0.0))
    return np.where(at_zero, zg, pg)


class _StackedAdam:
    """Adam over a stack of masks with an independent step count per mask.

    Updating a subset of rows leaves the others (and their moments) untouched,
    so a stopped mask is frozen exactly as if optimized alone.
    """

    def __init__(self, shape, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = np.zeros(shape[0], dtype=np.int64)

    def step(self, values, grad, rows):
        self.t[rows] += 1
        t = self.t[rows][:, None, None]
        m = self.beta1 * self.m[rows] + (1 - self.beta1) * grad
        v = self.beta2 * self.v[rows] + (1 - self.beta2) * grad * grad
        self.m[rows], self.v[rows] = m, v
        mhat = m / (1 - self.beta1**t)
        vhat = v / (1 - self.beta2**t)
        return values - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _optimize(ckpt: Checkpoint, z: np.ndarray, y: np.ndarray, cfg: MaskLearnConfig,
              per_image: bool):
    """Adam on the objective starting from M = 1.

    Returns (best masks [k, d, d], best objectives [k], trace, clamp count)
    with k = len(z) in per-image mode and 1 otherwise.  Per-image mode pairs
    mask i with image i in one stacked problem; the terms are independent
    and Adam is elementwise, so each mask evolves as in a separate run.
    A mask stops once its best objective improves by less than ``tol`` over
    ``patience`` iterations.  For p = 1 the l1 term enters through its
    minimum-norm subgradient and entries that would cross zero are set to
    zero (orthant-wise Adam), which yields exact zeros.
    """
    n, d = len(z), z.shape[-1]
    z_hat_all = fft2(z)
    base_all = base_losses(ckpt, z, y)
    k = n if per_image else 1
    values = np.ones((k, d, d))
    best_values = values.copy()
    best_obj = np.full(k, np.inf)
    best_hist = []
    active = np.ones(k, dtype=bool)
    adam = _StackedAdam(values.shape, cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    minibatch = not per_image and cfg.batch_size is not None and cfg.batch_size < n
    order = rng.permutation(n) if minibatch else None
    cursor = 0
    trace = []
    clamp_events = 0
    for it in range(cfg.max_iter):
        rows = np.flatnonzero(active)
        if per_image:
            cur = values[rows]
            zb, yb, zh, bb = z[rows], y[rows], z_hat_all[rows], base_all[rows]
        else:
            cur = values[0]
            if minibatch:
                if cursor + cfg.batch_size > n:
                    order, cursor = rng.permutation(n), 0
                sel = order[cursor:cursor + cfg.batch_size]
                cursor += cfg.batch_size
                zb, yb, zh, bb = z[sel], y[sel], z_hat_all[sel], base_all[sel]
            else:
                zb, yb, zh, bb = z, y, z_hat_all, base_all
        obj = mask_objective(ckpt, cur, zb, yb, cfg.lam, cfg.p, bb, zh, cfg.exp_clamp)
        if not np.all(np.isfinite(obj.per_mask)):
            raise MaskOptimizationError(it)
        if obj.clamped:
            clamp_events += 1
            if clamp_events == 1:
                log.warning("objective exponent clamped at %g (iteration %d)", cfg.exp_clamp, it)
        cur = cur.reshape(len(rows), d, d)
        improved = obj.per_mask < best_obj[rows]
        best_obj[rows[improved]] = obj.per_mask[improved]
        best_values[rows[improved]] = cur[improved]
        best_hist.append(best_obj.copy())
        trace.append((it, obj.value, float(best_obj[rows].sum())))
        if it >= cfg.patience:
            active &= ~(best_hist[it - cfg.patience] - best_obj < cfg.tol)
            if not active.any():
                break
        g = obj.grad_smooth.reshape(cur.shape)
        g = (g + conjugate_flip(g)) / 2
        if cfg.p == 1:
            pg = _l1_pseudo_gradient(cur, g, cfg.lam)
        else:
            pg = g + (obj.grad - obj.grad_smooth).reshape(cur.shape)
        new = adam.step(cur, pg, rows)
        if cfg.p == 1:
            orthant = np.where(cur != 0, np.sign(cur), np.sign(-pg))
            new[np.sign(new) != orthant] = 0.0
        if not np.array_equal(new, conjugate_flip(new)):
            raise AssertionError(f"mask lost conjugate symmetry at iteration {it}")
        values[rows] = new
    return best_values, best_obj, np.asarray(trace), clamp_events


def learn_mask_global(ckpt: Checkpoint, x_raw: np.ndarray, y: np.ndarray,
                      cfg: MaskLearnConfig | None = None) -> Mask:
    """One mask for a whole image set (normally the validation split)."""
    cfg = cfg or MaskLearnConfig()
    z = ckpt.normalize(x_raw)
    values, best, trace, clamps = _optimize(ckpt, z, y, cfg, per_image=False)
    values = values[0]
    meta = {**cfg.as_metadata(), "image_id": "global", "objective": repr(float(best[0])),
            "clamp_events": str(clamps), "checkpoint": ckpt.digest()}
    return Mask(values, meta, trace)


def learn_masks_per_image(ckpt: Checkpoint, x_raw: np.ndarray, y: np.ndarray, ids,
                          cfg: MaskLearnConfig | None = None) -> tuple[dict[int, Mask], list[int]]:
    """Independent single-image masks for every correctly classified image.

    Returns ({image id: mask}, [skipped ids]); misclassified images are skipped.
    """
    cfg = cfg or MaskLearnConfig()
    ids = [int(i) for i in ids]
    z = ckpt.normalize(x_raw)
    correct = ckpt.predict(z) == y
    skipped = [i for i, ok in zip(ids, correct) if not ok]
    keep = np.flatnonzero(correct)
    if keep.size == 0:
        return {}, skipped
    values, best, trace, clamps = _optimize(ckpt, z[keep], y[keep], cfg, per_image=True)
    digest = ckpt.digest()
    masks = {}
    for row, j in enumerate(keep):
        meta = {**cfg.as_metadata(), "image_id": str(ids[j]), "label": str(int(y[j])),
                "objective": repr(float(best[row])), "checkpoint": digest}
        masks[ids[j]] = Mask(values[row], meta)
    if clamps:
        log.warning("%d iterations hit the exponent clamp", clamps)
    return masks, skipped


def learn_mask_single(ckpt: Checkpoint, x_raw: np.ndarray, y: int,
                      cfg: MaskLearnConfig | None = None, image_id: int = 0) -> Mask | None:
    """Mask for one image; None when the classifier gets the image wrong."""
    masks, _ = learn_masks_per_image(ckpt, x_raw[None], np.array([y]), [image_id], cfg)
    return masks.get(image_id)


def filtered_accuracy(ckpt: Checkpoint, x_raw: np.ndarray, y: np.ndarray, masks) -> float:
    """Accuracy on images filtered by one shared mask or a per-image stack."""
    return ckpt.accuracy(mask_apply(ckpt.normalize(x_raw), masks), y)
