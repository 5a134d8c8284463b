"""Labelled grayscale image data: IDX ingestion, a synthetic generator and
the geometric augmentations used during training."""

from __future__ import annotations

import gzip
import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
SIDE = 32
TRAIN_FRACTION = 0.7


class IDXFormatError(ValueError):
    """Malformed IDX file; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


@dataclass
class DatasetSplit:
    """Train/validation split of [n, d, d] images in [0, 1] with integer labels.

    ``mean``/``std`` are pixel statistics of the training images only and
    are what every model built on this split normalizes with.
    """

    train_x: np.ndarray
    train_y: np.ndarray
    train_ids: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray
    val_ids: np.ndarray
    num_classes: int
    mean: float = field(init=False)
    std: float = field(init=False)
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.train_x) == 0:
            raise ValueError("training split is empty")
        self.mean = float(self.train_x.mean())
        self.std = float(self.train_x.std())
        if not self.std > 0:
            raise ValueError("training images have zero pixel variance")
        overlap = np.intersect1d(self.train_ids, self.val_ids)
        if overlap.size:
            raise ValueError(f"train and val share image ids {overlap[:10].tolist()}")

    @property
    def side(self) -> int:
        return self.train_x.shape[-1]

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def ids_digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.train_ids.astype("<i8").tobytes())
        h.update(b"|")
        h.update(self.val_ids.astype("<i8").tobytes())
        return h.hexdigest()


def split_dataset(images, labels, ids, num_classes, seed, source=None) -> DatasetSplit:
    """Seeded shuffle followed by a 70/30 train/validation cut."""
    n = len(images)
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(TRAIN_FRACTION * n))
    tr, va = perm[:n_train], perm[n_train:]
    return DatasetSplit(
        images[tr], labels[tr], ids[tr], images[va], labels[va], ids[va],
        num_classes, source=dict(source or {}),
    )


# ---------------------------------------------------------------- IDX


def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def _parse_header(buf: bytes, expected_magic: int, ndim: int, what: str) -> tuple[int, ...]:
    if len(buf) < 4:
        raise IDXFormatError(f"{what}: file too short for magic number", len(buf))
    (magic,) = struct.unpack_from(">I", buf, 0)
    if magic != expected_magic:
        raise IDXFormatError(
            f"{what}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}", 0)
    need = 4 + 4 * ndim
    if len(buf) < need:
        raise IDXFormatError(f"{what}: truncated header", len(buf))
    return struct.unpack_from(">" + "I" * ndim, buf, 4)


def read_idx_images(path) -> np.ndarray:
    buf = _read_bytes(path)
    n, rows, cols = _parse_header(buf, IDX_IMAGES_MAGIC, 3, "images")
    start = 16
    expected = start + n * rows * cols
    if len(buf) < expected:
        raise IDXFormatError(
            f"images: truncated pixel data, expected {expected} bytes, found {len(buf)}", len(buf))
    return np.frombuffer(buf, dtype=np.uint8, count=n * rows * cols, offset=start).reshape(n, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    buf = _read_bytes(path)
    (n,) = _parse_header(buf, IDX_LABELS_MAGIC, 1, "labels")
    if len(buf) < 8 + n:
        raise IDXFormatError(
            f"labels: truncated label data, expected {8 + n} bytes, found {len(buf)}", len(buf))
    return np.frombuffer(buf, dtype=np.uint8, count=n, offset=8)


def write_idx_images(path, images: np.ndarray):
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    Path(path).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols) + images.tobytes())


def write_idx_labels(path, labels: np.ndarray):
    labels = np.asarray(labels, dtype=np.uint8)
    Path(path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)) + labels.tobytes())


def pad_to(images: np.ndarray, side: int = SIDE) -> np.ndarray:
    """Zero-pad [n, h, w] symmetrically (extra row/col at the end) to side x side."""
    n, h, w = images.shape
    if h > side or w > side:
        raise ValueError(f"images {h}x{w} larger than target {side}x{side}")
    top, left = (side - h) // 2, (side - w) // 2
    return np.pad(images, ((0, 0), (top, side - h - top), (left, side - w - left)))


def load_idx(images_path, labels_path, class_whitelist=None, cap_per_class=None,
             seed: int = 0) -> DatasetSplit:
    """Load an IDX image/label pair into a padded 32x32 split.

    Whitelisted classes are remapped to 0..k-1 in ascending order of their
    original label; ``cap_per_class`` keeps the first images of each class
    in file order.  Image ids are positions in the original file.
    """
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise IDXFormatError(
            f"label count {len(labels)} does not match image count {len(images)}", 4)
    classes = sorted(set(int(c) for c in (class_whitelist if class_whitelist is not None
                                          else np.unique(labels))))
    remap = {c: i for i, c in enumerate(classes)}
    keep = []
    taken = dict.fromkeys(classes, 0)
    for i, lab in enumerate(labels.tolist()):
        if lab in remap and (cap_per_class is None or taken[lab] < cap_per_class):
            keep.append(i)
            taken[lab] += 1
    ids = np.asarray(keep, dtype=np.int64)
    x = pad_to(images[ids].astype(np.float64) / 255.0)
    y = np.asarray([remap[int(v)] for v in labels[ids]], dtype=np.int64)
    source = {
        "data": "idx", "idx_images": str(images_path), "idx_labels": str(labels_path),
        "whitelist": ",".join(map(str, classes)),
        "cap": "" if cap_per_class is None else str(cap_per_class),
        "data_seed": str(seed),
    }
    return split_dataset(x, y, ids, len(classes), seed, source)


# ---------------------------------------------------------------- synthetic


def synthetic_images(num_classes: int, n_per_class: int, seed: int, side: int = SIDE,
                     grating_amp: float = 0.15, blob_amp: float = 0.6, blob_sigma: float = 4.0,
                     blob_informative: float = 0.7, noise: float = 0.05, background: float = 0.3,
                     radii=(7, 8, 9), phase_jitter: float = np.pi / 4):
    """Images, labels and ids of the synthetic grating-plus-blob dataset.

    Class c carries a low-amplitude grating whose wave vector points at angle
    c*pi/C (row frequency = r sin, column frequency = r cos, rounded to whole
    cycles so the grating occupies a single conjugate pair of bins) and a
    bright Gaussian blob.  With probability ``blob_informative`` the blob sits
    at the class position, otherwise at a uniformly drawn class position.
    """
    if not 1 <= num_classes <= 8:
        raise ValueError(f"synthetic data supports 1..8 classes, got {num_classes}")
    rng = np.random.default_rng(seed)
    n = num_classes * n_per_class
    labels = np.repeat(np.arange(num_classes), n_per_class)
    rows, cols = np.mgrid[0:side, 0:side].astype(np.float64)
    centre = (side - 1) / 2
    images = np.empty((n, side, side))
    for i, c in enumerate(labels):
        theta = c * np.pi / num_classes
        radius = rng.choice(radii)
        fr, fc = np.round(radius * np.sin(theta)), np.round(radius * np.cos(theta))
        phase = rng.uniform(-phase_jitter, phase_jitter)
        grating = np.cos(2 * np.pi * (fr * rows + fc * cols) / side + phase)
        spot = c if rng.random() < blob_informative else rng.integers(num_classes)
        blob_angle = 2 * np.pi * spot / num_classes
        br = centre + 8 * np.sin(blob_angle) + rng.uniform(-1, 1)
        bc = centre + 8 * np.cos(blob_angle) + rng.uniform(-1, 1)
        blob = np.exp(-((rows - br) ** 2 + (cols - bc) ** 2) / (2 * blob_sigma**2))
        img = background + grating_amp * grating + blob_amp * blob + rng.normal(0, noise, (side, side))
        images[i] = np.clip(img, 0.0, 1.0)
    return images, labels.astype(np.int64), np.arange(n, dtype=np.int64)


def generate_synthetic(num_classes: int = 5, n_per_class: int = 200, seed: int = 0) -> DatasetSplit:
    x, y, ids = synthetic_images(num_classes, n_per_class, seed)
    source = {"data": "synthetic", "classes": str(num_classes),
              "n_per_class": str(n_per_class), "data_seed": str(seed)}
    return split_dataset(x, y, ids, num_classes, seed, source)


def dataset_from_source(source: dict) -> DatasetSplit:
    """Rebuild a split from the descriptor stored in checkpoint metadata."""
    if source.get("data") == "synthetic":
        return generate_synthetic(int(source["classes"]), int(source["n_per_class"]),
                                  int(source["data_seed"]))
    if source.get("data") == "idx":
        whitelist = [int(v) for v in source["whitelist"].split(",") if v]
        cap = int(source["cap"]) if source.get("cap") else None
        return load_idx(source["idx_images"], source["idx_labels"], whitelist, cap,
                        int(source["data_seed"]))
    raise ValueError(f"unknown dataset source {source.get('data')!r}")


# ---------------------------------------------------------------- augmentation


@dataclass(frozen=True)
class AugmentPolicy:
    kind: str = "none"  # none | adversarial | translate | rotate | scale
    translate_max: int = 4
    rotate_max: float = 30.0
    scale_min: float = 0.8
    scale_max: float = 1.2
    eps: float = 0.1
    alpha: float = 0.02
    steps: int = 10

    KINDS = ("none", "adversarial", "translate", "rotate", "scale")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown augmentation {self.kind!r}; choose from {self.KINDS}")
        if self.translate_max < 0:
            raise ValueError("translate_max must be >= 0")
        if self.scale_min > self.scale_max or self.scale_min <= 0:
            raise ValueError("need 0 < scale_min <= scale_max")
        if self.eps < 0 or self.alpha < 0 or self.steps < 0:
            raise ValueError("adversarial eps, alpha and steps must be >= 0")

    def as_metadata(self) -> dict:
        meta = {"augment": self.kind}
        if self.kind == "adversarial":
            meta.update(eps=repr(self.eps), alpha=repr(self.alpha), steps=str(self.steps))
        elif self.kind == "translate":
            meta.update(translate_max=str(self.translate_max))
        elif self.kind == "rotate":
            meta.update(rotate_max=repr(self.rotate_max))
        elif self.kind == "scale":
            meta.update(scale_min=repr(self.scale_min), scale_max=repr(self.scale_max))
        return meta


def translate(img: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Integer shift by dx columns and dy rows; vacated pixels are zero."""
    h, w = img.shape
    out = np.zeros_like(img)
    if abs(dx) >= w or abs(dy) >= h:
        return out
    src_r = slice(max(0, -dy), h - max(0, dy))
    dst_r = slice(max(0, dy), h - max(0, -dy))
    src_c = slice(max(0, -dx), w - max(0, dx))
    dst_c = slice(max(0, dx), w - max(0, -dx))
    out[dst_r, dst_c] = img[src_r, src_c]
    return out


def _bilinear(img: np.ndarray, r: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Sample ``img`` at fractional (r, c); points outside the grid read as 0."""
    h, w = img.shape
    padded = np.pad(img, 1)
    r = np.clip(r + 1, -1, h + 1)
    c = np.clip(c + 1, -1, w + 1)
    r0 = np.floor(r).astype(np.intp)
    c0 = np.floor(c).astype(np.intp)
    fr, fc = r - r0, c - c0

    def at(rr, cc):
        inside = (rr >= 0) & (rr < h + 2) & (cc >= 0) & (cc < w + 2)
        return np.where(inside, padded[np.clip(rr, 0, h + 1), np.clip(cc, 0, w + 1)], 0.0)

    return ((1 - fr) * (1 - fc) * at(r0, c0) + (1 - fr) * fc * at(r0, c0 + 1)
            + fr * (1 - fc) * at(r0 + 1, c0) + fr * fc * at(r0 + 1, c0 + 1))


def _warp(img: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Resample with output pixel p reading source centre + a @ (p - centre)."""
    h, w = img.shape
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    cr, cc = (h - 1) / 2, (w - 1) / 2
    dr, dc = rows - cr, cols - cc
    src_r = cr + a[0, 0] * dr + a[0, 1] * dc
    src_c = cc + a[1, 0] * dr + a[1, 1] * dc
    return _bilinear(img, src_r, src_c)


def rotate(img: np.ndarray, degrees: float) -> np.ndarray:
    """Counter-clockwise rotation about the image centre (matches np.rot90 at 90 degrees)."""
    t = np.deg2rad(degrees)
    cos, sin = np.cos(t), np.sin(t)
    return _warp(img, np.array([[cos, sin], [-sin, cos]]))


def rescale(img: np.ndarray, s: float) -> np.ndarray:
    """Zoom by ``s`` about the centre, keeping the original frame (crop or zero-pad)."""
    if s <= 0:
        raise ValueError(f"scale factor must be positive, got {s}")
    return _warp(img, np.eye(2) / s)


def augment_image(img: np.ndarray, policy: AugmentPolicy, seed: int, epoch: int, index: int) -> np.ndarray:
    """Apply one random draw of ``policy``; the draw depends only on (seed, epoch, index)."""
    if policy.kind in ("none", "adversarial"):
        return img
    rng = np.random.default_rng([seed, epoch, index])
    if policy.kind == "translate":
        a = policy.translate_max
        dx, dy = rng.integers(-a, a + 1, size=2)
        return translate(img, int(dx), int(dy))
    if policy.kind == "rotate":
        return rotate(img, rng.uniform(-policy.rotate_max, policy.rotate_max))
    return rescale(img, rng.uniform(policy.scale_min, policy.scale_max))
