"""Comparisons between learned masks: centred differences, band energies,
paired exceed fractions and linear separability of per-image masks."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .masks import Mask
from .spectral import BandSpec, band_energy, fftshift

TAGS = ("N", "A", "S", "T", "R")
PROBE_L2 = 1e-4


class UnpairedMasksError(ValueError):
    def __init__(self, only_a, only_b):
        super().__init__(f"mask sets are not paired: ids only in first set {sorted(only_a)}, "
                         f"ids only in second set {sorted(only_b)}")
        self.only_a, self.only_b = sorted(only_a), sorted(only_b)


@dataclass
class MaskEntry:
    mask: Mask
    image_id: str
    label: int
    tag: str


@dataclass
class MaskSet:
    """Masks from one model/data condition, keyed by image id."""

    entries: list[MaskEntry] = field(default_factory=list)

    def __post_init__(self):
        sides = {e.mask.d for e in self.entries}
        if len(sides) > 1:
            raise ValueError(f"mask set mixes sides {sorted(sides)}")
        for e in self.entries:
            if e.tag not in TAGS:
                raise ValueError(f"unknown model tag {e.tag!r}; expected one of {TAGS}")
        ids = [e.image_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate image ids in mask set")

    def __len__(self):
        return len(self.entries)

    @property
    def d(self) -> int:
        return self.entries[0].mask.d

    @property
    def ids(self) -> list[str]:
        return [e.image_id for e in self.entries]

    @property
    def labels(self) -> np.ndarray:
        return np.array([e.label for e in self.entries], dtype=np.int64)

    def values(self) -> np.ndarray:
        return np.stack([e.mask.values for e in self.entries])

    def by_id(self) -> dict[str, MaskEntry]:
        return {e.image_id: e for e in self.entries}

    @classmethod
    def from_masks(cls, masks: dict, labels: dict, tag: str) -> "MaskSet":
        """Build from {image_id: Mask} and {image_id: label}, sorted by id."""
        keys = sorted(masks, key=_id_sort_key)
        return cls([MaskEntry(masks[k], str(k), int(labels[k]), tag) for k in keys])

    @classmethod
    def load_dir(cls, directory, tag: str | None = None) -> "MaskSet":
        """Every *.smsk in ``directory`` that carries image_id and label metadata."""
        entries = []
        for path in sorted(Path(directory).glob("*.smsk")):
            m = Mask.load(path)
            if m.metadata.get("image_id", "global") == "global":
                continue
            entries.append(MaskEntry(m, m.metadata["image_id"], int(m.metadata["label"]),
                                     tag or m.metadata.get("tag", "N")))
        entries.sort(key=lambda e: _id_sort_key(e.image_id))
        return cls(entries)


def _id_sort_key(k):
    s = str(k)
    return (0, int(s), s) if s.lstrip("-").isdigit() else (1, 0, s)


def _grid(m) -> np.ndarray:
    return m.values if isinstance(m, Mask) else np.asarray(m, dtype=np.float64)


def mask_diff_centered(m_a, m_b) -> np.ndarray:
    a, b = _grid(m_a), _grid(m_b)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    return fftshift(a - b)


def energy_difference(m_i, m_n, bands: BandSpec) -> np.ndarray:
    """Per-band l2 norm of m_i minus that of m_n."""
    a, b = _grid(m_i), _grid(m_n)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    return band_energy(a, bands) - band_energy(b, bands)


def paired_energies(set_a: MaskSet, set_b: MaskSet, bands: BandSpec):
    """Band energies [n_pairs, K] of both sets, aligned on image id."""
    a, b = set_a.by_id(), set_b.by_id()
    only_a, only_b = set(a) - set(b), set(b) - set(a)
    if only_a or only_b:
        raise UnpairedMasksError(only_a, only_b)
    ids = sorted(a, key=_id_sort_key)
    ea = band_energy(np.stack([a[i].mask.values for i in ids]), bands)
    eb = band_energy(np.stack([b[i].mask.values for i in ids]), bands)
    return ids, ea, eb


def exceed_fraction(set_a: MaskSet, set_b: MaskSet, bands: BandSpec) -> np.ndarray:
    """Per band, the fraction of paired masks whose energy in set_a is strictly larger."""
    _, ea, eb = paired_energies(set_a, set_b, bands)
    return np.mean(ea > eb, axis=0)


# ---------------------------------------------------------------- linear probe


@dataclass
class ProbeResult:
    accuracy: float
    train_accuracy: float
    per_class: dict[int, float]
    iterations: int
    weights: np.ndarray = field(repr=False)
    bias: np.ndarray = field(repr=False)

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy, "train_accuracy": self.train_accuracy,
                "per_class": {str(k): v for k, v in self.per_class.items()},
                "iterations": self.iterations}


def _features(x: np.ndarray, ref: np.ndarray) -> np.ndarray:
    # centre per feature and divide by one global scale so that a positive
    # rescaling of every mask leaves the features untouched
    mu = ref.mean(axis=0)
    scale = np.sqrt(np.mean((ref - mu) ** 2))
    return (x - mu) / (scale if scale > 0 else 1.0)


def _softmax(s):
    s = s - s.max(axis=1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=1, keepdims=True)


def fit_softmax_regression(x, y, num_classes, l2=PROBE_L2, max_iter=5000, tol=1e-7):
    """Full-batch gradient descent with step 1/L on mean cross entropy + l2/2 |W|^2.

    L bounds the Hessian: half the largest eigenvalue of X^T X / n (with the
    bias column) plus the l2 weight.
    """
    n = len(x)
    xb = np.hstack([x, np.ones((n, 1))])
    onehot = np.eye(num_classes)[y]
    lip = 0.5 * np.linalg.norm(xb, 2) ** 2 / n + l2
    step = 1.0 / lip
    w = np.zeros((xb.shape[1], num_classes))
    reg = np.ones((xb.shape[1], 1))
    reg[-1] = 0.0  # bias is not penalised
    it = 0
    for it in range(1, max_iter + 1):
        g = xb.T @ (_softmax(xb @ w) - onehot) / n + l2 * reg * w
        w -= step * g
        if np.linalg.norm(g) < tol:
            break
    return w[:-1], w[-1], it


def linear_probe(masks: MaskSet | tuple, shuffle_labels: bool = False, seed: int = 0,
                 train_fraction: float = 0.8, l2: float = PROBE_L2, max_iter: int = 5000) -> ProbeResult:
    """Multinomial logistic regression on flattened masks with a seeded 80/20 split.

    ``masks`` is a MaskSet or an (values [n, d, d], labels [n]) pair.  With
    ``shuffle_labels`` the labels are permuted (same seed) before splitting.
    """
    if isinstance(masks, MaskSet):
        values, labels = masks.values(), masks.labels
    else:
        values, labels = masks
    x = np.asarray(values, dtype=np.float64).reshape(len(values), -1)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise ValueError("linear probe needs at least two classes")
    y = np.searchsorted(classes, labels)
    rng = np.random.default_rng(seed)
    if shuffle_labels:
        y = y[rng.permutation(len(y))]
    perm = rng.permutation(len(y))
    n_train = int(round(train_fraction * len(y)))
    tr, te = perm[:n_train], perm[n_train:]
    if len(te) == 0:
        te = tr
    xtr, xte = _features(x[tr], x[tr]), _features(x[te], x[tr])
    w, b, iters = fit_softmax_regression(xtr, y[tr], len(classes), l2, max_iter)
    pred_tr = (xtr @ w + b).argmax(axis=1)
    pred_te = (xte @ w + b).argmax(axis=1)
    per_class = {int(classes[c]): float(np.mean(pred_te[y[te] == c] == c))
                 for c in range(len(classes)) if np.any(y[te] == c)}
    return ProbeResult(float(np.mean(pred_te == y[te])), float(np.mean(pred_tr == y[tr])),
                       per_class, iters, w, b)


def top_components(x: np.ndarray, k: int = 2, seed: int = 0, iters: int = 500,
                   tol: float = 1e-12) -> np.ndarray:
    """Leading k eigenvectors of the covariance of rows of x, by power iteration with deflation."""
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / max(len(x) - 1, 1)
    rng = np.random.default_rng(seed)
    vecs = []
    for _ in range(k):
        v = rng.normal(size=cov.shape[0])
        for vec in vecs:
            v -= (v @ vec) * vec
        v /= np.linalg.norm(v)
        for _ in range(iters):
            w = cov @ v
            for vec in vecs:
                w -= (w @ vec) * vec
            norm = np.linalg.norm(w)
            if norm < 1e-300:
                w = v
                break
            w /= norm
            done = np.linalg.norm(w - v) < tol
            v = w
            if done:
                break
        # fix the sign so results do not depend on the random start
        j = np.argmax(np.abs(v))
        vecs.append(v * np.sign(v[j]) if v[j] != 0 else v)
    return np.stack(vecs, axis=1)


def pca_scatter(masks: MaskSet | tuple, seed: int = 0, l2: float = PROBE_L2) -> list[tuple[float, float, int]]:
    """Project the class scores of a probe fitted on all masks onto their top-2 components."""
    if isinstance(masks, MaskSet):
        values, labels = masks.values(), masks.labels
    else:
        values, labels = masks
    x = np.asarray(values, dtype=np.float64).reshape(len(values), -1)
    labels = np.asarray(labels)
    if len(x) < 3:
        raise ValueError("pca_scatter needs at least three masks")
    classes = np.unique(labels)
    feats = _features(x, x)
    if len(classes) >= 2:
        w, b, _ = fit_softmax_regression(feats, np.searchsorted(classes, labels), len(classes), l2)
        scores = feats @ w + b
    else:
        scores = feats
    proj = (scores - scores.mean(axis=0)) @ top_components(scores, 2, seed)
    return [(float(p[0]), float(p[1]), int(lab)) for p, lab in zip(proj, labels)]
