import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from freqmask.analysis import (MaskEntry, MaskSet, UnpairedMasksError, energy_difference,
                               exceed_fraction, linear_probe, mask_diff_centered, pca_scatter,
                               top_components)
from freqmask.masks import Mask
from freqmask.spectral import band_energy, radial_bands


def make_set(values, labels, tag="N", ids=None):
    ids = ids if ids is not None else range(len(values))
    return MaskSet([MaskEntry(Mask(v), str(i), int(c), tag) for v, c, i in zip(values, labels, ids)])


def silhouette(points, assign):
    d = np.linalg.norm(points[:, None] - points[None], axis=-1)
    s = []
    for i in range(len(points)):
        same = assign == assign[i]
        a = d[i, same & (np.arange(len(points)) != i)].mean()
        b = d[i, ~same].mean()
        s.append((b - a) / max(a, b))
    return float(np.mean(s))


def two_means(points, iters=50):
    c = points[[np.argmin(points[:, 0]), np.argmax(points[:, 0])]]
    for _ in range(iters):
        assign = np.argmin(np.linalg.norm(points[:, None] - c[None], axis=-1), axis=1)
        c = np.stack([points[assign == k].mean(axis=0) for k in range(2)])
    return assign


def test_centered_difference_examples(rng):
    a, b = rng.normal(size=(8, 8)), rng.normal(size=(8, 8))
    assert_array_equal(mask_diff_centered(a, a), 0)
    assert_array_equal(mask_diff_centered(a, b), -mask_diff_centered(b, a))
    dc = np.zeros((8, 8))
    dc[0, 0] = 1
    out = mask_diff_centered(dc, np.zeros((8, 8)))
    assert out[4, 4] == 1 and np.count_nonzero(out) == 1
    with pytest.raises(ValueError):
        mask_diff_centered(a, np.zeros((4, 4)))


def test_energy_difference_examples(rng):
    bands = radial_bands(16, 4)
    m = rng.normal(size=(16, 16))
    assert_array_equal(energy_difference(m, m, bands), 0)
    assert_allclose(energy_difference(2 * m, m, bands), band_energy(m, bands))


def test_exceed_fraction_strict_and_scaled(rng):
    bands = radial_bands(16, 4)
    vals = rng.normal(size=(6, 16, 16))
    a, b = make_set(vals, [0] * 6), make_set(2 * vals, [0] * 6)
    assert_array_equal(exceed_fraction(a, a, bands), 0)
    assert_array_equal(exceed_fraction(b, a, bands), 1)
    fa, fb = exceed_fraction(a, b, bands), exceed_fraction(b, a, bands)
    assert np.all(fa + fb <= 1)


def test_exceed_fraction_ties_only_in_some_bands():
    bands = radial_bands(8, 2)
    low = (bands.membership == 0).astype(float)
    a = make_set([low, low], [0, 1])
    b = make_set([0.5 * low, low], [0, 1])
    assert_array_equal(exceed_fraction(a, b, bands), [0.5, 0.0])


def test_exceed_fraction_pairs_by_id(rng):
    bands = radial_bands(8, 2)
    vals = rng.normal(size=(3, 8, 8))
    a = make_set(vals, [0, 1, 2], ids=[5, 6, 7])
    b = make_set(vals[::-1] * 0 + vals, [0, 1, 2], ids=[7, 6, 5])
    # same masks listed in a different order pair up by id, giving ties
    shuffled = make_set(vals[[2, 1, 0]], [2, 1, 0], ids=[7, 6, 5])
    assert_array_equal(exceed_fraction(a, shuffled, bands), 0)
    with pytest.raises(UnpairedMasksError) as err:
        exceed_fraction(a, make_set(vals[:2], [0, 1], ids=[5, 9]), bands)
    assert err.value.only_a == ["6", "7"] and err.value.only_b == ["9"]
    assert len(b) == 3


def test_mask_set_validation(rng):
    with pytest.raises(ValueError):
        MaskSet([MaskEntry(Mask(np.ones((8, 8))), "1", 0, "N"), MaskEntry(Mask(np.ones((4, 4))), "2", 0, "N")])
    with pytest.raises(ValueError):
        make_set([np.ones((4, 4))], [0], tag="Z")


def test_mask_set_load_dir(tmp_path, rng):
    for i in range(3):
        Mask(rng.normal(size=(4, 4)), {"image_id": str(i), "label": str(i % 2), "tag": "A"}).save(tmp_path / f"{i}.smsk")
    Mask(np.ones((4, 4)), {"image_id": "global"}).save(tmp_path / "global.smsk")
    s = MaskSet.load_dir(tmp_path)
    assert s.ids == ["0", "1", "2"] and list(s.labels) == [0, 1, 0]
    assert s.entries[0].tag == "A"


def clustered_masks(rng, n_per=40, C=5, d=8, noise=1.0):
    centres = rng.normal(size=(C, d, d)) * 0.6
    vals = np.concatenate([centres[c] + noise * rng.normal(size=(n_per, d, d)) for c in range(C)])
    return vals, np.repeat(np.arange(C), n_per)


def test_probe_true_labels_beat_shuffled(rng):
    vals, labels = clustered_masks(rng)
    true = linear_probe((vals, labels), False, seed=0)
    shuffled = linear_probe((vals, labels), True, seed=0)
    assert true.accuracy - shuffled.accuracy >= 0.2
    assert 0.0 <= shuffled.accuracy <= 0.4
    assert set(true.per_class) <= set(range(5))


def test_probe_shuffled_accuracy_near_chance_on_average(rng):
    vals, labels = clustered_masks(rng, n_per=60)
    accs = [linear_probe((vals, labels), True, seed=s, max_iter=500).accuracy for s in range(6)]
    assert 0.10 <= np.mean(accs) <= 0.35


def test_probe_fits_duplicated_set(rng):
    vals, labels = clustered_masks(rng, n_per=6, noise=0.3)
    dup = (np.concatenate([vals, vals]), np.concatenate([labels, labels]))
    assert linear_probe(dup, False, seed=1).train_accuracy == 1.0


def test_probe_invariant_to_global_rescaling(rng):
    vals, labels = clustered_masks(rng)
    base = linear_probe((vals, labels), False, seed=2).accuracy
    for s in (0.5, 2.0):
        assert abs(linear_probe((s * vals, labels), False, seed=2).accuracy - base) <= 0.02


def test_probe_needs_two_classes(rng):
    with pytest.raises(ValueError):
        linear_probe((rng.normal(size=(5, 4, 4)), np.zeros(5, dtype=int)))


def test_top_components_match_eigh(rng):
    x = rng.normal(size=(200, 5)) @ np.diag([5, 3, 1, 0.5, 0.1])
    v = top_components(x, 2, seed=0, iters=5000)
    w, e = np.linalg.eigh(np.cov(x.T))
    for k, j in enumerate([4, 3]):
        assert abs(abs(v[:, k] @ e[:, j]) - 1) < 1e-6


def test_pca_scatter_examples(rng):
    same = (np.ones((6, 4, 4)), np.array([0, 1, 0, 1, 0, 1]))
    pts = pca_scatter(same)
    assert len(pts) == 6
    assert np.allclose([p[:2] for p in pts], pts[0][:2])
    vals, labels = clustered_masks(rng, n_per=30, C=2, noise=0.5)
    pts = pca_scatter((vals, labels), seed=0)
    xy = np.array([p[:2] for p in pts])
    assert silhouette(xy, two_means(xy)) > 0.5
    assert pca_scatter((vals, labels), seed=0) == pts
    with pytest.raises(ValueError):
        pca_scatter((vals[:2], labels[:2]))
