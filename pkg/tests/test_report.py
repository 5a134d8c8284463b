import numpy as np
import pytest
from numpy.testing import assert_array_equal

from freqmask.report import (colorize, decode_png, encode_png, read_csv, render_png, write_csv,
                             write_manifest, write_summary)


def test_png_round_trip(rng):
    gray = rng.integers(0, 256, size=(5, 7), dtype=np.uint8)
    assert_array_equal(decode_png(encode_png(gray)), gray)
    rgb = rng.integers(0, 256, size=(4, 3, 3), dtype=np.uint8)
    assert_array_equal(decode_png(encode_png(rgb)), rgb)


def test_png_rejects_bad_input():
    with pytest.raises(ValueError):
        encode_png(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        colorize(np.array([[np.nan]]))


def test_constant_grayscale_is_uniform(tmp_path):
    render_png(np.full((4, 4), 3.0), "grayscale", tmp_path / "c.png", scale=2)
    px = decode_png((tmp_path / "c.png").read_bytes())
    assert px.shape == (8, 8) and np.unique(px).size == 1


def test_diverging_is_centred_at_zero():
    g = np.array([[-2.0, 0.0], [0.0, 2.0]])
    px = colorize(g, "diverging")
    assert_array_equal(px[0, 1], [255, 255, 255])
    assert_array_equal(px[1, 0], [255, 255, 255])
    # symmetric range: -v and +v are mirror colours
    assert_array_equal(px[0, 0], colorize(np.array([[-1.0, 1.0]]), "diverging")[0, 0])


def test_render_is_deterministic(tmp_path, rng):
    g = rng.normal(size=(8, 8))
    render_png(g, "diverging", tmp_path / "a.png")
    render_png(g, "diverging", tmp_path / "b.png")
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


def test_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        render_png(np.zeros((2, 2)), "grayscale", blocker / "sub" / "x.png")


def test_csv_quoting_and_manifest(tmp_path):
    write_csv(tmp_path / "t.csv", ["name", "value"], [["a,b", 0.1], ['say "hi"', np.float64(2)]])
    rows = read_csv(tmp_path / "t.csv")
    assert rows[0]["name"] == "a,b" and rows[1]["name"] == 'say "hi"'
    assert float(rows[0]["value"]) == 0.1
    write_summary(tmp_path / "summary.json", "demo", {"x": np.arange(3)})
    man = write_manifest(tmp_path, "demo", {"k": 1})
    assert set(man["outputs"]) == {"t.csv", "summary.json"}
    for name in man["outputs"]:
        assert (tmp_path / name).exists()
