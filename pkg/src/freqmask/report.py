"""Deterministic artifact writers: atomic files, CSV, JSON, PNG and run manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import platform
import struct
import tempfile
import zlib
from pathlib import Path

import numpy as np

SUMMARY_SCHEMA = "freqmask.summary/1"
MANIFEST_SCHEMA = "freqmask.manifest/1"


def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return v


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    atomic_write_bytes(path, buf.getvalue().encode())


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, payload: dict):
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"
    atomic_write_bytes(path, text.encode())


def write_summary(path, command: str, payload: dict):
    write_json(path, {"schema": SUMMARY_SCHEMA, "command": command, **payload})


def write_manifest(out_dir, command: str, config: dict, inputs=(), seeds=None, extra=None):
    """manifest.json listing every file under out_dir (sha256) plus input hashes.

    Versions of python and numpy are recorded; nothing time-dependent is.
    """
    out_dir = Path(out_dir)
    files = {}
    for p in sorted(out_dir.rglob("*")):
        if p.is_file() and p.name != "manifest.json" and not p.name.startswith("."):
            files[p.relative_to(out_dir).as_posix()] = sha256_file(p)
    payload = {
        "schema": MANIFEST_SCHEMA,
        "command": command,
        "config": config,
        "seeds": seeds or {},
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": files,
        "versions": {"python": platform.python_version(), "numpy": np.__version__},
    }
    if extra:
        payload.update(extra)
    write_json(out_dir / "manifest.json", payload)
    return payload


# ---------------------------------------------------------------- PNG


def _png_chunk(kind: bytes, data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + kind + data + struct.pack(">I", zlib.crc32(kind + data) & 0xFFFFFFFF)


def encode_png(pixels: np.ndarray) -> bytes:
    """8-bit grayscale [h, w] or RGB [h, w, 3] to PNG bytes (filter 0, zlib level 9)."""
    pixels = np.asarray(pixels)
    if pixels.dtype != np.uint8:
        raise ValueError("PNG pixels must be uint8")
    if pixels.ndim == 2:
        color_type, h, w = 0, *pixels.shape
    elif pixels.ndim == 3 and pixels.shape[2] == 3:
        color_type, h, w = 2, pixels.shape[0], pixels.shape[1]
    else:
        raise ValueError(f"unsupported pixel array shape {pixels.shape}")
    rows = pixels.reshape(h, -1)
    raw = np.hstack([np.zeros((h, 1), dtype=np.uint8), rows]).tobytes()
    header = struct.pack(">IIBBBBB", w, h, 8, color_type, 0, 0, 0)
    return (b"\x89PNG\r\n\x1a\n" + _png_chunk(b"IHDR", header)
            + _png_chunk(b"IDAT", zlib.compress(raw, 9)) + _png_chunk(b"IEND", b""))


def decode_png(data: bytes) -> np.ndarray:
    """Inverse of :func:`encode_png` for the files it writes (filter 0 only)."""
    if data[:8] != b"\x89PNG\r\n\x1a\n":
        raise ValueError("not a PNG file")
    pos, idat, header = 8, b"", None
    while pos < len(data):
        (length,) = struct.unpack_from(">I", data, pos)
        kind = data[pos + 4:pos + 8]
        body = data[pos + 8:pos + 8 + length]
        if kind == b"IHDR":
            header = struct.unpack(">IIBBBBB", body)
        elif kind == b"IDAT":
            idat += body
        pos += 12 + length
    w, h, _, color_type = header[:4]
    channels = 1 if color_type == 0 else 3
    raw = np.frombuffer(zlib.decompress(idat), dtype=np.uint8).reshape(h, 1 + w * channels)
    if np.any(raw[:, 0] != 0):
        raise ValueError("only unfiltered scanlines are supported")
    px = raw[:, 1:]
    return px.reshape(h, w) if channels == 1 else px.reshape(h, w, 3)


# blue -> white -> red
_DIVERGING = np.array([[0.0, 0.0, 0.55], [0.2, 0.4, 0.85], [1.0, 1.0, 1.0],
                       [0.85, 0.3, 0.2], [0.55, 0.0, 0.0]])


def colorize(grid, colormap: str = "grayscale", vmin=None, vmax=None) -> np.ndarray:
    """Map a finite 2-d grid to uint8 pixels.

    grayscale scales [vmin, vmax] (default: grid range) to [0, 255]; a constant
    grid becomes mid gray.  diverging is symmetric about 0 with range
    [-vmax, vmax] (default max |grid|) and maps 0 to white.
    """
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 2:
        raise ValueError("grid must be 2-d")
    if not np.all(np.isfinite(g)):
        raise ValueError("grid has non-finite entries")
    if colormap == "grayscale":
        lo = g.min() if vmin is None else vmin
        hi = g.max() if vmax is None else vmax
        if hi <= lo:
            return np.full(g.shape, 128, dtype=np.uint8)
        t = np.clip((g - lo) / (hi - lo), 0, 1)
        return np.round(t * 255).astype(np.uint8)
    if colormap == "diverging":
        top = np.abs(g).max() if vmax is None else vmax
        t = np.full(g.shape, 0.5) if top <= 0 else np.clip(0.5 + g / (2 * top), 0, 1)
        pos = t * (len(_DIVERGING) - 1)
        i = np.minimum(np.floor(pos).astype(int), len(_DIVERGING) - 2)
        f = (pos - i)[..., None]
        rgb = _DIVERGING[i] * (1 - f) + _DIVERGING[i + 1] * f
        return np.round(rgb * 255).astype(np.uint8)
    raise ValueError(f"unknown colormap {colormap!r}")


def render_png(grid, colormap: str, path, vmin=None, vmax=None, scale: int = 8):
    """Write a grid as a PNG, each cell drawn as a scale x scale block."""
    px = colorize(grid, colormap, vmin, vmax)
    if scale > 1:
        px = np.repeat(np.repeat(px, scale, axis=0), scale, axis=1)
    atomic_write_bytes(path, encode_png(px))


# ---------------------------------------------------------------- charts


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def save_figure(fig, path):
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=80, metadata={"Software": None})
    _pyplot().close(fig)
    atomic_write_bytes(path, buf.getvalue())


def bar_chart(path, values, labels, title="", ylabel="", reference=None):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(range(len(values)), values, color="#4a6fa5")
    ax.set_xticks(range(len(values)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    if reference is not None:
        ax.axhline(reference, color="k", lw=0.8, ls="--")
    ax.set_title(title)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    save_figure(fig, path)


def spectrum_panels(path, panels: dict, title=""):
    """One stem-style panel per named magnitude spectrum."""
    plt = _pyplot()
    fig, axes = plt.subplots(1, len(panels), figsize=(3 * len(panels), 2.8), squeeze=False)
    for ax, (name, mag) in zip(axes[0], panels.items()):
        ax.vlines(np.arange(len(mag)), 0, mag, lw=0.8)
        ax.set_title(name, fontsize=9)
        ax.set_xlabel("bin", fontsize=8)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    save_figure(fig, path)


def line_chart(path, x, series: dict, title="", xlabel="", ylabel=""):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for name, y in series.items():
        ax.plot(x, y, label=name)
    ax.legend(fontsize=8)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    save_figure(fig, path)


def scatter_chart(path, points, title=""):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4.5, 4))
    pts = np.asarray([(p[0], p[1]) for p in points])
    labels = np.asarray([p[2] for p in points])
    for c in np.unique(labels):
        sel = labels == c
        ax.scatter(pts[sel, 0], pts[sel, 1], s=10, label=str(c))
    ax.legend(fontsize=8, title="class")
    ax.set_title(title)
    fig.tight_layout()
    save_figure(fig, path)
