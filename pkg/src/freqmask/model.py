"""Layer-list classifiers and the SMCK checkpoint format."""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

CHECKPOINT_MAGIC = b"SMCK"
CHECKPOINT_VERSION = 1


class CheckpointFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Layer:
    kind: str  # conv | relu | maxpool2 | flatten | linear
    args: tuple[int, ...] = ()

    def __str__(self):
        return " ".join([self.kind, *map(str, self.args)])


@dataclass(frozen=True)
class Architecture:
    """Input side length plus an ordered layer list.

    conv args are (in, out, kernel, padding); linear args are (in, out).
    """

    side: int
    layers: tuple[Layer, ...]

    def describe(self) -> str:
        return ";".join([f"input {self.side}", *map(str, self.layers)])

    @classmethod
    def parse(cls, text: str) -> "Architecture":
        parts = [p.strip() for p in text.split(";") if p.strip()]
        if not parts or not parts[0].startswith("input "):
            raise CheckpointFormatError(f"architecture must start with 'input <side>': {text!r}")
        side = int(parts[0].split()[1])
        layers = []
        for p in parts[1:]:
            kind, *args = p.split()
            if kind not in ("conv", "relu", "maxpool2", "flatten", "linear"):
                raise CheckpointFormatError(f"unknown layer {kind!r}")
            layers.append(Layer(kind, tuple(int(a) for a in args)))
        return cls(side, tuple(layers))

    def param_shapes(self) -> list[tuple[int, ...]]:
        shapes = []
        for layer in self.layers:
            if layer.kind == "conv":
                cin, cout, k, _ = layer.args
                shapes += [(cout, cin, k, k), (cout,)]
            elif layer.kind == "linear":
                fin, fout = layer.args
                shapes += [(fout, fin), (fout,)]
        return shapes

    def param_count(self) -> int:
        return sum(int(np.prod(s)) for s in self.param_shapes())

    @property
    def num_classes(self) -> int:
        return self.layers[-1].args[1]

    def init_weights(self, seed: int) -> list[np.ndarray]:
        """He-normal weights, zero biases."""
        rng = np.random.default_rng(seed)
        weights = []
        for shape in self.param_shapes():
            if len(shape) == 1:
                weights.append(np.zeros(shape))
            else:
                fan_in = int(np.prod(shape[1:]))
                weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), shape))
        return weights


def small_cnn(num_classes: int, side: int = 32) -> Architecture:
    """conv(1->8)+relu+pool, conv(8->16)+relu+pool, linear(16*(side/4)^2 -> C)."""
    q = side // 4
    return Architecture(side, (
        Layer("conv", (1, 8, 3, 1)), Layer("relu"), Layer("maxpool2"),
        Layer("conv", (8, 16, 3, 1)), Layer("relu"), Layer("maxpool2"),
        Layer("flatten"), Layer("linear", (16 * q * q, num_classes)),
    ))


def toy_cnn(num_classes: int = 3, side: int = 8) -> Architecture:
    """Single conv block; used for gradient checks on 8x8 inputs."""
    q = side // 2
    return Architecture(side, (
        Layer("conv", (1, 2, 3, 1)), Layer("relu"), Layer("maxpool2"),
        Layer("flatten"), Layer("linear", (2 * q * q, num_classes)),
    ))


def run_layers(arch: Architecture, z: Tensor, params: list[Tensor]) -> Tensor:
    """Forward pass on normalized images [N, d, d] (or [N, 1, d, d])."""
    h = z if z.data.ndim == 4 else ad.reshape(z, (z.shape[0], 1, *z.shape[-2:]))
    i = 0
    for layer in arch.layers:
        if layer.kind == "conv":
            h = ad.conv2d(h, params[i], params[i + 1], padding=layer.args[3])
            i += 2
        elif layer.kind == "linear":
            h = ad.linear(h, params[i], params[i + 1])
            i += 2
        elif layer.kind == "relu":
            h = ad.relu(h)
        elif layer.kind == "maxpool2":
            h = ad.maxpool2(h)
        elif layer.kind == "flatten":
            h = ad.flatten(h)
    return h


@dataclass
class Checkpoint:
    """Frozen classifier: architecture, weights and training metadata.

    Metadata values are strings; ``mean``/``std`` hold the normalization
    statistics of the training split.  ``history`` (per-epoch losses) is
    kept in memory only.
    """

    arch: Architecture
    weights: list[np.ndarray]
    metadata: dict[str, str] = field(default_factory=dict)
    history: list[dict] = field(default_factory=list, compare=False, repr=False)

    def __post_init__(self):
        shapes = self.arch.param_shapes()
        if len(shapes) != len(self.weights) or any(
                tuple(w.shape) != s for w, s in zip(self.weights, shapes)):
            raise CheckpointFormatError("weights do not match the architecture descriptor")

    @property
    def mean(self) -> float:
        return float(self.metadata.get("mean", 0.0))

    @property
    def std(self) -> float:
        return float(self.metadata.get("std", 1.0))

    def normalize(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def param_tensors(self, requires_grad: bool = False) -> list[Tensor]:
        return [Tensor(w, requires_grad=requires_grad) for w in self.weights]

    def forward(self, z: Tensor, params: list[Tensor] | None = None) -> Tensor:
        """Logits for normalized input; weights are constants unless ``params`` is given."""
        return run_layers(self.arch, z, params if params is not None else self.param_tensors())

    def forward_raw(self, x: Tensor) -> Tensor:
        """Logits for [0, 1] pixel input, normalizing inside the graph."""
        return self.forward(ad.mul(ad.sub(x, self.mean), 1.0 / self.std))

    def logits(self, z: np.ndarray, batch: int = 512) -> np.ndarray:
        """Logits for normalized images, evaluated in chunks without a graph."""
        out = [self.forward(Tensor(z[i:i + batch])).data for i in range(0, len(z), batch)]
        return np.concatenate(out) if out else np.zeros((0, self.arch.num_classes))

    def predict(self, z: np.ndarray) -> np.ndarray:
        return self.logits(z).argmax(axis=1)

    def accuracy(self, z: np.ndarray, y: np.ndarray) -> float:
        return float(np.mean(self.predict(z) == y)) if len(y) else float("nan")

    # serialization

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(CHECKPOINT_MAGIC)
        buf.write(struct.pack("<B", CHECKPOINT_VERSION))
        desc = self.arch.describe().encode("utf-8")
        buf.write(struct.pack("<I", len(desc)))
        buf.write(desc)
        flat = np.concatenate([w.ravel() for w in self.weights]) if self.weights else np.zeros(0)
        buf.write(struct.pack("<Q", flat.size))
        buf.write(flat.astype("<f8").tobytes())
        buf.write(format_metadata(self.metadata))
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Checkpoint":
        if raw[:4] != CHECKPOINT_MAGIC:
            raise CheckpointFormatError(f"not an SMCK checkpoint (magic {raw[:4]!r})")
        if len(raw) < 9:
            raise CheckpointFormatError("truncated checkpoint header")
        (version,) = struct.unpack_from("<B", raw, 4)
        if version != CHECKPOINT_VERSION:
            raise CheckpointFormatError(f"unsupported checkpoint version {version}")
        (dlen,) = struct.unpack_from("<I", raw, 5)
        pos = 9 + dlen
        if len(raw) < pos + 8:
            raise CheckpointFormatError("truncated architecture descriptor")
        arch = Architecture.parse(raw[9:pos].decode("utf-8"))
        (count,) = struct.unpack_from("<Q", raw, pos)
        pos += 8
        if count != arch.param_count():
            raise CheckpointFormatError(
                f"weight count {count} does not match descriptor ({arch.param_count()})")
        if len(raw) < pos + 8 * count:
            raise CheckpointFormatError("truncated weight block")
        flat = np.frombuffer(raw, dtype="<f8", count=count, offset=pos).astype(np.float64)
        pos += 8 * count
        weights, i = [], 0
        for shape in arch.param_shapes():
            size = int(np.prod(shape))
            weights.append(flat[i:i + size].reshape(shape).copy())
            i += size
        return cls(arch, weights, parse_metadata(raw[pos:]))

    def save(self, path):
        from .report import atomic_write_bytes

        atomic_write_bytes(path, self.to_bytes())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


def format_metadata(meta: dict) -> bytes:
    lines = []
    for key in sorted(meta):
        value = str(meta[key])
        if "=" in key or "\n" in key or "\n" in value:
            raise ValueError(f"metadata entry {key!r} cannot be serialized")
        lines.append(f"{key}={value}\n")
    return "".join(lines).encode("utf-8")


def parse_metadata(raw: bytes) -> dict[str, str]:
    meta = {}
    for line in raw.decode("utf-8").splitlines():
        if not line:
            continue
        if "=" not in line:
            raise CheckpointFormatError(f"bad metadata line {line!r}")
        key, value = line.split("=", 1)
        meta[key] = value
    return meta
