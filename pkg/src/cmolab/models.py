"""Minimal differentiable classifiers in plain numpy.

Three architectures: a linear head, an MLP, and a two-conv "tinyconv" with
average pooling, all with hand-written backward passes so gradients can be
finite-difference checked. Parameters are float64 throughout; forward caches
the activations consumed by the following backward call.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

CHECKPOINT_MAGIC = b"CMOM"
CHECKPOINT_VERSION = 1


class CheckpointFormatError(ValueError):
    """Raised for corrupt or mismatched checkpoint files."""


def _offsets3x3():
    return [(i, j) for i in range(3) for j in range(3)]


def _im2col3x3(x: np.ndarray) -> np.ndarray:
    """(N, W, H, C) -> (N, W, H, 9*C) patch matrix, same padding."""
    n, w, h, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = np.empty((n, w, h, 9, c))
    for idx, (i, j) in enumerate(_offsets3x3()):
        cols[:, :, :, idx, :] = xp[:, i:i + w, j:j + h, :]
    return cols.reshape(n, w, h, 9 * c)


def _col2im3x3(dcols: np.ndarray, shape: tuple[int, int, int, int]) -> np.ndarray:
    n, w, h, c = shape
    d = dcols.reshape(n, w, h, 9, c)
    dxp = np.zeros((n, w + 2, h + 2, c))
    for idx, (i, j) in enumerate(_offsets3x3()):
        dxp[:, i:i + w, j:j + h, :] += d[:, :, :, idx, :]
    return dxp[:, 1:1 + w, 1:1 + h, :]


def _avgpool2(x: np.ndarray) -> np.ndarray:
    n, w, h, c = x.shape
    if w % 2 or h % 2:
        raise ValueError("avg pooling needs even spatial dims")
    return x.reshape(n, w // 2, 2, h // 2, 2, c).mean(axis=(2, 4))


def _avgpool2_back(dy: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(dy, 2, axis=1), 2, axis=2) / 4.0


class Model:
    """Base classifier: named float64 parameter tensors plus forward/backward."""

    arch = "base"

    def __init__(self, input_shape: tuple[int, int, int], num_classes: int):
        self.input_shape = tuple(input_shape)
        self.num_classes = int(num_classes)
        self.params: dict[str, np.ndarray] = {}
        self._cache: dict | None = None

    def descriptor(self) -> dict:
        return {
            "arch": self.arch,
            "input_shape": list(self.input_shape),
            "num_classes": self.num_classes,
        }

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dlogits: np.ndarray) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[1:] != self.input_shape:
            raise ValueError(f"expected batch of shape (N, {self.input_shape}), got {x.shape}")
        return x

    def param_bytes(self) -> bytes:
        return b"".join(p.astype("<f8").tobytes() for p in self.params.values())


class LinearModel(Model):
    arch = "linear"

    def __init__(self, input_shape, num_classes, rng: np.random.Generator):
        super().__init__(input_shape, num_classes)
        d = int(np.prod(input_shape))
        self.params = {
            "head_w": rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, num_classes)),
            "head_b": np.zeros(num_classes),
        }

    def forward(self, x):
        x = self._check_input(x)
        flat = x.reshape(len(x), -1)
        logits = flat @ self.params["head_w"] + self.params["head_b"]
        if not np.isfinite(logits).all():
            raise FloatingPointError("non-finite logits")
        self._cache = {"flat": flat}
        return logits

    def backward(self, dlogits):
        flat = self._cache["flat"]
        return {
            "head_w": flat.T @ dlogits,
            "head_b": dlogits.sum(axis=0),
        }


class MLPModel(Model):
    arch = "mlp"

    def __init__(self, input_shape, num_classes, rng: np.random.Generator, hidden_sizes=(64,)):
        super().__init__(input_shape, num_classes)
        self.hidden_sizes = tuple(int(s) for s in hidden_sizes)
        dims = [int(np.prod(input_shape))] + list(self.hidden_sizes) + [num_classes]
        self.params = {}
        for i in range(len(dims) - 1):
            scale = np.sqrt(2.0 / dims[i]) if i < len(dims) - 2 else 1.0 / np.sqrt(dims[i])
            self.params[f"fc{i}_w"] = rng.normal(0.0, scale, size=(dims[i], dims[i + 1]))
            self.params[f"fc{i}_b"] = np.zeros(dims[i + 1])
        self.n_layers = len(dims) - 1

    def descriptor(self):
        d = super().descriptor()
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d

    def forward(self, x):
        x = self._check_input(x)
        act = x.reshape(len(x), -1)
        acts = [act]
        for i in range(self.n_layers):
            act = act @ self.params[f"fc{i}_w"] + self.params[f"fc{i}_b"]
            if i < self.n_layers - 1:
                act = np.maximum(act, 0.0)
            acts.append(act)
        if not np.isfinite(act).all():
            raise FloatingPointError("non-finite logits")
        self._cache = {"acts": acts}
        return act

    def backward(self, dlogits):
        acts = self._cache["acts"]
        grads = {}
        d = dlogits
        for i in reversed(range(self.n_layers)):
            grads[f"fc{i}_w"] = acts[i].T @ d
            grads[f"fc{i}_b"] = d.sum(axis=0)
            if i > 0:
                d = (d @ self.params[f"fc{i}_w"].T) * (acts[i] > 0)
        return grads


class TinyConvModel(Model):
    """conv3x3 -> relu -> avgpool2 -> conv3x3 -> relu -> avgpool2 -> linear head."""

    arch = "tinyconv"

    def __init__(self, input_shape, num_classes, rng: np.random.Generator, channels=(8, 16)):
        super().__init__(input_shape, num_classes)
        w, h, c_in = input_shape
        if w % 4 or h % 4:
            raise ValueError("tinyconv needs spatial dims divisible by 4")
        self.channels = tuple(int(c) for c in channels)
        c1, c2 = self.channels
        feat = (w // 4) * (h // 4) * c2
        self.params = {
            "conv1_w": rng.normal(0.0, np.sqrt(2.0 / (9 * c_in)), size=(9 * c_in, c1)),
            "conv1_b": np.zeros(c1),
            "conv2_w": rng.normal(0.0, np.sqrt(2.0 / (9 * c1)), size=(9 * c1, c2)),
            "conv2_b": np.zeros(c2),
            "head_w": rng.normal(0.0, 1.0 / np.sqrt(feat), size=(feat, num_classes)),
            "head_b": np.zeros(num_classes),
        }

    def descriptor(self):
        d = super().descriptor()
        d["channels"] = list(self.channels)
        return d

    def forward(self, x):
        x = self._check_input(x)
        cache = {}
        cols1 = _im2col3x3(x)
        z1 = cols1 @ self.params["conv1_w"] + self.params["conv1_b"]
        a1 = np.maximum(z1, 0.0)
        p1 = _avgpool2(a1)
        cols2 = _im2col3x3(p1)
        z2 = cols2 @ self.params["conv2_w"] + self.params["conv2_b"]
        a2 = np.maximum(z2, 0.0)
        p2 = _avgpool2(a2)
        flat = p2.reshape(len(x), -1)
        logits = flat @ self.params["head_w"] + self.params["head_b"]
        if not np.isfinite(logits).all():
            raise FloatingPointError("non-finite logits")
        cache.update(cols1=cols1, z1=z1, p1_shape=p1.shape, cols2=cols2, z2=z2,
                     p2_shape=p2.shape, flat=flat)
        self._cache = cache
        return logits

    def backward(self, dlogits):
        c = self._cache
        grads = {
            "head_w": c["flat"].T @ dlogits,
            "head_b": dlogits.sum(axis=0),
        }
        dflat = dlogits @ self.params["head_w"].T
        dp2 = dflat.reshape(c["p2_shape"])
        da2 = _avgpool2_back(dp2)
        dz2 = da2 * (c["z2"] > 0)
        grads["conv2_w"] = c["cols2"].reshape(-1, c["cols2"].shape[-1]).T @ dz2.reshape(-1, dz2.shape[-1])
        grads["conv2_b"] = dz2.sum(axis=(0, 1, 2))
        dcols2 = dz2 @ self.params["conv2_w"].T
        dp1 = _col2im3x3(dcols2, c["p1_shape"])
        da1 = _avgpool2_back(dp1)
        dz1 = da1 * (c["z1"] > 0)
        grads["conv1_w"] = c["cols1"].reshape(-1, c["cols1"].shape[-1]).T @ dz1.reshape(-1, dz1.shape[-1])
        grads["conv1_b"] = dz1.sum(axis=(0, 1, 2))
        return grads


def build_model(
    arch: str,
    input_shape: tuple[int, int, int],
    num_classes: int,
    rng: np.random.Generator,
    hidden_sizes: tuple[int, ...] = (64,),
    conv_channels: tuple[int, ...] = (8, 16),
) -> Model:
    if arch == "linear":
        return LinearModel(input_shape, num_classes, rng)
    if arch == "mlp":
        return MLPModel(input_shape, num_classes, rng, hidden_sizes=hidden_sizes)
    if arch == "tinyconv":
        return TinyConvModel(input_shape, num_classes, rng, channels=conv_channels)
    raise ValueError(f"unknown architecture {arch!r}")


def forward(model: Model, pixels: np.ndarray) -> np.ndarray:
    """Batch logits of shape (N, C)."""
    return model.forward(pixels)


def save_model(model: Model, path: str | Path) -> Path:
    """Versioned binary checkpoint: JSON descriptor + little-endian float64 tensors."""
    path = Path(path)
    desc = model.descriptor()
    desc["params"] = [[name, list(p.shape)] for name, p in model.params.items()]
    blob = json.dumps(desc, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for p in model.params.values():
            fh.write(p.astype("<f8").tobytes(order="C"))
    return path


def load_model(path: str | Path) -> Model:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"{path}: not a model checkpoint")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"{path}: unsupported checkpoint version {version}")
    (desc_len,) = struct.unpack_from("<I", raw, 8)
    desc = json.loads(raw[12:12 + desc_len].decode())
    rng = np.random.default_rng(0)  # placeholder init, overwritten below
    model = build_model(
        desc["arch"], tuple(desc["input_shape"]), desc["num_classes"], rng,
        hidden_sizes=tuple(desc.get("hidden_sizes", (64,))),
        conv_channels=tuple(desc.get("channels", (8, 16))),
    )
    off = 12 + desc_len
    for name, shape in desc["params"]:
        size = int(np.prod(shape))
        if off + size * 8 > len(raw):
            raise CheckpointFormatError(f"{path}: trailing or missing tensor bytes")
        arr = np.frombuffer(raw, dtype="<f8", count=size, offset=off).reshape(shape)
        if name not in model.params:
            raise CheckpointFormatError(f"{path}: unexpected tensor {name!r}")
        model.params[name] = arr.astype(np.float64)
        off += size * 8
    if off != len(raw):
        raise CheckpointFormatError(f"{path}: trailing or missing tensor bytes")
    return model
