"""
Small convolutional encoder-decoder with hand-written forward and backward passes.

Activations are kept channel-last (N, H, W, C) internally; the public
``forward`` accepts and returns channel-first arrays like the rest of the
package. Layout of an L-level model::

    enc_l : conv3x3 -> GELU -> maxpool2x2          (l = 1..L)
    dec_l : upsample2x -> concat(skip e_l) -> conv3x3 -> GELU   (l = L..1)
    head  : conv1x1 -> C logits
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from fuelmap.classes import NUM_CLASSES
from fuelmap.errors import ShapeMismatchError, StaleCacheError

_GELU_K = np.sqrt(2.0 / np.pi)
_GELU_C = 0.044715


# -- layers -----------------------------------------------------------------

def conv3x3_forward(x, w, b):
    """Same-padded 3x3 convolution. x: (N,H,W,Ci), w: (3,3,Ci,Co)."""
    n, h, wd, ci = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    # (N,H,W,Ci,3,3) -> (N,H,W,3,3,Ci) so the flattened rows match w's layout
    cols = sliding_window_view(xp, (3, 3), axis=(1, 2)).transpose(0, 1, 2, 4, 5, 3)
    cols = cols.reshape(n * h * wd, 9 * ci)
    out = cols @ w.reshape(9 * ci, -1) + b
    return out.reshape(n, h, wd, -1), cols


def conv3x3_backward(dout, cols, x_shape, w, need_dx=True):
    n, h, wd, ci = x_shape
    co = w.shape[-1]
    d2 = dout.reshape(-1, co)
    dw = (cols.T @ d2).reshape(w.shape)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dw, db
    dxp = np.zeros((n, h + 2, wd + 2, ci), dtype=dout.dtype)
    for i in range(3):
        for j in range(3):
            dxp[:, i : i + h, j : j + wd] += (d2 @ w[i, j].T).reshape(n, h, wd, ci)
    return dxp[:, 1:-1, 1:-1], dw, db


def gelu_forward(z):
    inner = z * z
    inner *= _GELU_C * z
    inner += z
    inner *= _GELU_K
    t = np.tanh(inner, out=inner)
    out = t + 1.0
    out *= z
    out *= 0.5
    return out, t


def gelu_backward(dout, z, t):
    z2 = z * z
    dinner = _GELU_K * (1.0 + 3.0 * _GELU_C * z2)
    local = 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * dinner
    local *= dout
    return local


def maxpool_forward(x):
    n, h, w, c = x.shape
    win = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, h // 2, w // 2, c, 4)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool_backward(dout, idx):
    n, h2, w2, c = dout.shape
    dwin = np.zeros((n, h2, w2, c, 4), dtype=dout.dtype)
    np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
    dwin = dwin.reshape(n, h2, w2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    return dwin.reshape(n, h2 * 2, w2 * 2, c)


def upsample_forward(x):
    return x.repeat(2, axis=1).repeat(2, axis=2)


def upsample_backward(dout):
    n, h, w, c = dout.shape
    return dout.reshape(n, h // 2, 2, w // 2, 2, c).sum(axis=(2, 4))


def conv1x1_forward(x, w, b):
    return x @ w + b


def conv1x1_backward(dout, x, w):
    c_in = x.shape[-1]
    x2 = x.reshape(-1, c_in)
    d2 = dout.reshape(-1, w.shape[1])
    return dout @ w.T, x2.T @ d2, d2.sum(axis=0)


# -- model ------------------------------------------------------------------

@dataclass
class SegModel:
    """Parameter set of the segmentation network plus its architecture description."""

    params: dict[str, np.ndarray]
    in_bands: int = 12
    widths: tuple[int, ...] = (16, 32, 64)
    num_classes: int = NUM_CLASSES
    seed: int = 0
    version: int = field(default=0, compare=False)

    @classmethod
    def init(
        cls,
        in_bands: int = 12,
        widths=(16, 32, 64),
        num_classes: int = NUM_CLASSES,
        seed: int = 0,
        dtype=np.float32,
        zero_head: bool = False,
    ) -> "SegModel":
        """Kaiming-uniform (fan-in) kernels, zero biases."""
        rng = np.random.default_rng(seed)
        widths = tuple(int(w) for w in widths)
        params: dict[str, np.ndarray] = {}

        def kernel(name, shape, fan_in):
            bound = np.sqrt(6.0 / fan_in)
            params[name + ".w"] = rng.uniform(-bound, bound, size=shape).astype(dtype)
            params[name + ".b"] = np.zeros(shape[-1], dtype=dtype)

        c = in_bands
        for lvl, width in enumerate(widths, start=1):
            kernel(f"enc{lvl}", (3, 3, c, width), 9 * c)
            c = width
        for lvl in range(len(widths), 0, -1):
            skip = widths[lvl - 1]
            kernel(f"dec{lvl}", (3, 3, c + skip, skip), 9 * (c + skip))
            c = skip
        kernel("head", (c, num_classes), c)
        if zero_head:
            params["head.w"][:] = 0
        return cls(params, in_bands, widths, num_classes, seed)

    @property
    def levels(self) -> int:
        return len(self.widths)

    @property
    def dtype(self):
        return self.params["head.w"].dtype

    def copy(self) -> "SegModel":
        return SegModel({k: v.copy() for k, v in self.params.items()}, self.in_bands, self.widths,
                        self.num_classes, self.seed)

    def astype(self, dtype) -> "SegModel":
        return SegModel({k: v.astype(dtype) for k, v in self.params.items()}, self.in_bands,
                        self.widths, self.num_classes, self.seed)

    def touch(self) -> None:
        """Mark parameters as modified; invalidates outstanding forward caches."""
        self.version += 1

    def architecture(self) -> dict[str, Any]:
        return {"in_bands": self.in_bands, "widths": list(self.widths), "num_classes": self.num_classes}

    def forward_nhwc(self, x: np.ndarray):
        """Logits (N,H,W,C) for input (N,H,W,B), plus the cache needed by backward."""
        n, h, w, b = x.shape
        step = 2 ** self.levels
        if b != self.in_bands:
            raise ShapeMismatchError(f"model expects {self.in_bands} bands, got {b}")
        if h % step or w % step:
            raise ShapeMismatchError(f"H and W must be divisible by {step}, got {h}x{w}")
        p = self.params
        x = x.astype(self.dtype, copy=False)
        cache: dict[str, Any] = {"version": self.version, "id": id(self.params)}
        a = x
        for lvl in range(1, self.levels + 1):
            z, cols = conv3x3_forward(a, p[f"enc{lvl}.w"], p[f"enc{lvl}.b"])
            e, t = gelu_forward(z)
            pooled, idx = maxpool_forward(e)
            cache[f"enc{lvl}"] = (a.shape, cols, z, t, idx)
            cache[f"skip{lvl}"] = e
            a = pooled
        d = a
        for lvl in range(self.levels, 0, -1):
            u = upsample_forward(d)
            cat = np.concatenate([u, cache[f"skip{lvl}"]], axis=-1)
            z, cols = conv3x3_forward(cat, p[f"dec{lvl}.w"], p[f"dec{lvl}.b"])
            d, t = gelu_forward(z)
            cache[f"dec{lvl}"] = (cat.shape, cols, z, t, u.shape[-1])
        logits = conv1x1_forward(d, p["head.w"], p["head.b"])
        cache["head"] = d
        return logits, cache

    def backward_nhwc(self, cache, dlogits: np.ndarray) -> dict[str, np.ndarray]:
        if cache.get("version") != self.version or cache.get("id") != id(self.params):
            raise StaleCacheError("cache was produced before the last parameter update")
        p = self.params
        grads: dict[str, np.ndarray] = {}
        dlogits = dlogits.astype(self.dtype, copy=False)
        dd, grads["head.w"], grads["head.b"] = conv1x1_backward(dlogits, cache["head"], p["head.w"])
        dskips: dict[int, np.ndarray] = {}
        for lvl in range(1, self.levels + 1):
            cat_shape, cols, z, t, c_up = cache[f"dec{lvl}"]
            dz = gelu_backward(dd, z, t)
            dcat, grads[f"dec{lvl}.w"], grads[f"dec{lvl}.b"] = conv3x3_backward(dz, cols, cat_shape, p[f"dec{lvl}.w"])
            dskips[lvl] = dcat[..., c_up:]
            dd = upsample_backward(dcat[..., :c_up])
        da = dd
        for lvl in range(self.levels, 0, -1):
            in_shape, cols, z, t, idx = cache[f"enc{lvl}"]
            de = maxpool_backward(da, idx) + dskips[lvl]
            dz = gelu_backward(de, z, t)
            da, grads[f"enc{lvl}.w"], grads[f"enc{lvl}.b"] = conv3x3_backward(
                dz, cols, in_shape, p[f"enc{lvl}.w"], need_dx=lvl > 1
            )
        return {k: grads[k] for k in p}


def _to_nhwc(image) -> tuple[np.ndarray, bool]:
    arr = image.bands if hasattr(image, "bands") else np.asarray(image)
    if arr.ndim == 3:
        return arr.transpose(1, 2, 0)[None], True
    if arr.ndim == 4:
        return arr.transpose(0, 2, 3, 1), False
    raise ShapeMismatchError(f"expected B x H x W or N x B x H x W input, got {arr.shape}")


def forward(model: SegModel, image):
    """Logits shaped C x H x W (or N x C x H x W for batched input) and a cache."""
    x, single = _to_nhwc(image)
    logits, cache = model.forward_nhwc(x)
    cache["single"] = single
    out = logits.transpose(0, 3, 1, 2)
    return (out[0] if single else out), cache


def backward(model: SegModel, cache, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    """Parameter gradients given dLoss/dLogits in the layout returned by ``forward``."""
    d = np.asarray(dlogits)
    if cache.get("single"):
        d = d[None]
    return model.backward_nhwc(cache, d.transpose(0, 2, 3, 1))


def softmax(logits: np.ndarray, axis: int = 0) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def predict_proba(model: SegModel, image) -> np.ndarray:
    logits, _ = forward(model, image)
    return softmax(logits.astype(np.float64), axis=-3)


def ema_update(teacher: SegModel, student: SegModel, alpha: float) -> None:
    """teacher <- alpha * teacher + (1 - alpha) * student, in place."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if teacher.params.keys() != student.params.keys():
        raise ShapeMismatchError("teacher and student have different parameter names")
    for name, t in teacher.params.items():
        s = student.params[name]
        if t.shape != s.shape:
            raise ShapeMismatchError(f"{name}: {t.shape} vs {s.shape}")
    for name, t in teacher.params.items():
        s = student.params[name]
        if alpha == 0.0:
            t[...] = s
        elif alpha != 1.0:
            t *= alpha
            t += (1.0 - alpha) * s
    teacher.touch()


# -- checkpoints ------------------------------------------------------------

def save_checkpoint(model: SegModel, directory, iteration: int = 0, extra: dict | None = None) -> Path:
    """JSON manifest plus one little-endian f32 blob holding every named tensor."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensors, chunks, offset = [], [], 0
    for name, arr in model.params.items():
        blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(blob)})
        chunks.append(blob)
        offset += len(blob)
    (directory / "params.bin").write_bytes(b"".join(chunks))
    manifest = {
        "architecture": model.architecture(),
        "seed": model.seed,
        "iteration": int(iteration),
        "dtype": "f32",
        "payload": "params.bin",
        "tensors": tensors,
    }
    if extra:
        manifest.update(extra)
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1))
    return path


def load_checkpoint(directory) -> tuple[SegModel, dict[str, Any]]:
    directory = Path(directory)
    if directory.name == "manifest.json":
        directory = directory.parent
    manifest = json.loads((directory / "manifest.json").read_text())
    raw = (directory / manifest.get("payload", "params.bin")).read_bytes()
    params = {}
    for t in manifest["tensors"]:
        chunk = raw[t["offset"] : t["offset"] + t["nbytes"]]
        params[t["name"]] = np.frombuffer(chunk, dtype="<f4").astype(np.float32).reshape(t["shape"])
    arch = manifest["architecture"]
    model = SegModel(params, arch["in_bands"], tuple(arch["widths"]), arch["num_classes"], manifest.get("seed", 0))
    return model, manifest
