"""Forward pass of the multi-scale pooling block and the two-headed network.

A block pools its [C, H, W] input with stride-1 average pooling at kernel
sizes 1, 3, 5 and 7, concatenates the four results into 4C channels and mixes
them back to C channels with a point-wise (1x1) convolution. Stages are
stacked sequentially; a one-channel segmentation head (logistic) and a
D-channel feature head close the network.

Borders average over in-bounds cells only, so constant inputs stay constant.
Arithmetic is float64 internally, results are float32 tensors.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import EmbeddingMap, Heatmap, Tensor, tensor_read, tensor_write

KERNELS = (1, 3, 5, 7)


class ShapeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FoxBlockWeights:
    weight: np.ndarray  # [C, 4C]
    bias: np.ndarray    # [C]

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float32)
        b = np.asarray(self.bias, dtype=np.float32).reshape(-1)
        if w.ndim != 2 or w.shape[1] != len(KERNELS) * w.shape[0]:
            raise ShapeError(f"block weight must be [C, {len(KERNELS)}C], got {w.shape}")
        if b.shape[0] != w.shape[0]:
            raise ShapeError(f"block bias length {b.shape[0]} != C={w.shape[0]}")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def channels(self) -> int:
        return self.weight.shape[0]


@dataclass(frozen=True, eq=False)
class HeadWeights:
    seg_weight: np.ndarray   # [1, C]
    seg_bias: np.ndarray     # [1]
    feat_weight: np.ndarray  # [D, C]
    feat_bias: np.ndarray    # [D]

    def __post_init__(self):
        for name in ("seg_weight", "feat_weight"):
            w = np.atleast_2d(np.asarray(getattr(self, name), dtype=np.float32))
            object.__setattr__(self, name, w)
        for name in ("seg_bias", "feat_bias"):
            b = np.asarray(getattr(self, name), dtype=np.float32).reshape(-1)
            object.__setattr__(self, name, b)
        if self.seg_weight.shape[0] != 1 or self.seg_bias.shape != (1,):
            raise ShapeError("segmentation head must have exactly one output channel")
        if self.feat_weight.shape[1] != self.seg_weight.shape[1]:
            raise ShapeError("heads disagree on input channel count")
        if self.feat_bias.shape[0] != self.feat_weight.shape[0]:
            raise ShapeError("feature head bias length mismatch")

    @property
    def channels(self) -> int:
        return self.seg_weight.shape[1]

    @property
    def embed_dim(self) -> int:
        return self.feat_weight.shape[0]


def _box_mean_1d(x: np.ndarray, k: int, axis: int) -> np.ndarray:
    # windowed sum via padded cumulative sum, divided by in-bounds count
    r = k // 2
    n = x.shape[axis]
    pad = [(0, 0)] * x.ndim
    pad[axis] = (1, 0)
    cs = np.cumsum(np.pad(x, pad), axis=axis)
    idx = np.arange(n)
    hi = np.minimum(idx + r, n - 1) + 1
    lo = np.maximum(idx - r, 0)
    sums = np.take(cs, hi, axis=axis) - np.take(cs, lo, axis=axis)
    shape = [1] * x.ndim
    shape[axis] = n
    return sums / (hi - lo).reshape(shape)


def _pool64(x: np.ndarray, k: int) -> np.ndarray:
    if k == 1:
        return x
    # the clipped window is a rectangle, so its mean is the mean of row means
    return _box_mean_1d(_box_mean_1d(x, k, axis=-1), k, axis=-2)


def avg_pool_same(feature, k: int) -> Tensor:
    """Stride-1 k x k average pooling over each channel of a [C, H, W] tensor."""
    if k < 1 or k % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 1, got {k}")
    x = np.asarray(feature, dtype=np.float32)
    if x.ndim != 3:
        raise ShapeError(f"expected [C, H, W], got {x.shape}")
    if k == 1:
        return Tensor(x)
    return Tensor(_pool64(x.astype(np.float64), k))


def _pointwise64(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    # explicit channel loop: every pixel sees the same summation order
    w = weight.astype(np.float64)
    out = np.broadcast_to(bias.astype(np.float64)[:, None, None],
                          (w.shape[0],) + x.shape[1:]).copy()
    for i in range(w.shape[1]):
        out += w[:, i, None, None] * x[i]
    return out


def pointwise_conv(x, weight, bias) -> Tensor:
    x = np.asarray(x, dtype=np.float32)
    weight = np.atleast_2d(np.asarray(weight, dtype=np.float32))
    bias = np.asarray(bias, dtype=np.float32).reshape(-1)
    if x.ndim != 3 or weight.shape[1] != x.shape[0] or bias.shape[0] != weight.shape[0]:
        raise ShapeError(f"pointwise conv: input {x.shape}, weight {weight.shape}, bias {bias.shape}")
    return Tensor(_pointwise64(x.astype(np.float64), weight, bias))


def fox_block_forward(feature, w: FoxBlockWeights) -> Tensor:
    x = np.asarray(feature, dtype=np.float32)
    if x.ndim != 3 or x.shape[0] != w.channels:
        raise ShapeError(f"block expects {w.channels} channels, got input {x.shape}")
    x64 = x.astype(np.float64)
    branches = [_pool64(x64, k) for k in KERNELS]
    return Tensor(_pointwise64(np.concatenate(branches, axis=0), w.weight, w.bias))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def network_forward(features, blocks: Sequence[FoxBlockWeights],
                    heads: HeadWeights) -> tuple[Heatmap, EmbeddingMap]:
    s = np.asarray(features, dtype=np.float32)
    if s.ndim != 3:
        raise ShapeError(f"network input must be [C, H, W], got {s.shape}")
    for t, block in enumerate(blocks):
        if block.channels != s.shape[0]:
            raise ShapeError(f"stage {t}: block expects {block.channels} channels, "
                             f"input has {s.shape[0]}")
        s = np.asarray(fox_block_forward(s, block))
    if heads.channels != s.shape[0]:
        raise ShapeError(f"heads: expect {heads.channels} channels, features have {s.shape[0]}")
    s64 = s.astype(np.float64)
    logits = _pointwise64(s64, heads.seg_weight, heads.seg_bias)[0]
    heat = _sigmoid(logits).astype(np.float32)
    feats = _pointwise64(s64, heads.feat_weight, heads.feat_bias).astype(np.float32)
    return Heatmap(heat), EmbeddingMap(feats)


def random_weights(channels: int, embed_dim: int, n_blocks: int,
                   seed: int = 0, scale: float = 0.5) -> tuple[list[FoxBlockWeights], HeadWeights]:
    rng = np.random.default_rng(seed)
    c4 = len(KERNELS) * channels
    blocks = [FoxBlockWeights(rng.normal(0, scale / np.sqrt(c4), (channels, c4)),
                              rng.normal(0, 0.1, channels))
              for _ in range(n_blocks)]
    heads = HeadWeights(rng.normal(0, scale / np.sqrt(channels), (1, channels)),
                        rng.normal(0, 0.1, 1),
                        rng.normal(0, scale / np.sqrt(channels), (embed_dim, channels)),
                        rng.normal(0, 0.1, embed_dim))
    return blocks, heads


def save_weights(directory, blocks: Sequence[FoxBlockWeights], heads: HeadWeights) -> Path:
    """Write every weight as an FXT1 file plus a ``manifest.json`` listing them per stage."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    stages = []
    for t, b in enumerate(blocks):
        entry = {"weight": f"block{t}_weight.fxt", "bias": f"block{t}_bias.fxt"}
        tensor_write(Tensor(b.weight), d / entry["weight"])
        tensor_write(Tensor(b.bias), d / entry["bias"])
        stages.append(entry)
    head_files = {}
    for name in ("seg_weight", "seg_bias", "feat_weight", "feat_bias"):
        head_files[name] = f"head_{name}.fxt"
        tensor_write(Tensor(getattr(heads, name)), d / head_files[name])
    manifest = d / "manifest.json"
    manifest.write_text(json.dumps({"blocks": stages, "heads": head_files}, indent=1))
    return manifest


def load_weights(manifest) -> tuple[list[FoxBlockWeights], HeadWeights]:
    manifest = Path(manifest)
    if manifest.is_dir():
        manifest = manifest / "manifest.json"
    spec = json.loads(manifest.read_text())
    base = manifest.parent

    def load(name):
        return np.asarray(tensor_read(base / os.fspath(name)))

    blocks = [FoxBlockWeights(load(s["weight"]), load(s["bias"])) for s in spec["blocks"]]
    h = spec["heads"]
    heads = HeadWeights(load(h["seg_weight"]), load(h["seg_bias"]),
                        load(h["feat_weight"]), load(h["feat_bias"]))
    return blocks, heads
