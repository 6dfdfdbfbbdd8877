"""Shared domain types and on-disk formats.

Tensors are stored in the FXT1 binary format::

    bytes 0-3   ASCII "FXT1"
    bytes 4-7   uint32 LE ndim
    ...         ndim x uint32 LE dims
    ...         prod(dims) x float32 LE, row-major

Annotations are JSON objects ``{"height": H, "width": W, "faces": [[[x, y], ...], ...]}``.
Coordinates are (x = column, y = row) with the origin at the top-left.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

MAGIC = b"FXT1"


class MultifaceError(Exception):
    """Base class for all errors raised by this package."""


class TensorFormatError(MultifaceError):
    pass


class BadMagicError(TensorFormatError):
    pass


class TruncatedTensorError(TensorFormatError):
    pass


class NonFiniteError(TensorFormatError, ValueError):
    pass


class AnnotationError(MultifaceError, ValueError):
    pass


class Tensor:
    """Immutable dense float32 array, row-major.

    ``Tensor(data)`` takes any array-like; ``Tensor(flat, dims)`` reshapes a flat
    sequence. NaN/Inf and dims/length mismatches are rejected.
    """

    __slots__ = ("_array",)

    def __init__(self, data, dims: Optional[Sequence[int]] = None):
        arr = np.array(data, dtype=np.float32)
        if dims is not None:
            dims = tuple(int(d) for d in dims)
            if any(d < 1 for d in dims):
                raise ValueError(f"dims must be positive, got {dims}")
            if arr.size != math.prod(dims):
                raise ValueError(f"data length {arr.size} does not match dims {dims}")
            arr = arr.reshape(dims)
        if arr.ndim == 0 or any(d < 1 for d in arr.shape):
            raise ValueError(f"tensor needs positive dims, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor contains NaN or Inf")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        self._array = arr

    @property
    def dims(self) -> tuple[int, ...]:
        return self._array.shape

    shape = dims

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the values."""
        return self._array.reshape(-1)

    @property
    def array(self) -> np.ndarray:
        return self._array

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._array
        return self._array.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.dims == other.dims and self._array.tobytes() == other._array.tobytes()

    def __hash__(self):
        return hash((self.dims, self._array.tobytes()))

    def __repr__(self):
        return f"Tensor(dims={list(self.dims)})"


def tensor_write(t: Tensor, path) -> None:
    arr = np.asarray(t, dtype=np.float32)
    header = MAGIC + struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape)
    try:
        with open(path, "wb") as f:
            f.write(header)
            f.write(arr.astype("<f4", copy=False).tobytes(order="C"))
    except OSError as exc:
        raise OSError(f"cannot write tensor to {os.fspath(path)!r}: {exc}") from exc


def tensor_read(path) -> Tensor:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise BadMagicError(f"{os.fspath(path)!r}: bad magic {raw[:4]!r}")
    if len(raw) < 8:
        raise TruncatedTensorError(f"{os.fspath(path)!r}: missing ndim")
    (ndim,) = struct.unpack_from("<I", raw, 4)
    offset = 8 + 4 * ndim
    if ndim == 0 or len(raw) < offset:
        raise TruncatedTensorError(f"{os.fspath(path)!r}: bad or truncated dims header")
    dims = struct.unpack_from(f"<{ndim}I", raw, 8)
    if any(d == 0 for d in dims):
        raise TensorFormatError(f"{os.fspath(path)!r}: zero dimension in {dims}")
    n = math.prod(dims)
    payload = raw[offset:]
    if len(payload) != 4 * n:
        raise TruncatedTensorError(
            f"{os.fspath(path)!r}: payload has {len(payload)} bytes, expected {4 * n}"
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(dims)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{os.fspath(path)!r}: payload contains NaN or Inf")
    return Tensor(arr)


@dataclass(frozen=True, eq=False)
class Heatmap:
    """Segmentation output, values in [0, 1], shape [H, W]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float32)
        if v.ndim != 2 or v.size == 0:
            raise ValueError(f"heatmap must be a non-empty 2-D array, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise NonFiniteError("heatmap contains NaN or Inf")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("heatmap values must lie in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def to_tensor(self) -> Tensor:
        return Tensor(self.values)

    @classmethod
    def from_tensor(cls, t) -> "Heatmap":
        arr = np.asarray(t)
        if arr.ndim == 3 and arr.shape[0] == 1:
            arr = arr[0]
        return cls(arr)


@dataclass(frozen=True, eq=False)
class EmbeddingMap:
    """Feature output, shape [D, H, W] with D >= 2."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float32)
        if v.ndim != 3 or v.size == 0:
            raise ValueError(f"embedding map must be a non-empty [D, H, W] array, got {v.shape}")
        if v.shape[0] < 2:
            raise ValueError(f"embedding dim must be >= 2, got {v.shape[0]}")
        if not np.all(np.isfinite(v)):
            raise NonFiniteError("embedding map contains NaN or Inf")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    def to_tensor(self) -> Tensor:
        return Tensor(self.values)

    @classmethod
    def from_tensor(cls, t) -> "EmbeddingMap":
        return cls(np.asarray(t))


@dataclass(frozen=True)
class LandmarkCandidate:
    x: int
    y: int
    score: float
    embedding: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.x < 0 or self.y < 0:
            raise ValueError(f"negative pixel coordinate ({self.x}, {self.y})")
        if self.embedding is not None:
            emb = tuple(float(v) for v in self.embedding)
            if abs(math.sqrt(sum(v * v for v in emb)) - 1.0) >= 1e-5:
                raise ValueError("candidate embedding must be unit-norm")
            object.__setattr__(self, "embedding", emb)

    def to_json(self) -> dict:
        d = {"x": self.x, "y": self.y, "score": self.score}
        if self.embedding is not None:
            d["embedding"] = list(self.embedding)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "LandmarkCandidate":
        emb = d.get("embedding")
        return cls(int(d["x"]), int(d["y"]), float(d["score"]),
                   tuple(emb) if emb is not None else None)


@dataclass(frozen=True)
class FaceGroup:
    cluster_id: int
    landmarks: tuple[LandmarkCandidate, ...]
    mode: tuple[float, ...]

    def __post_init__(self):
        if self.cluster_id < 0:
            raise ValueError("cluster_id must be non-negative")
        if not self.landmarks:
            raise ValueError("a face group needs at least one landmark")
        object.__setattr__(self, "landmarks", tuple(self.landmarks))
        object.__setattr__(self, "mode", tuple(float(v) for v in self.mode))

    def xy(self) -> np.ndarray:
        return np.array([[c.x, c.y] for c in self.landmarks], dtype=np.float64)

    def to_json(self) -> dict:
        return {
            "cluster_id": self.cluster_id,
            "mode": list(self.mode),
            "landmarks": [c.to_json() for c in self.landmarks],
        }

    @classmethod
    def from_json(cls, d: dict) -> "FaceGroup":
        return cls(int(d["cluster_id"]),
                   tuple(LandmarkCandidate.from_json(c) for c in d["landmarks"]),
                   tuple(d["mode"]))


def write_groups(groups: Sequence[FaceGroup], path) -> None:
    with open(path, "w") as f:
        json.dump([g.to_json() for g in groups], f, indent=1)


def read_groups(path) -> list[FaceGroup]:
    with open(path) as f:
        return [FaceGroup.from_json(d) for d in json.load(f)]


@dataclass(frozen=True)
class LossConfig:
    """Weights and margins of the cosine discriminative loss.

    Margins are in cosine-distance units. ``radius`` is the target norm of the
    cluster means.
    """

    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.001
    delta_v: float = 1.0
    delta_d: float = 1.0
    radius: float = 1.0
    embed_dim: int = 8

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.delta_v < 0 or self.delta_d < 0:
            raise ValueError("margins must be non-negative")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.embed_dim < 2:
            raise ValueError("embed_dim must be >= 2")


@dataclass(frozen=True)
class SceneAnnotation:
    height: int
    width: int
    faces: tuple[tuple[tuple[int, int], ...], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise AnnotationError("image size must be positive")
        faces = tuple(tuple((int(x), int(y)) for x, y in face) for face in self.faces)
        lengths = {len(f) for f in faces}
        if len(lengths) > 1:
            raise AnnotationError(f"faces have differing landmark counts {sorted(lengths)}")
        if 0 in lengths:
            raise AnnotationError("face with no landmarks")
        for i, face in enumerate(faces):
            for x, y in face:
                if not (0 <= x < self.width and 0 <= y < self.height):
                    raise AnnotationError(
                        f"face {i}: landmark ({x}, {y}) outside {self.width}x{self.height} image"
                    )
        object.__setattr__(self, "faces", faces)

    @property
    def n_landmarks(self) -> int:
        return len(self.faces[0]) if self.faces else 0

    def to_json(self) -> dict:
        return {
            "height": self.height,
            "width": self.width,
            "faces": [[[x, y] for x, y in face] for face in self.faces],
        }

    @classmethod
    def from_json(cls, d) -> "SceneAnnotation":
        try:
            h, w, faces = d["height"], d["width"], d["faces"]
        except (KeyError, TypeError) as exc:
            raise AnnotationError(f"annotation missing field: {exc}") from exc
        if not isinstance(h, int) or not isinstance(w, int) or not isinstance(faces, list):
            raise AnnotationError("height/width must be ints and faces a list")
        for face in faces:
            if not isinstance(face, list) or any(
                not isinstance(p, list) or len(p) != 2 or not all(isinstance(v, int) for v in p)
                for p in face
            ):
                raise AnnotationError("each face must be a list of [x, y] integer pairs")
        return cls(h, w, faces)


def annotation_write(a: SceneAnnotation, path) -> None:
    with open(path, "w") as f:
        json.dump(a.to_json(), f)


def annotation_read(path) -> SceneAnnotation:
    with open(path) as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as exc:
            raise AnnotationError(f"{os.fspath(path)!r}: invalid JSON: {exc}") from exc
    return SceneAnnotation.from_json(d)
