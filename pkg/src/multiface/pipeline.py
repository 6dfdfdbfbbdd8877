"""Synthetic scenes, toy embedding training and end-to-end face parsing."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import (EmbeddingMap, FaceGroup, Heatmap, LossConfig, MultifaceError,
                   SceneAnnotation, Tensor, annotation_read, annotation_write,
                   tensor_read, tensor_write)
from .loss import (DegenerateClusterError, LabeledEmbeddings, LossBreakdown,
                   fox_loss, fox_loss_grad, gather_face_pixels)
from .meanshift import ClusterConfig, mean_shift
from .nms import NmsConfig, extract_candidates, gather_embeddings

SIGMA = 1.5
DISK_RADIUS = 2
BACKGROUND = -1


class PlacementError(MultifaceError):
    pass


class TrainingError(MultifaceError):
    pass


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    heatmap: Heatmap
    face_mask: np.ndarray  # int32 [H, W], BACKGROUND or face id
    annotation: SceneAnnotation
    seed: int

    @property
    def n_faces(self) -> int:
        return len(self.annotation.faces)

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        tensor_write(self.heatmap.to_tensor(), d / "heatmap.fxt")
        tensor_write(Tensor(self.face_mask.astype(np.float32)), d / "mask.fxt")
        annotation_write(self.annotation, d / "annotation.json")
        (d / "scene.json").write_text(json.dumps({"seed": self.seed}))

    @classmethod
    def load(cls, directory) -> "SyntheticScene":
        d = Path(directory)
        meta = json.loads((d / "scene.json").read_text())
        return cls(Heatmap.from_tensor(tensor_read(d / "heatmap.fxt")),
                   np.asarray(tensor_read(d / "mask.fxt")).astype(np.int32),
                   annotation_read(d / "annotation.json"),
                   int(meta["seed"]))


def face_radius(k: int) -> int:
    """Landmark ring radius keeping neighbouring landmarks ~6 px apart."""
    return max(6, math.ceil(3.0 * k / math.pi))


def generate_scene(n_faces: int, k: int = 5, height: int = 64, width: int = 64,
                   seed: int = 0, max_attempts: int = 10_000) -> SyntheticScene:
    """Place ``n_faces`` faces of ``k`` ring-shaped landmarks without overlap.

    The heatmap is the pixelwise max of unit-peak Gaussians (sigma 1.5 px) at
    the landmarks; the mask labels radius-2 disks around each landmark.
    """
    if n_faces < 0 or k < 1:
        raise ValueError("need n_faces >= 0 and k >= 1")
    rng = np.random.default_rng(seed)
    rf = face_radius(k)
    margin = rf + DISK_RADIUS + 2
    min_sep = 2 * rf + 2 * DISK_RADIUS + 4
    if n_faces and (width <= 2 * margin or height <= 2 * margin):
        raise PlacementError(f"{width}x{height} image too small for a face of radius {rf}; "
                             "use a larger height/width")
    centers: list[np.ndarray] = []
    attempts = 0
    while len(centers) < n_faces:
        attempts += 1
        if attempts > max_attempts:
            raise PlacementError(f"could not place {n_faces} faces in {width}x{height} after "
                                 f"{max_attempts} attempts; use a larger height/width")
        c = np.array([rng.uniform(margin, width - 1 - margin),
                      rng.uniform(margin, height - 1 - margin)])
        if all(np.hypot(*(c - o)) >= min_sep for o in centers):
            centers.append(c)

    faces = []
    for c in centers:
        phase = rng.uniform(0, 2 * np.pi)
        ang = phase + 2 * np.pi * np.arange(k) / k
        pts = c + rf * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        faces.append([(int(round(x)), int(round(y))) for x, y in pts])
    annotation = SceneAnnotation(height, width, faces)

    yy, xx = np.mgrid[0:height, 0:width]
    heat = np.zeros((height, width))
    mask = np.full((height, width), BACKGROUND, dtype=np.int32)
    for fid, face in enumerate(annotation.faces):
        for x, y in face:
            d2 = (xx - x) ** 2 + (yy - y) ** 2
            np.maximum(heat, np.exp(-d2 / (2 * SIGMA**2)), out=heat)
            mask[d2 <= DISK_RADIUS**2] = fid
    return SyntheticScene(Heatmap(heat.astype(np.float32)), mask, annotation, seed)


@dataclass(frozen=True)
class ToyTrainConfig:
    steps: int = 500
    learning_rate: float = 0.1
    loss: LossConfig = field(default_factory=LossConfig)
    embed_dim: int = 8
    seed: int = 0
    # std of the Gaussian init; at std 1 the 1/N_c-scaled per-pixel gradients
    # barely move the embeddings in 500 steps and faces do not separate
    init_scale: float = 0.01

    def __post_init__(self):
        if self.init_scale <= 0:
            raise ValueError("init_scale must be positive")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.embed_dim < 2:
            raise ValueError("embed_dim must be >= 2")


def train_toy_embeddings(scene: SyntheticScene, cfg: ToyTrainConfig = ToyTrainConfig(),
                         trace: Optional[list[LossBreakdown]] = None) -> EmbeddingMap:
    """Gradient descent on free per-pixel embeddings of the face pixels.

    ``trace``, when given, receives the loss before every step and after the last.
    Background pixels come back as zero vectors.
    """
    mask = scene.face_mask
    h, w = mask.shape
    ys, xs = np.nonzero(mask >= 0)
    if ys.size == 0:
        raise TrainingError("scene has no face pixels")
    rng = np.random.default_rng(cfg.seed)
    emb = np.zeros((cfg.embed_dim, h, w))
    emb[:, ys, xs] = cfg.init_scale * rng.standard_normal((cfg.embed_dim, ys.size))

    e = gather_face_pixels(emb, mask)
    x = e.points
    for step in range(cfg.steps + 1):
        try:
            cur = e.with_points(x)
            if trace is not None:
                trace.append(fox_loss(cur, cfg.loss))
            if step == cfg.steps:
                break
            x = x - cfg.learning_rate * fox_loss_grad(cur, cfg.loss)
        except DegenerateClusterError as exc:
            raise TrainingError(f"degenerate cluster at step {step}: {exc}") from exc
    emb[:, ys, xs] = x.T
    return EmbeddingMap(emb.astype(np.float32))


def parse_faces(h, f, nms_cfg: NmsConfig = NmsConfig(),
                cluster_cfg: ClusterConfig = ClusterConfig()) -> list[FaceGroup]:
    """Heatmap peaks -> unit embeddings -> mean shift -> one group per cluster."""
    heat = h if isinstance(h, Heatmap) else Heatmap(np.asarray(h))
    emb = f if isinstance(f, EmbeddingMap) else EmbeddingMap(np.asarray(f))
    if (heat.height, heat.width) != (emb.height, emb.width):
        raise ValueError(f"heatmap {heat.height}x{heat.width} and embedding map "
                         f"{emb.height}x{emb.width} differ in size")
    cands = gather_embeddings(extract_candidates(heat, nms_cfg), emb)
    if not cands:
        return []
    return group_candidates(cands, cluster_cfg)


def group_candidates(cands, cluster_cfg: ClusterConfig = ClusterConfig()) -> list[FaceGroup]:
    result = mean_shift(np.array([c.embedding for c in cands]), cluster_cfg)
    groups = []
    for cid in range(result.n_clusters):
        members = [c for c, lab in zip(cands, result.labels) if lab == cid]
        members.sort(key=lambda c: -c.score)
        groups.append(FaceGroup(cid, tuple(members), tuple(result.modes[cid])))
    return groups


def mask_agreement(groups: list[FaceGroup], face_mask: np.ndarray) -> bool:
    """True when groups and mask face ids induce the same partition of the candidates."""
    g2f: dict[int, int] = {}
    f2g: dict[int, int] = {}
    for g in groups:
        for c in g.landmarks:
            fid = int(face_mask[c.y, c.x])
            if fid < 0:
                return False
            if g2f.setdefault(g.cluster_id, fid) != fid or f2g.setdefault(fid, g.cluster_id) != g.cluster_id:
                return False
    return True
