"""Runtime scaling of the bottom-up pipeline with the number of faces.

For each face count a scene is synthesized and toy-trained once, then the
three inference stages are timed separately: network forward on a fixed-size
input, heatmap NMS plus embedding gather, and mean-shift grouping. Medians
over repeats (after one discarded warm-up run) are fitted with ordinary least
squares, total_ms ~ intercept + slope * n_faces.
"""

from __future__ import annotations

import csv
import json
import logging
import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .foxblock import network_forward, random_weights
from .meanshift import ClusterConfig
from .nms import NmsConfig, extract_candidates, gather_embeddings
from .pipeline import ToyTrainConfig, generate_scene, group_candidates, train_toy_embeddings

log = logging.getLogger(__name__)

CSV_HEADER = ("n_faces", "forward_ms", "nms_ms", "cluster_ms", "total_ms")

# published GPU figures, printed next to local measurements for context only
PUBLISHED_REFERENCE = {
    "slope_ms_per_face": 2.06,
    "single_face_total_ms": 51.50,
    "parse_ms_at_9_faces": 5.54,
    "cnn_ms_at_9_faces": 52.0,
}


@dataclass
class BenchConfig:
    height: int = 256
    width: int = 256
    landmarks: int = 5
    channels: int = 8
    n_blocks: int = 2
    seed: int = 0
    nms: NmsConfig = field(default_factory=NmsConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    train: ToyTrainConfig = field(default_factory=ToyTrainConfig)
    skip_cluster: bool = False
    # when set, every row reuses a scene with this many faces (constant workload)
    fixed_faces: Optional[int] = None


@dataclass
class BenchRow:
    n_faces: int
    forward_ms: float
    nms_ms: float
    cluster_ms: float
    total_ms: float
    repeats: int
    n_candidates: int = 0


@dataclass
class BenchReport:
    rows: list[BenchRow]
    slope: Optional[float]
    intercept: float
    slope_stderr: Optional[float]

    @property
    def slope_defined(self) -> bool:
        return self.slope is not None

    def summary(self) -> dict:
        return {
            "slope_ms_per_face": self.slope,
            "slope_defined": self.slope_defined,
            "slope_stderr": self.slope_stderr,
            "intercept_ms": self.intercept,
            "rows": [asdict(r) for r in self.rows],
            "published_reference": PUBLISHED_REFERENCE,
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(CSV_HEADER)
            for r in self.rows:
                w.writerow([r.n_faces] + [f"{getattr(r, k):.6f}" for k in CSV_HEADER[1:]])

    def write_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.summary(), f, indent=1)

    def format(self) -> str:
        lines = ["  ".join(f"{h:>10}" for h in CSV_HEADER)]
        for r in self.rows:
            lines.append(f"{r.n_faces:>10}  " + "  ".join(
                f"{getattr(r, k):>10.3f}" for k in CSV_HEADER[1:]))
        if self.slope is None:
            lines.append(f"slope: undefined (single point), intercept {self.intercept:.3f} ms")
        else:
            err = "n/a" if self.slope_stderr is None else f"{self.slope_stderr:.4f}"
            lines.append(f"slope: {self.slope:.4f} ms/face (stderr {err}), "
                         f"intercept {self.intercept:.3f} ms")
        ref = PUBLISHED_REFERENCE
        lines.append(f"published GPU reference: slope {ref['slope_ms_per_face']} ms/face, "
                     f"single face {ref['single_face_total_ms']} ms, "
                     f"parse {ref['parse_ms_at_9_faces']} ms vs CNN {ref['cnn_ms_at_9_faces']} ms "
                     "at 9 faces")
        return "\n".join(lines)


def fit_line(n: Sequence[float], y: Sequence[float]) -> tuple[Optional[float], float, Optional[float]]:
    """OLS (slope, intercept, slope stderr); slope is None below two distinct x values."""
    if len(set(n)) < 2:
        return None, float(np.mean(y)), None
    res = stats.linregress(n, y)
    stderr = float(res.stderr) if len(n) > 2 else None
    return float(res.slope), float(res.intercept), stderr


def _features(scene, channels: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    feats = rng.standard_normal((channels, scene.heatmap.height, scene.heatmap.width))
    feats[0] = scene.heatmap.values
    return feats.astype(np.float32)


def _ms(t0: int, t1: int) -> float:
    return (t1 - t0) / 1e6


def time_stages(scene, emb, weights, cfg: BenchConfig) -> tuple[float, float, float, float, int]:
    blocks, heads = weights
    feats = _features(scene, cfg.channels, cfg.seed)
    t0 = time.perf_counter_ns()
    network_forward(feats, blocks, heads)
    t1 = time.perf_counter_ns()
    cands = gather_embeddings(extract_candidates(scene.heatmap, cfg.nms), emb)
    t2 = time.perf_counter_ns()
    if cands and not cfg.skip_cluster:
        group_candidates(cands, cfg.cluster)
    t3 = time.perf_counter_ns()
    return _ms(t0, t1), _ms(t1, t2), _ms(t2, t3), _ms(t0, t3), len(cands)


def run_scaling(face_counts: Sequence[int], repeats: int = 5,
                cfg: Optional[BenchConfig] = None) -> BenchReport:
    if repeats < 3:
        raise ValueError("repeats must be >= 3")
    if not face_counts:
        raise ValueError("face_counts must be non-empty")
    cfg = cfg or BenchConfig()
    weights = random_weights(cfg.channels, cfg.train.embed_dim, cfg.n_blocks, seed=cfg.seed)
    cache = {}
    rows = []
    for n in face_counts:
        faces = n if cfg.fixed_faces is None else cfg.fixed_faces
        if faces not in cache:
            scene = generate_scene(faces, cfg.landmarks, cfg.height, cfg.width, seed=cfg.seed)
            cache[faces] = (scene, train_toy_embeddings(scene, cfg.train))
        scene, emb = cache[faces]
        time_stages(scene, emb, weights, cfg)  # warm-up
        samples = [time_stages(scene, emb, weights, cfg) for _ in range(repeats)]
        med = [statistics.median(s[i] for s in samples) for i in range(4)]
        row = BenchRow(n, *med, repeats=repeats, n_candidates=samples[0][4])
        log.info("n=%d forward=%.3f nms=%.3f cluster=%.3f total=%.3f ms",
                 n, *med)
        rows.append(row)
    slope, intercept, stderr = fit_line([r.n_faces for r in rows], [r.total_ms for r in rows])
    if slope is None:
        intercept = rows[0].total_ms if len(rows) == 1 else intercept
    return BenchReport(rows, slope, intercept, stderr)
