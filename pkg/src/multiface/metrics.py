"""Landmark NME and face-detection F1 over parsed face groups."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import FaceGroup, SceneAnnotation


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple[tuple[int, int], ...]          # (pred index, gt index)
    unmatched_pred: tuple[int, ...]
    unmatched_gt: tuple[int, ...]
    costs: tuple[float, ...] = ()               # mean landmark distance per pair


def bbox_diagonal(landmarks) -> float:
    pts = np.asarray(landmarks, dtype=np.float64)
    extent = pts.max(axis=0) - pts.min(axis=0)
    return float(np.hypot(*extent))


def assign_landmarks(pred_xy, gt_xy) -> np.ndarray:
    """For each gt landmark, the nearest predicted landmark (ties: lowest index)."""
    pred = np.asarray(pred_xy, dtype=np.float64)
    gt = np.asarray(gt_xy, dtype=np.float64)
    d = np.linalg.norm(gt[:, None, :] - pred[None, :, :], axis=2)
    return pred[np.argmin(d, axis=1)]


def pair_cost(group: FaceGroup, gt_face) -> float:
    gt = np.asarray(gt_face, dtype=np.float64)
    aligned = assign_landmarks(group.xy(), gt)
    return float(np.mean(np.linalg.norm(aligned - gt, axis=1)))


def match_faces(pred: Sequence[FaceGroup], gt: SceneAnnotation,
                accept_frac: float = 0.5) -> MatchResult:
    """Greedy one-to-one matching by ascending mean landmark distance.

    A (pred, gt) pair is eligible when its mean distance, after assigning each
    gt landmark its nearest predicted landmark, is at most ``accept_frac``
    times the gt face's bounding-box diagonal.
    """
    eligible = []
    for gi, face in enumerate(gt.faces):
        limit = accept_frac * bbox_diagonal(face)
        for pi, group in enumerate(pred):
            cost = pair_cost(group, face)
            if cost <= limit:
                eligible.append((cost, pi, gi))
    eligible.sort()
    used_p, used_g = set(), set()
    pairs, costs = [], []
    for cost, pi, gi in eligible:
        if pi in used_p or gi in used_g:
            continue
        used_p.add(pi)
        used_g.add(gi)
        pairs.append((pi, gi))
        costs.append(cost)
    return MatchResult(
        tuple(pairs),
        tuple(i for i in range(len(pred)) if i not in used_p),
        tuple(i for i in range(len(gt.faces)) if i not in used_g),
        tuple(costs),
    )


def nme(pred_landmarks, gt_landmarks, normalizer: Optional[float] = None) -> float:
    """Mean landmark error in percent of ``normalizer`` (default: gt bbox diagonal)."""
    pred = np.asarray(pred_landmarks, dtype=np.float64)
    gt = np.asarray(gt_landmarks, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"landmark count mismatch: {pred.shape} vs {gt.shape}")
    if normalizer is None:
        normalizer = bbox_diagonal(gt)
    if normalizer <= 0:
        raise ValueError("normalizer must be positive")
    return float(100.0 * np.mean(np.linalg.norm(pred - gt, axis=1)) / normalizer)


def f1_detection(m: MatchResult) -> float:
    tp = len(m.pairs)
    denom = 2 * tp + len(m.unmatched_pred) + len(m.unmatched_gt)
    if denom == 0:
        return 1.0
    return 2.0 * tp / denom


def evaluate(pred: Sequence[FaceGroup], gt: SceneAnnotation,
             accept_frac: float = 0.5) -> dict:
    """JSON-ready report: mean NME over matched pairs, detection F1, the pairs."""
    m = match_faces(pred, gt, accept_frac)
    per_pair = []
    for pi, gi in m.pairs:
        face = gt.faces[gi]
        aligned = assign_landmarks(pred[pi].xy(), face)
        per_pair.append({"pred": pi, "gt": gi, "nme_percent": nme(aligned, face)})
    return {
        "nme_percent": float(np.mean([p["nme_percent"] for p in per_pair])) if per_pair else None,
        "f1": f1_detection(m),
        "pairs": per_pair,
        "unmatched_pred": list(m.unmatched_pred),
        "unmatched_gt": list(m.unmatched_gt),
    }


def write_report(report: dict, path) -> None:
    with open(path, "w") as f:
        json.dump(report, f, indent=1)
