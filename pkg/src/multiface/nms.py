"""Local-maximum suppression on a landmark heatmap."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.ndimage import maximum_filter

from .core import EmbeddingMap, Heatmap, LandmarkCandidate, MultifaceError


class DegenerateEmbeddingError(MultifaceError, ValueError):
    pass


@dataclass(frozen=True)
class NmsConfig:
    threshold: float = 0.5
    radius: int = 1

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        if self.radius < 1:
            raise ValueError("radius must be >= 1")


def _values(h) -> np.ndarray:
    return np.asarray(h.values if isinstance(h, Heatmap) else h, dtype=np.float32)


def local_maxima(values: np.ndarray, radius: int,
                 floor: float = -np.inf) -> list[tuple[int, int]]:
    """(y, x) of window maxima after the row-major tie-break, in row-major order.

    A pixel survives when it is >= every in-bounds neighbour within ``radius``
    (Chebyshev) and no earlier survivor with the same value lies in its window.
    Pixels below ``floor`` are dropped first; ties only involve equal values,
    so this does not change which pixels above ``floor`` survive.
    """
    size = 2 * radius + 1
    peak = values >= maximum_filter(values, size=size, mode="constant", cval=-np.inf)
    peak &= values >= floor
    kept: list[tuple[int, int]] = []
    taken: dict[tuple[int, int], float] = {}
    for y, x in zip(*np.nonzero(peak)):
        y, x = int(y), int(x)
        v = values[y, x]
        # equal-valued survivors in the window can only be earlier (row-major)
        clash = any(
            taken.get((yy, xx)) == v
            for yy in range(y - radius, y + 1)
            for xx in range(x - radius, x + radius + 1)
        )
        if not clash:
            kept.append((y, x))
            taken[(y, x)] = v
    return kept


def extract_candidates(h, cfg: NmsConfig = NmsConfig()) -> list[LandmarkCandidate]:
    values = _values(h)
    peaks = local_maxima(values, cfg.radius, floor=cfg.threshold)
    # stable sort keeps row-major order among equal scores
    peaks.sort(key=lambda p: -values[p])
    return [LandmarkCandidate(x, y, float(values[y, x])) for y, x in peaks]


def gather_embeddings(cands: Sequence[LandmarkCandidate], f) -> list[LandmarkCandidate]:
    emb = np.asarray(f.values if isinstance(f, EmbeddingMap) else f, dtype=np.float64)
    out = []
    for c in cands:
        if not (0 <= c.y < emb.shape[1] and 0 <= c.x < emb.shape[2]):
            raise IndexError(f"candidate ({c.x}, {c.y}) outside the embedding map")
        col = emb[:, c.y, c.x]
        norm = np.linalg.norm(col)
        if norm == 0.0:
            raise DegenerateEmbeddingError(f"zero embedding at candidate ({c.x}, {c.y})")
        out.append(LandmarkCandidate(c.x, c.y, c.score, tuple(col / norm)))
    return out


def candidates_to_json(cands: Sequence[LandmarkCandidate]) -> list[dict]:
    return [c.to_json() for c in cands]
