"""Flat-kernel mean shift on the unit sphere, and a connected-components oracle.

Every point seeds a trajectory ``y <- normalize(mean{p : d(y, p) <= h})`` with
``d`` the cosine distance. Converged modes closer than the merge tolerance are
united (earliest seed's mode survives), points take the nearest surviving
mode, and cluster ids follow first appearance in the input order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import MultifaceError


class ClusteringError(MultifaceError, ValueError):
    pass


@dataclass(frozen=True)
class ClusterConfig:
    bandwidth: float = 1.0
    max_iterations: int = 100
    tolerance: float = 1e-6
    merge_tolerance: Optional[float] = None  # defaults to bandwidth / 2

    def __post_init__(self):
        if not 0.0 < self.bandwidth <= 2.0:
            raise ValueError("bandwidth must lie in (0, 2]")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.merge_tolerance is None:
            object.__setattr__(self, "merge_tolerance", self.bandwidth / 2.0)
        if not 0.0 < self.merge_tolerance <= self.bandwidth:
            raise ValueError("merge_tolerance must lie in (0, bandwidth]")


@dataclass
class ClusterResult:
    labels: np.ndarray
    modes: np.ndarray
    iterations: np.ndarray = field(default=None, repr=False)

    @property
    def n_clusters(self) -> int:
        return self.modes.shape[0]


def _as_unit_points(points) -> np.ndarray:
    p = np.array(points, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] == 0:
        raise ClusteringError("mean shift needs a non-empty [n, D] array of points")
    norms = np.linalg.norm(p, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-5):
        raise ClusteringError("points must be unit-norm")
    return p


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            # smaller index stays root, so the earliest seed represents the set
            self.parent[max(ri, rj)] = min(ri, rj)


def _relabel_by_first_appearance(raw: np.ndarray) -> tuple[np.ndarray, list[int]]:
    order: dict[int, int] = {}
    for r in raw.tolist():
        order.setdefault(r, len(order))
    return np.array([order[r] for r in raw.tolist()], dtype=np.int64), list(order)


def shift_seeds(points: np.ndarray, cfg: ClusterConfig) -> tuple[np.ndarray, np.ndarray]:
    """Run every seed to convergence; returns (modes [n, D], iterations per seed)."""
    h = cfg.bandwidth
    y = points.copy()
    iters = np.zeros(points.shape[0], dtype=np.int64)
    active = np.ones(points.shape[0], dtype=bool)
    for _ in range(cfg.max_iterations):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        ya = y[idx]
        within = (1.0 - ya @ points.T) <= h
        means = (within.astype(np.float64) @ points) / within.sum(axis=1, keepdims=True)
        norms = np.linalg.norm(means, axis=1, keepdims=True)
        if np.any(norms < 1e-12):
            raise ClusteringError("neighbourhood mean is the zero vector")
        new = means / norms
        shift = 1.0 - np.einsum("nd,nd->n", ya, new)
        y[idx] = new
        iters[idx] += 1
        active[idx[shift < cfg.tolerance]] = False
    return y, iters


def mean_shift(points, cfg: ClusterConfig = ClusterConfig()) -> ClusterResult:
    p = _as_unit_points(points)
    n = p.shape[0]
    seeds, iters = shift_seeds(p, cfg)

    uf = UnionFind(n)
    close = (1.0 - seeds @ seeds.T) <= cfg.merge_tolerance
    for i, j in zip(*np.nonzero(np.triu(close, 1))):
        uf.union(int(i), int(j))
    roots = sorted({uf.find(i) for i in range(n)})
    modes = seeds[roots]

    nearest = np.argmax(p @ modes.T, axis=1)  # max similarity == min cosine distance
    labels, first = _relabel_by_first_appearance(nearest)
    return ClusterResult(labels, modes[first], iters)


def oracle_cluster(points, h: float) -> ClusterResult:
    """Connected components of the ``d <= h`` graph, by breadth-first search."""
    p = _as_unit_points(points)
    n = p.shape[0]
    adj = (1.0 - p @ p.T) <= h
    comp = np.full(n, -1, dtype=np.int64)
    k = 0
    for s in range(n):
        if comp[s] >= 0:
            continue
        comp[s] = k
        stack = [s]
        while stack:
            i = stack.pop()
            for j in np.flatnonzero(adj[i] & (comp < 0)):
                comp[j] = k
                stack.append(int(j))
        k += 1
    modes = np.zeros((k, p.shape[1]))
    np.add.at(modes, comp, p)
    norms = np.linalg.norm(modes, axis=1, keepdims=True)
    if np.any(norms < 1e-12):
        raise ClusteringError("component mean is the zero vector")
    return ClusterResult(comp, modes / norms)


def canonical_labels(labels) -> tuple[int, ...]:
    """Rename ids by first appearance so partitions compare with ``==``."""
    return tuple(_relabel_by_first_appearance(np.asarray(labels))[0].tolist())
