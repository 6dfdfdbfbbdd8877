"""Cosine discriminative loss on pixel embeddings.

Three terms, all built on the cosine distance ``d(a, b) = 1 - a.b / (|a| |b|)``:

* variance: hinge-squared pull of each embedding towards its cluster mean,
  active once ``d(mu_c, x_i) > delta_v``;
* distance: hinge-squared push between every ordered pair of distinct cluster
  means, active while ``d(mu_a, mu_b) < 2 delta_d``;
* regularization: ``(|mu_c| - R)^2``, anchoring cluster means to a sphere.

All math runs in float64. Gradients include the dependence of the cluster
means on the embeddings. The squared hinge is C1, so the derivative at the
hinge boundary is the (zero) one-sided derivative from the active side.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import LossConfig, MultifaceError


class DegenerateClusterError(MultifaceError, ValueError):
    """A zero vector where a direction is needed (zero point or zero cluster mean)."""


class LabeledEmbeddings:
    """N embeddings of dimension D with cluster labels in ``[0, C)``.

    Every cluster must be non-empty and no embedding may be the zero vector.
    """

    def __init__(self, points, labels, n_clusters: int | None = None):
        pts = np.array(points, dtype=np.float64)
        lab = np.array(labels, dtype=np.int64).reshape(-1)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError(f"points must be a non-empty [N, D] array, got {pts.shape}")
        if lab.shape[0] != pts.shape[0]:
            raise ValueError("one label per point required")
        if n_clusters is None:
            n_clusters = int(lab.max()) + 1
        if lab.min() < 0 or lab.max() >= n_clusters:
            raise ValueError(f"labels must lie in [0, {n_clusters})")
        counts = np.bincount(lab, minlength=n_clusters)
        if np.any(counts == 0):
            missing = np.flatnonzero(counts == 0).tolist()
            raise ValueError(f"empty clusters {missing}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain NaN or Inf")
        if np.any(np.linalg.norm(pts, axis=1) == 0.0):
            raise DegenerateClusterError("zero-vector embedding")
        self.points = pts
        self.labels = lab
        self.n_clusters = int(n_clusters)
        self.counts = counts

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def with_points(self, points) -> "LabeledEmbeddings":
        return LabeledEmbeddings(points, self.labels, self.n_clusters)


@dataclass(frozen=True)
class LossBreakdown:
    l_var: float
    l_dist: float
    l_reg: float
    l_fox: float

    def to_json(self) -> dict:
        return {"l_var": self.l_var, "l_dist": self.l_dist,
                "l_reg": self.l_reg, "l_fox": self.l_fox}


def _unit(v: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norm == 0.0):
        raise DegenerateClusterError(f"zero-norm {what}")
    return v / norm, norm


def cosine_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateClusterError("cosine distance undefined for a zero vector")
    sim = float(np.dot(a, b) / (na * nb))
    return 1.0 - min(1.0, max(-1.0, sim))


def cluster_means(e: LabeledEmbeddings) -> np.ndarray:
    """Arithmetic cluster means, shape [C, D]; not renormalized."""
    sums = np.zeros((e.n_clusters, e.dim))
    np.add.at(sums, e.labels, e.points)
    means = sums / e.counts[:, None]
    zero = np.flatnonzero(np.linalg.norm(means, axis=1) == 0.0)
    if zero.size:
        raise DegenerateClusterError(f"cluster {int(zero[0])} has a zero mean")
    return means


def _point_distances(e: LabeledEmbeddings, means: np.ndarray) -> np.ndarray:
    u, _ = _unit(means, "cluster mean")
    v, _ = _unit(e.points, "embedding")
    return 1.0 - np.einsum("nd,nd->n", u[e.labels], v)


def _mean_distances(means: np.ndarray) -> np.ndarray:
    u, _ = _unit(means, "cluster mean")
    return 1.0 - u @ u.T


def variance_term(e: LabeledEmbeddings, means: np.ndarray, delta_v: float) -> float:
    hinge = np.maximum(0.0, _point_distances(e, means) - delta_v)
    per_cluster = np.bincount(e.labels, weights=hinge**2, minlength=e.n_clusters) / e.counts
    return float(per_cluster.sum() / e.n_clusters)


def distance_term(means: np.ndarray, delta_d: float) -> float:
    c = means.shape[0]
    if c < 2:
        return 0.0
    hinge = np.maximum(0.0, 2.0 * delta_d - _mean_distances(means))
    np.fill_diagonal(hinge, 0.0)
    return float((hinge**2).sum() / (c * (c - 1)))


def regularization_term(means: np.ndarray, radius: float) -> float:
    norms = np.linalg.norm(means, axis=1)
    return float(np.mean((norms - radius) ** 2))


def fox_loss(e: LabeledEmbeddings, cfg: LossConfig = LossConfig()) -> LossBreakdown:
    means = cluster_means(e)
    l_var = variance_term(e, means, cfg.delta_v)
    l_dist = distance_term(means, cfg.delta_d)
    l_reg = regularization_term(means, cfg.radius)
    return LossBreakdown(l_var, l_dist, l_reg,
                         cfg.alpha * l_var + cfg.beta * l_dist + cfg.gamma * l_reg)


def fox_loss_grad(e: LabeledEmbeddings, cfg: LossConfig = LossConfig()) -> np.ndarray:
    """Gradient of the weighted loss w.r.t. every embedding, shape [N, D]."""
    means = cluster_means(e)
    c = e.n_clusters
    u, mu_norm = _unit(means, "cluster mean")
    v, x_norm = _unit(e.points, "embedding")
    uc = u[e.labels]
    sim = np.einsum("nd,nd->n", uc, v)

    # variance: d = 1 - u.v; dd/dx = -(u - sim v)/|x|, dd/dmu = -(v - sim u)/|mu|
    hinge = np.maximum(0.0, (1.0 - sim) - cfg.delta_v)
    coef = cfg.alpha * 2.0 * hinge / (c * e.counts[e.labels])
    grad = -(coef / x_norm[:, 0])[:, None] * (uc - sim[:, None] * v)
    g_mu = np.zeros_like(means)
    np.add.at(g_mu, e.labels,
              -(coef[:, None] / mu_norm[e.labels]) * (v - sim[:, None] * uc))

    if c >= 2 and cfg.beta != 0.0:
        s = u @ u.T
        h = np.maximum(0.0, 2.0 * cfg.delta_d - (1.0 - s))
        np.fill_diagonal(h, 0.0)
        # dL/dd_ab = -2 h_ab beta / (C(C-1)); each unordered pair appears twice
        w = -2.0 * cfg.beta * 2.0 * h / (c * (c - 1))
        # dd_ab/dmu_a = -(u_b - s_ab u_a)/|mu_a|
        g_mu += -(w @ u - (w * s).sum(axis=1)[:, None] * u) / mu_norm

    if cfg.gamma != 0.0:
        g_mu += cfg.gamma * 2.0 * (mu_norm - cfg.radius) * u / c

    grad += g_mu[e.labels] / e.counts[e.labels][:, None]
    return grad


def finite_difference_grad(f: Callable[[np.ndarray], float], x: np.ndarray,
                           step: float = 1e-6) -> np.ndarray:
    """Central differences of scalar ``f`` at ``x`` (any shape), float64."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + step
        fp = f(x)
        flat[j] = orig - step
        fm = f(x)
        flat[j] = orig
        gflat[j] = (fp - fm) / (2.0 * step)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-12) -> float:
    """``|a - b| / max(|a|, |b|)`` in the Euclidean norm over all entries."""
    scale = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / scale)


def random_instance(rng: np.random.Generator, n: int = 20, dim: int = 8,
                    n_clusters: int = 3, cfg: LossConfig = LossConfig(),
                    kink_margin: float = 1e-3, max_tries: int = 1000) -> LabeledEmbeddings:
    """Random labeled embeddings whose hinge arguments sit away from zero."""
    if n < n_clusters:
        raise ValueError("need at least one point per cluster")
    for _ in range(max_tries):
        labels = np.concatenate([np.arange(n_clusters),
                                 rng.integers(0, n_clusters, n - n_clusters)])
        rng.shuffle(labels)
        e = LabeledEmbeddings(rng.standard_normal((n, dim)), labels, n_clusters)
        means = cluster_means(e)
        d_pts = _point_distances(e, means)
        d_mu = _mean_distances(means)[np.triu_indices(n_clusters, 1)]
        if (np.all(np.abs(d_pts - cfg.delta_v) > kink_margin)
                and np.all(np.abs(d_mu - 2.0 * cfg.delta_d) > kink_margin)
                and np.all(np.linalg.norm(means, axis=1) > kink_margin)):
            return e
    raise RuntimeError("could not sample an instance away from hinge kinks")


def gradient_check(e: LabeledEmbeddings, cfg: LossConfig = LossConfig(),
                   step: float = 1e-6, grad_fn=None) -> float:
    """Relative error between an analytic gradient and central differences."""
    grad_fn = grad_fn or fox_loss_grad
    analytic = grad_fn(e, cfg)
    numeric = finite_difference_grad(lambda x: fox_loss(e.with_points(x), cfg).l_fox,
                                     e.points, step)
    return relative_error(analytic, numeric)


def pixel_objective(embedding_map, face_mask, cfg: LossConfig = LossConfig()) -> LossBreakdown:
    """Loss over every face pixel; ``face_mask`` holds a face id or -1 (background)."""
    return fox_loss(gather_face_pixels(embedding_map, face_mask), cfg)


def gather_face_pixels(embedding_map, face_mask) -> LabeledEmbeddings:
    """Row-major gather of face-pixel embeddings with their face ids."""
    emb = np.asarray(getattr(embedding_map, "values", embedding_map), dtype=np.float64)
    mask = np.asarray(face_mask)
    if emb.ndim != 3 or mask.shape != emb.shape[1:]:
        raise ValueError(f"mask shape {mask.shape} does not match map {emb.shape}")
    ys, xs = np.nonzero(mask >= 0)
    if ys.size == 0:
        raise ValueError("face mask selects no pixels")
    labels = mask[ys, xs].astype(np.int64)
    n_faces = int(labels.max()) + 1
    missing = sorted(set(range(n_faces)) - set(labels.tolist()))
    if missing:
        raise ValueError(f"face ids {missing} have no pixels")
    return LabeledEmbeddings(emb[:, ys, xs].T, labels, n_faces)
