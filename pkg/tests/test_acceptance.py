"""Acceptance criteria, each run at its stated tolerance.

Every test prints one PASS/FAIL line; the lines are collected again in the
terminal summary. Run with ``pytest tests/test_acceptance.py``.
"""

import csv
import time

import numpy as np

import oracles
from multiface.bench import CSV_HEADER, BenchConfig, run_scaling
from multiface.core import FaceGroup, Heatmap, LandmarkCandidate, LossConfig
from multiface.foxblock import FoxBlockWeights, avg_pool_same, fox_block_forward
from multiface.loss import LabeledEmbeddings, fox_loss, gradient_check, random_instance
from multiface.meanshift import ClusterConfig, canonical_labels, mean_shift, oracle_cluster
from multiface.metrics import MatchResult, evaluate, f1_detection, nme
from multiface.nms import NmsConfig, extract_candidates
from multiface.pipeline import (ToyTrainConfig, generate_scene, mask_agreement, parse_faces,
                                train_toy_embeddings)
from test_meanshift import separable_instance

DEFAULTS = LossConfig(alpha=1.0, beta=1.0, gamma=0.001, delta_v=1.0, delta_d=1.0, radius=1.0)


def test_gradient_correctness(criterion):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    errors = [gradient_check(random_instance(rng, 20, 8, 3, DEFAULTS), DEFAULTS, 1e-6)
              for _ in range(100)]
    elapsed = time.perf_counter() - t0
    worst = max(errors)
    criterion("gradient correctness", worst < 1e-5 and elapsed < 10.0,
              f"100 instances, max relative error {worst:.2e} (< 1e-5), {elapsed:.2f} s (< 10 s)")


def _separated(rng, n_clusters, dim, per_cluster, radius):
    # means at +-radius * e_k; symmetric +-offsets keep each mean exact
    pts, labels = [], []
    for c in range(n_clusters):
        axis = np.zeros(dim)
        axis[c // 2] = radius * (1 if c % 2 == 0 else -1)
        for _ in range(per_cluster):
            off = np.zeros(dim)
            off[dim - 1] = rng.uniform(0, 0.3 * radius)
            pts += [axis + off, axis - off]
            labels += [c, c]
    return LabeledEmbeddings(np.array(pts), np.array(labels), n_clusters)


def test_loss_zero_point(criterion):
    rng = np.random.default_rng(7)
    worst = 0.0
    for trial in range(20):
        e = _separated(rng, 2, int(rng.integers(2, 9)), int(rng.integers(1, 6)), 1.0)
        worst = max(worst, fox_loss(e, DEFAULTS).l_fox)
    criterion("loss zero-point", worst < 1e-10,
              f"20 antipodal tight configurations, max l_fox {worst:.1e} (< 1e-10)")


def test_toy_separation(criterion):
    t0 = time.perf_counter()
    ok = []
    for seed in range(10):
        scene = generate_scene(3, 5, 64, 64, seed=seed)
        emb = train_toy_embeddings(scene, ToyTrainConfig(steps=500, learning_rate=0.1,
                                                         embed_dim=8, seed=seed))
        groups = parse_faces(scene.heatmap, emb)
        ok.append(len(groups) == 3 and mask_agreement(groups, scene.face_mask))
    elapsed = time.perf_counter() - t0
    criterion("toy separation", sum(ok) >= 9 and elapsed < 60.0,
              f"{sum(ok)}/10 seeds give 3 mask-consistent groups (>= 9), "
              f"{elapsed:.1f} s (< 60 s)")


def test_mean_shift_oracle_equivalence(criterion):
    rng = np.random.default_rng(99)
    agree = 0
    total = 250
    for _ in range(total):
        h = float(rng.uniform(0.05, 0.3))
        p, _ = separable_instance(rng, h, h / 2)
        got = mean_shift(p, ClusterConfig(bandwidth=h)).labels
        agree += canonical_labels(got) == canonical_labels(oracle_cluster(p, h).labels)
    criterion("mean-shift oracle equivalence", agree == total,
              f"{agree}/{total} separable instances agree with the oracle (100%)")


def test_fox_block_invariants(criterion):
    rng = np.random.default_rng(5)
    identity = shape = constant = True
    worst = 0.0
    for _ in range(50):
        c, h, w = (int(v) for v in rng.integers(1, 6, 3))
        x = rng.standard_normal((c, h, w)).astype(np.float32)
        blk = FoxBlockWeights(rng.standard_normal((c, 4 * c)), rng.standard_normal(c))
        identity &= np.asarray(avg_pool_same(x, 1)).tobytes() == x.tobytes()
        out = fox_block_forward(x, blk)
        shape &= out.dims == x.shape
        const = np.full((c, h, w), rng.uniform(-2, 2), dtype=np.float32)
        for k in (3, 5, 7):
            constant &= bool(np.all(np.asarray(avg_pool_same(const, k)) == const))
        y = np.asarray(fox_block_forward(const, blk))
        constant &= bool(np.all(y == y[:, :1, :1]))
        ref = oracles.fox_block_naive(x.astype(np.float64).tolist(),
                                      blk.weight.astype(np.float64).tolist(),
                                      blk.bias.astype(np.float64).tolist())
        worst = max(worst, float(np.abs(np.asarray(out, dtype=np.float64) - ref).max()))
    criterion("fox block invariants", identity and shape and constant and worst <= 1e-5,
              f"k=1 identity {identity}, shapes {shape}, constants exact {constant}, "
              f"oracle max error {worst:.1e} over 50 inputs (<= 1e-5)")


def test_nms_properties(criterion):
    rng = np.random.default_rng(11)
    n = 150
    mono = sound = det = 0
    for _ in range(n):
        hh, ww = (int(v) for v in rng.integers(1, 24, 2))
        v = rng.uniform(size=(hh, ww))
        if rng.uniform() < 0.5:
            v = np.round(v * rng.integers(2, 8)) / 8  # plateaus
        v = v.astype(np.float32)
        r = int(rng.integers(1, 4))
        t1, t2 = sorted(rng.uniform(size=2))
        lo = {(c.x, c.y) for c in extract_candidates(Heatmap(v), NmsConfig(t1, r))}
        hi = {(c.x, c.y) for c in extract_candidates(Heatmap(v), NmsConfig(t2, r))}
        mono += hi <= lo
        cands = extract_candidates(Heatmap(v), NmsConfig(t1, r))
        ok = all(max(abs(a.x - b.x), abs(a.y - b.y)) > r
                 for i, a in enumerate(cands) for b in cands[i + 1:])
        for c in cands:
            win = v[max(0, c.y - r):c.y + r + 1, max(0, c.x - r):c.x + r + 1]
            ok &= c.score >= t1 and c.score >= win.max()
        sound += ok
        det += cands == extract_candidates(Heatmap(v.copy()), NmsConfig(t1, r))
    criterion("nms properties", mono == sound == det == n,
              f"threshold monotone {mono}/{n}, suppression sound {sound}/{n}, "
              f"deterministic {det}/{n}")


def test_scaling_shape(criterion, tmp_path):
    report = run_scaling([1, 2, 4, 8, 16], repeats=5, cfg=BenchConfig(height=256, width=256))
    path = tmp_path / "scaling.csv"
    report.write_csv(path)
    rows = list(csv.reader(open(path)))
    fwd = np.array([r.forward_ms for r in report.rows])
    cv = float(fwd.std() / fwd.mean())
    by_n = {r.n_faces: r for r in report.rows}
    ratio = by_n[16].cluster_ms / by_n[2].cluster_ms
    print(report.format())
    criterion("scaling shape", cv < 0.15 and ratio <= 16.0 and tuple(rows[0]) == CSV_HEADER
              and len(rows) == 6,
              f"forward CV {cv:.1%} (< 15%), cluster n=16/n=2 ratio {ratio:.2f} (<= 16), "
              f"CSV with {len(rows) - 1} rows, slope {report.slope:.3f} ms/face")


def _groups_from(annotation):
    return [FaceGroup(i, tuple(LandmarkCandidate(x, y, 1.0) for x, y in face), (1.0, 0.0))
            for i, face in enumerate(annotation.faces)]


def test_metric_sanity(criterion):
    perfect = True
    for seed in range(5):
        gt = generate_scene(int(seed % 4) + 1, 5, 96, 96, seed=seed).annotation
        r = evaluate(_groups_from(gt), gt)
        perfect &= r["nme_percent"] == 0.0 and r["f1"] == 1.0
    hand = [
        nme([(0, 0), (5, 5)], [(0, 0), (5, 5)]) == 0.0,
        abs(nme([(6, 8), (6, 8)], [(0, 0), (0, 0)], normalizer=10.0) - 100.0) < 1e-12,
        abs(nme([(3, 0), (0, 4)], [(0, 0), (0, 0)], normalizer=10.0) - 35.0) < 1e-12,
        f1_detection(MatchResult(((0, 0), (1, 1)), (), ())) == 1.0,
        f1_detection(MatchResult((), (0,), (0,))) == 0.0,
        abs(f1_detection(MatchResult(((0, 0), (1, 1)), (2,), (2,))) - 4 / 6) < 1e-12,
    ]
    criterion("metric sanity", perfect and all(hand),
              f"pred = gt gives NME 0 and F1 1 on 5 scenes: {perfect}; "
              f"hand examples {sum(hand)}/{len(hand)}")
