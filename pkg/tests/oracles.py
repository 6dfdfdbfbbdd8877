"""Slow reference implementations used only by the tests.

Plain Python loops over lists; nothing here calls into the package.
"""

import math


def cos_dist(a, b):
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    return 1.0 - dot / (na * nb)


def means_of(points, labels, n_clusters):
    dim = len(points[0])
    sums = [[0.0] * dim for _ in range(n_clusters)]
    counts = [0] * n_clusters
    for p, c in zip(points, labels):
        counts[c] += 1
        for j in range(dim):
            sums[c][j] += p[j]
    return [[s / counts[c] for s in sums[c]] for c in range(n_clusters)], counts


def loss_terms(points, labels, n_clusters, delta_v, delta_d, radius, means=None):
    """(l_var, l_dist, l_reg) by direct summation."""
    computed, counts = means_of(points, labels, n_clusters)
    means = means if means is not None else computed
    l_var = 0.0
    for c in range(n_clusters):
        acc = 0.0
        for p, lab in zip(points, labels):
            if lab == c:
                acc += max(0.0, cos_dist(means[c], p) - delta_v) ** 2
        l_var += acc / counts[c]
    l_var /= n_clusters
    l_dist = 0.0
    if n_clusters > 1:
        for a in range(n_clusters):
            for b in range(n_clusters):
                if a != b:
                    l_dist += max(0.0, 2 * delta_d - cos_dist(means[a], means[b])) ** 2
        l_dist /= n_clusters * (n_clusters - 1)
    l_reg = sum((math.sqrt(sum(v * v for v in m)) - radius) ** 2 for m in means) / n_clusters
    return l_var, l_dist, l_reg


def pool_naive(x, k):
    """x: nested lists [C][H][W]; valid-cell k x k window mean."""
    r = k // 2
    out = []
    for ch in x:
        h, w = len(ch), len(ch[0])
        rows = []
        for y in range(h):
            row = []
            for xx in range(w):
                s, n = 0.0, 0
                for dy in range(-r, r + 1):
                    for dx in range(-r, r + 1):
                        yy, xc = y + dy, xx + dx
                        if 0 <= yy < h and 0 <= xc < w:
                            s += ch[yy][xc]
                            n += 1
                row.append(s / n)
            rows.append(row)
        out.append(rows)
    return out


def pointwise_naive(x, weight, bias):
    c_in, h, w = len(x), len(x[0]), len(x[0][0])
    return [[[bias[o] + sum(weight[o][i] * x[i][y][xx] for i in range(c_in))
              for xx in range(w)] for y in range(h)] for o in range(len(weight))]


def fox_block_naive(x, weight, bias):
    branches = []
    for k in (1, 3, 5, 7):
        branches.extend(pool_naive(x, k))
    return pointwise_naive(branches, weight, bias)


def nms_naive(values, threshold, radius):
    """Row-major scan: local max over in-bounds window, earlier equal survivor wins."""
    h, w = len(values), len(values[0])
    kept = []
    for y in range(h):
        for x in range(w):
            v = values[y][x]
            if v < threshold:
                continue
            is_max = all(
                values[yy][xx] <= v
                for yy in range(max(0, y - radius), min(h, y + radius + 1))
                for xx in range(max(0, x - radius), min(w, x + radius + 1))
            )
            if not is_max:
                continue
            if any(abs(ky - y) <= radius and abs(kx - x) <= radius and values[ky][kx] == v
                   for ky, kx in kept):
                continue
            kept.append((y, x))
    kept.sort(key=lambda p: -values[p[0]][p[1]])
    return kept


def components_union_find(points, h):
    """Component count of the d <= h graph with a path-halving union-find."""
    n = len(points)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if cos_dist(points[i], points[j]) <= h:
                parent[find(i)] = find(j)
    return len({find(i) for i in range(n)})
