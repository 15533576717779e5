"""Slow, obviously-correct reference implementations used as test oracles."""

from __future__ import annotations

import math
from collections import Counter

import numpy as np


def brute_force_cluster(S: np.ndarray, linkage: str):
    """Agglomerate by recomputing every inter-cluster similarity from scratch.

    Returns merges as (id_a, id_b, score) with the same id convention and tie
    rule as the fast implementation: clusters start as ids 0..n-1, merge k
    creates id n+k, ties go to the lexicographically smallest (id_a, id_b).
    """
    n = S.shape[0]
    clusters = {i: [i] for i in range(n)}
    merges = []
    next_id = n
    while len(clusters) > 1:
        best = None
        keys = sorted(clusters)
        for x in range(len(keys)):
            for y in range(x + 1, len(keys)):
                a, b = keys[x], keys[y]
                vals = [S[i, j] for i in clusters[a] for j in clusters[b]]
                if linkage == "single":
                    v = max(vals)
                elif linkage == "complete":
                    v = min(vals)
                else:
                    v = math.fsum(vals) / len(vals)
                if best is None or v > best[2] or (v == best[2] and (a, b) < best[:2]):
                    best = (a, b, v)
        a, b, v = best
        clusters[next_id] = clusters.pop(a) + clusters.pop(b)
        merges.append((a, b, v))
        next_id += 1
    return merges


def direct_vi(p, t) -> float:
    """Variation of information from explicit entropy sums (nats)."""
    ids = list(p)
    n = len(ids)
    cp = Counter(p[i] for i in ids)
    ct = Counter(t[i] for i in ids)
    joint = Counter((p[i], t[i]) for i in ids)
    h_p = -sum(c / n * math.log(c / n) for c in cp.values())
    h_t = -sum(c / n * math.log(c / n) for c in ct.values())
    mi = 0.0
    for (a, b), c in joint.items():
        pij = c / n
        mi += pij * math.log(pij / ((cp[a] / n) * (ct[b] / n)))
    return h_p + h_t - 2.0 * mi


def concordance_auc(scores, linked) -> float:
    """AUC as the fraction of (linked, unlinked) pairs ordered correctly, ties half."""
    pos = [s for s, l in zip(scores, linked) if l]
    neg = [s for s, l in zip(scores, linked) if not l]
    total = 0.0
    for a in pos:
        for b in neg:
            total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (len(pos) * len(neg))


def weighted_nll(beta, X, y, w) -> float:
    """Negative weighted Bernoulli log-likelihood written out term by term."""
    total = 0.0
    for xi, yi, wi in zip(X, y, w):
        eta = float(np.dot(xi, beta))
        p = 1.0 / (1.0 + math.exp(-eta))
        total -= wi * (yi * math.log(p) + (1 - yi) * math.log(1 - p))
    return total
