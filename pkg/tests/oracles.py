"""Brute-force reference implementations of every loss, shared by the unit
and acceptance suites. Plain python/numpy loops, no engine code."""

import math

import numpy as np


def o_cos_dist(a, b):
    return 1.0 - float(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))


def o_local(p1, z2, p2, z1):
    def term(p, z):
        vals = []
        for i in range(p.shape[0]):
            vals.append(min(o_cos_dist(p[i], z[j]) for j in range(z.shape[0])))
        return sum(vals) / p.shape[0]
    return 0.5 * (term(p1, z2) + term(p2, z1))


def o_global(p1, z2, p2, z1):
    return 0.5 * (o_cos_dist(p1, z2) + o_cos_dist(p2, z1))


def o_intra_rows(z, tau):
    n = z.shape[0]
    S = np.zeros((n, n))
    for i in range(n):
        js = [j for j in range(n) if j != i]
        logits = np.array([-o_cos_dist(z[i], z[j]) / tau for j in js])
        e = np.exp(logits - logits.max())
        w = e / e.sum()
        for j, wj in zip(js, w):
            S[i, j] = wj
    return S


def o_selfsim_j(z1, z2, tau):
    n = z1.shape[0]
    s1, s2 = o_intra_rows(z1, tau), o_intra_rows(z2, tau)
    total = 0.0
    for i in range(n):
        ce = 0.0
        for j in range(n):
            if j != i:
                ce -= s1[i, j] * math.log(s2[i, j])
        total += ce
    return total / n


def o_link(r1, r2):
    E, K = r1.shape
    total = 0.0
    for e in range(E):
        for k in range(K):
            total -= r1[e, k] * math.log(r2[e, k] + 1e-12)
    return total / E


def o_supervised(logits, answer):
    # higher-precision recomputation in extended floats
    x = logits.astype(np.longdouble)
    x = x - x.max()
    return float(np.log(np.exp(x).sum()) - x[answer])


def rows(rng, n, d):
    """Random rows safely away from the norm floor."""
    m = rng.normal(size=(n, d))
    return m + 0.5 * np.sign(m.sum(axis=1, keepdims=True))


def rand_dist(rng, n, k):
    m = rng.uniform(0.1, 1.0, size=(n, k))
    return m / m.sum(axis=1, keepdims=True)
