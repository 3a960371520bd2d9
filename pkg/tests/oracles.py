"""Slow, obviously-correct reference implementations used by the tests.

None of these import the package's numerical code paths.
"""

import itertools
import math


def brute_patches(values, P, S):
    n = len(values)
    out, ranges = [], []
    start = 0
    while True:
        patch = [values[start + k] if start + k < n else values[n - 1] for k in range(P)]
        out.append(patch)
        ranges.append((start, min(start + P, n)))
        if start + P >= n:
            break
        start += S
    return out, ranges


def matvec(W, x):
    return [sum(W[i][k] * x[k] for k in range(len(x))) for i in range(len(W))]


def affine(W, b, x):
    return [v + bi for v, bi in zip(matvec(W, x), b)]


def cos(a, b):
    na = math.sqrt(sum(v * v for v in a))
    nb = math.sqrt(sum(v * v for v in b))
    if na < 1e-12 or nb < 1e-12:
        return 0.0
    return sum(x * y for x, y in zip(a, b)) / (na * nb)


def sims(patches, W, b, tokens):
    return [[cos(affine(W, b, p), t) for t in tokens] for p in patches]


def cold_tokens(series_list, W, b, tokens, P, S, M):
    acc = [0.0] * len(tokens)
    for series in series_list:
        patches, _ = brute_patches(series, P, S)
        for p in patches:
            e = affine(W, b, p)
            for i, t in enumerate(tokens):
                acc[i] += cos(e, t)
    return sorted(range(len(tokens)), key=lambda i: (acc[i], i))[:M], acc


def best_selection(S, alpha):
    """Enumerate every alpha-subset of distinct patches with any token each.

    Selections are ranked by their similarities sorted high to low
    (lexicographically), then by their sorted (patch, token) pairs.
    """
    n_patch, n_tok = len(S), len(S[0])
    best_key, best = None, None
    for rows in itertools.combinations(range(n_patch), alpha):
        for cols in itertools.product(range(n_tok), repeat=alpha):
            pairs = sorted(zip(rows, cols), key=lambda pc: (-S[pc[0]][pc[1]], pc[0], pc[1]))
            key = (tuple(-S[r][c] for r, c in pairs), tuple(pairs))
            if best_key is None or key < best_key:
                best_key, best = key, pairs
    return best


def topk_hit(S, book, K):
    for row in S:
        ranked = sorted(range(len(row)), key=lambda i: (-row[i], i))[:K]
        if set(ranked) & set(book):
            return True
    return False


def mean_std(values):
    n = len(values)
    mu = sum(values) / n
    var = sum((v - mu) ** 2 for v in values) / (n - 1)
    return mu, math.sqrt(var)


def loop_mse(p, t):
    return sum((a - b) ** 2 for a, b in zip(p, t)) / len(p)


def loop_mae(p, t):
    return sum(abs(a - b) for a, b in zip(p, t)) / len(p)


def central_diff(f, x, h=1e-5):
    g = []
    for i in range(len(x)):
        xp, xm = list(x), list(x)
        xp[i] += h
        xm[i] -= h
        g.append((f(xp) - f(xm)) / (2 * h))
    return g
