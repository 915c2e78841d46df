"""Independent reference implementations used only by the tests.

Plain Python loops over lists, deliberately sharing no code with the package.
"""

import math


def mean(xs):
    return math.fsum(xs) / len(xs)


def pearson(x, y):
    mx, my = mean(x), mean(y)
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = math.fsum((a - mx) ** 2 for a in x)
    syy = math.fsum((b - my) ** 2 for b in y)
    if sxx == 0 or syy == 0:
        return 0.0
    return sxy / math.sqrt(sxx * syy)


def ccc(x, y):
    n = len(x)
    mx, my = mean(x), mean(y)
    vx = math.fsum((a - mx) ** 2 for a in x) / n
    vy = math.fsum((b - my) ** 2 for b in y) / n
    cov = math.fsum((a - mx) * (b - my) for a, b in zip(x, y)) / n
    return 2 * cov / (vx + vy + (mx - my) ** 2)


def confusion(pred, target, k):
    grid = [[0] * k for _ in range(k)]
    for p, t in zip(pred, target):
        grid[t][p] += 1
    return grid


def f1_from_counts(tp, fp, fn):
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return 2 * precision * recall / (precision + recall) if precision + recall else 0.0


def per_class_f1(pred, target, k):
    out = []
    for c in range(k):
        tp = sum(1 for p, t in zip(pred, target) if p == c and t == c)
        fp = sum(1 for p, t in zip(pred, target) if p == c and t != c)
        fn = sum(1 for p, t in zip(pred, target) if p != c and t == c)
        out.append(f1_from_counts(tp, fp, fn))
    return out


def multilabel_f1(pred, target):
    cols = len(pred[0])
    out = []
    for j in range(cols):
        tp = sum(1 for p, t in zip(pred, target) if p[j] == 1 and t[j] == 1)
        fp = sum(1 for p, t in zip(pred, target) if p[j] == 1 and t[j] == 0)
        fn = sum(1 for p, t in zip(pred, target) if p[j] == 0 and t[j] == 1)
        out.append(f1_from_counts(tp, fp, fn))
    return out
