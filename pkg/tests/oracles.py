"""Straight-from-formula reference implementations in plain Python loops."""

import math


def rmse(y, f):
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(y, f)) / len(y))


def nrmse(y, f):
    return rmse(y, f) / (sum(y) / len(y))


def mape(y, f):
    return 100.0 / len(y) * sum(abs(a - b) / abs(a) for a, b in zip(y, f))


def pinball_one(y, f, q):
    return (y - f) * q if y >= f else (f - y) * (1 - q)


def pinball(y, f, q):
    return sum(pinball_one(a, b, q) for a, b in zip(y, f)) / len(y)


def wql(y, f, q):
    return 2.0 * sum(pinball_one(a, b, q) for a, b in zip(y, f)) / sum(y)


def picp(y, lo, hi):
    return sum(1 for a, l, u in zip(y, lo, hi) if l <= a <= u) / len(y)


def msis(y, lo, hi, training, m, alpha):
    h = len(y)
    num = 0.0
    for t in range(h):
        num += hi[t] - lo[t]
        if y[t] < lo[t]:
            num += 2.0 / alpha * (lo[t] - y[t])
        if y[t] > hi[t]:
            num += 2.0 / alpha * (y[t] - hi[t])
    n = len(training)
    den = sum(abs(training[t] - training[t - m]) for t in range(m, n)) / (n - m)
    return num / h / den
