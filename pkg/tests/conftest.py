import itertools

import numpy as np


def brute_force_sq_gospa(X, Y, c):
    """Squared GOSPA (p = 2, alpha = 2) by enumerating every partial assignment."""
    X, Y = np.asarray(X, float).reshape(-1, 2), np.asarray(Y, float).reshape(-1, 2)
    n, m = len(X), len(Y)
    best = 0.5 * c**2 * (n + m)
    for k in range(1, min(n, m) + 1):
        for rows in itertools.combinations(range(n), k):
            for cols in itertools.permutations(range(m), k):
                loc = sum(min(np.sum((X[i] - Y[j]) ** 2), c**2) for i, j in zip(rows, cols))
                best = min(best, loc + 0.5 * c**2 * (n + m - 2 * k))
    return best
