import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_simplex(rng, n, alpha=0.7):
    return rng.dirichlet(np.full(1 << n, alpha))


def brute_generator(n, alpha, beta, h):
    """Dense generator from a direct enumeration of the transition rules."""
    size = 1 << n
    A = np.zeros((size, size))
    for c in range(size):
        occ = [(c >> i) & 1 for i in range(n)]
        moves = []
        if occ[n - 1] == 0:
            moves.append((c | (1 << (n - 1)), alpha))
        for i in range(1, n):
            if occ[i] == 1 and occ[i - 1] == 0:
                moves.append((c ^ (1 << i) ^ (1 << (i - 1)), h[i - 1]))
        if occ[0] == 1:
            moves.append((c ^ 1, beta))
        for target, rate in moves:
            A[target, c] += rate
            A[c, c] -= rate
    return A


def brute_marginal(z, n, order, d, bits):
    """Probability of pattern ``bits`` on sites d..d+order-1 by direct summation."""
    mask = (1 << order) - 1
    return sum(z[c] for c in range(1 << n) if (c >> d) & mask == bits)
