"""Reference computations that share no code with the package.

Used to derive the frozen numbers in the tests and to cross-check the
simulator on small cases.
"""

from collections import deque
from fractions import Fraction

import mpmath

mpmath.mp.dps = 40


def gaussian_tail(x):
    """P(N(0,1) > x) by direct numerical integration of the normal density."""
    x = mpmath.mpf(x)
    pdf = lambda t: mpmath.exp(-t * t / 2) / mpmath.sqrt(2 * mpmath.pi)
    return float(mpmath.quad(pdf, [x, x + 10, mpmath.inf]))


def bpsk_ber(snr_db):
    gamma = mpmath.mpf(10) ** (mpmath.mpf(snr_db) / 10)
    return gaussian_tail(mpmath.sqrt(2 * gamma))


def qam_ber(snr_db, m):
    gamma = mpmath.mpf(10) ** (mpmath.mpf(snr_db) / 10)
    k = mpmath.log(m, 2)
    return float(4 / k * (1 - 1 / mpmath.sqrt(m)) * gaussian_tail(mpmath.sqrt(3 * gamma / (m - 1))))


def airtime_us(bits, rate_mbps, preamble_us=40):
    """Exact rational airtime in microseconds."""
    return Fraction(preamble_us) + Fraction(bits) / Fraction(rate_mbps).limit_denominator()


def frame_success(ber, bits):
    return float((1 - mpmath.mpf(ber)) ** bits)


def bfs_components(n, edges):
    """Connected component id per node by breadth-first search."""
    nbrs = {i: set() for i in range(n)}
    for a, b in edges:
        nbrs[a].add(b)
        nbrs[b].add(a)
    comp = [-1] * n
    c = 0
    for s in range(n):
        if comp[s] >= 0:
            continue
        comp[s] = c
        q = deque([s])
        while q:
            u = q.popleft()
            for v in nbrs[u]:
                if comp[v] < 0:
                    comp[v] = c
                    q.append(v)
        c += 1
    return comp


def mean_pair_error(cache, truth, diagonal):
    """Mean over ordered pairs i != j of |cache[i][j] - truth[j]|.

    ``cache[i][j]`` is None for an entry never learned (counts as ``diagonal``).
    """
    n = len(truth)
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if cache[i][j] is None:
                total += diagonal
            else:
                total += sum((a - b) ** 2 for a, b in zip(cache[i][j], truth[j])) ** 0.5
    return total / (n * (n - 1))
