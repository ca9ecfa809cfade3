"""Exact small-instance solver (Held-Karp subset DP) and a brute-force check."""
from __future__ import annotations

import itertools

import numpy as np
from numba import njit

from .core import TspInstance

MAX_EXACT_N = 15


class SizeCapError(ValueError):
    pass


@njit(cache=True)
def _held_karp(d):
    n = d.shape[0]
    m = n - 1
    full = (1 << m) - 1
    cost = np.full((1 << m, m), np.inf)
    parent = np.full((1 << m, m), -1, dtype=np.int64)
    for i in range(m):
        cost[1 << i, i] = d[0, i + 1]
    for mask in range(1, full + 1):
        for last in range(m):
            if not (mask >> last) & 1:
                continue
            here = cost[mask, last]
            if here == np.inf:
                continue
            for nxt in range(m):
                if (mask >> nxt) & 1:
                    continue
                nmask = mask | (1 << nxt)
                c = here + d[last + 1, nxt + 1]
                if c < cost[nmask, nxt]:
                    cost[nmask, nxt] = c
                    parent[nmask, nxt] = last
    best = np.inf
    last = 0
    for i in range(m):
        c = cost[full, i] + d[i + 1, 0]
        if c < best:
            best = c
            last = i
    tour = np.zeros(n, dtype=np.int64)
    mask = full
    for pos in range(n - 1, 0, -1):
        tour[pos] = last + 1
        prev = parent[mask, last]
        mask ^= 1 << last
        last = prev
    return tour


def held_karp_exact(instance: TspInstance) -> np.ndarray:
    """Optimal tour starting at city 0. Memory grows as ``2**n * n``, hence the cap."""
    n = instance.n
    if n > MAX_EXACT_N:
        raise SizeCapError(f"exact solver is capped at n <= {MAX_EXACT_N}, got n={n}")
    if n <= 3:
        return np.arange(n, dtype=np.int64)
    return _held_karp(instance.distances)


def brute_force_exact(instance: TspInstance) -> tuple[np.ndarray, float]:
    """Enumerate all ``(n-1)!`` orders with city 0 fixed. Test oracle only."""
    n = instance.n
    d = instance.distances
    best, best_len = None, np.inf
    for rest in itertools.permutations(range(1, n)):
        order = (0,) + rest
        length = sum(d[order[t], order[(t + 1) % n]] for t in range(n))
        if length < best_len:
            best, best_len = order, length
    return np.array(best, dtype=np.int64), float(best_len)
