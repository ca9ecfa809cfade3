"""Constructive insertion heuristics and perturbative local search.

The inner loops are numba kernels operating on a distance matrix and an
``int64`` tour array; the public functions validate inputs, copy the tour
and draw all randomness up front from a numpy ``Generator`` so that results
depend only on ``(inputs, seed)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import TspInstance, as_tour

# strict improvement threshold; equal-length moves are rejected
IMPROVE_EPS = 1e-12

NEAREST, FARTHEST, RANDOM = 0, 1, 2
_RULES = {"nearest": NEAREST, "farthest": FARTHEST, "random": RANDOM}


@dataclass(frozen=True)
class LocalSearchConfig:
    alpha: float = 0.5
    beta: float = 1.5
    gamma: float = 0.25
    rounds: int = 25
    circular: bool = True

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.rounds < 0:
            raise ValueError(f"rounds must be >= 0, got {self.rounds}")

    def two_opt_count(self, n: int) -> int:
        return random_two_opt_count(n, self.alpha, self.beta)


def random_two_opt_count(n: int, alpha: float, beta: float) -> int:
    # the tiny slack keeps e.g. 0.5 * 20**1.5 = 44.72 from flooring wrongly on exact products
    return int(math.floor(alpha * n ** beta + 1e-9))


# -- kernels ----------------------------------------------------------------

@njit(cache=True)
def _length(d, tour):
    n = tour.shape[0]
    total = 0.0
    for t in range(n):
        total += d[tour[t], tour[(t + 1) % n]]
    return total


@njit(cache=True)
def _two_opt_delta(d, tour, i, j):
    n = tour.shape[0]
    a, b = tour[i], tour[i + 1]
    c, e = tour[j], tour[(j + 1) % n]
    return d[a, c] + d[b, e] - d[a, b] - d[c, e]


@njit(cache=True)
def _reverse(tour, lo, hi):
    while lo < hi:
        tmp = tour[lo]
        tour[lo] = tour[hi]
        tour[hi] = tmp
        lo += 1
        hi -= 1


@njit(cache=True)
def _two_opt_sweep(d, tour, max_sweeps):
    n = tour.shape[0]
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        improved = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                if _two_opt_delta(d, tour, i, j) < -IMPROVE_EPS:
                    _reverse(tour, i + 1, j)
                    improved = True
        if not improved:
            break
    return sweeps


@njit(cache=True)
def _random_two_opt(d, tour, pairs):
    for k in range(pairs.shape[0]):
        i, j = pairs[k, 0], pairs[k, 1]
        if _two_opt_delta(d, tour, i, j) < -IMPROVE_EPS:
            _reverse(tour, i + 1, j)


@njit(cache=True)
def _relocate_delta(d, tour, t, tp):
    n = tour.shape[0]
    if tp == t or tp == (t - 1) % n:
        return 0.0
    c = tour[t]
    p = tour[(t - 1) % n]
    q = tour[(t + 1) % n]
    a = tour[tp]
    b = tour[(tp + 1) % n]
    removed = d[p, q] - d[p, c] - d[c, q]
    inserted = d[a, c] + d[c, b] - d[a, b]
    return removed + inserted


@njit(cache=True)
def _apply_relocation(tour, t, tp):
    """Move the city at position ``t`` to sit right after the city at ``tp``."""
    n = tour.shape[0]
    if tp == t or tp == (t - 1) % n:
        return
    c = tour[t]
    if tp > t:
        for k in range(t, tp):
            tour[k] = tour[k + 1]
        tour[tp] = c
    else:
        for k in range(t, tp + 1, -1):
            tour[k] = tour[k - 1]
        tour[tp + 1] = c


@njit(cache=True)
def _best_relocation(d, tour, t, radius, circular):
    """Most improving target within the window; ``-1`` if none improves. Ties keep the smallest."""
    n = tour.shape[0]
    best = -IMPROVE_EPS
    best_tp = -1
    for tp in range(n):
        gap = abs(tp - t)
        if circular and n - gap < gap:
            gap = n - gap
        if gap >= radius:
            continue
        delta = _relocate_delta(d, tour, t, tp)
        if delta < best:
            best = delta
            best_tp = tp
    return best_tp


@njit(cache=True)
def _local_insertion(d, tour, gamma, circular):
    n = tour.shape[0]
    radius = gamma * n
    for t in range(n):
        tp = _best_relocation(d, tour, t, radius, circular)
        if tp >= 0:
            _apply_relocation(tour, t, tp)


@njit(cache=True)
def _combined(d, tour, pairs, gamma, circular):
    for r in range(pairs.shape[0]):
        _random_two_opt(d, tour, pairs[r])
        _local_insertion(d, tour, gamma, circular)


@njit(cache=True)
def _insertion(d, start, order, rule):
    n = d.shape[0]
    tour = np.empty(n, dtype=np.int64)
    tour[0] = start
    size = 1
    in_tour = np.zeros(n, dtype=np.bool_)
    in_tour[start] = True
    mind = d[start].copy()
    added = np.empty(n, dtype=np.int64)
    added[0] = start
    for step in range(1, n):
        if rule == 2:
            city = order[step]
        else:
            city = -1
            for j in range(n):
                if in_tour[j]:
                    continue
                if city < 0 or (rule == 0 and mind[j] < mind[city]) or (rule == 1 and mind[j] > mind[city]):
                    city = j
        best_pos = 0
        best_cost = np.inf
        for t in range(size):
            a = tour[t]
            b = tour[(t + 1) % size]
            cost = d[a, city] + d[city, b] - d[a, b]
            if cost < best_cost:
                best_cost = cost
                best_pos = t
        for k in range(size, best_pos + 1, -1):
            tour[k] = tour[k - 1]
        tour[best_pos + 1] = city
        size += 1
        added[step] = city
        in_tour[city] = True
        for j in range(n):
            if d[city, j] < mind[j]:
                mind[j] = d[city, j]
    return tour, added


# -- public API -------------------------------------------------------------

def _draw_pairs(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` uniform ordered pairs ``i < j`` of distinct positions."""
    if n < 2 or count <= 0:
        return np.zeros((max(count, 0), 2), dtype=np.int64)
    i = rng.integers(0, n, size=count)
    j = rng.integers(0, n - 1, size=count)
    j = j + (j >= i)
    return np.sort(np.stack([i, j], axis=1), axis=1).astype(np.int64)


def insertion_tour(instance: TspInstance, rule: str, seed) -> np.ndarray:
    """Grow a tour from a random start city, inserting each new city at its cheapest position.

    ``rule`` picks the next city: ``nearest`` / ``farthest`` use the min
    distance to the partial tour, ``random`` a uniform order.
    """
    if rule not in _RULES:
        raise ValueError(f"unknown insertion rule {rule!r}")
    rng = np.random.default_rng(seed)
    n = instance.n
    start = int(rng.integers(n))
    order = np.empty(0, dtype=np.int64)
    if rule == "random":
        rest = rng.permutation(np.delete(np.arange(n), start))
        order = np.concatenate([[start], rest]).astype(np.int64)
    return _insertion(instance.distances, start, order, _RULES[rule])[0]


def relocate_delta(instance: TspInstance, tour, from_pos: int, to_pos: int) -> float:
    """Length change from moving the city at ``from_pos`` right after the city at ``to_pos``."""
    tour = as_tour(tour, instance.n)
    n = instance.n
    if not (0 <= from_pos < n and 0 <= to_pos < n):
        raise ValueError(f"move ({from_pos}, {to_pos}) out of range for n={n}")
    return float(_relocate_delta(instance.distances, tour, from_pos, to_pos))


def best_relocation(instance: TspInstance, tour, from_pos: int, gamma: float = 1.0,
                    circular: bool = True) -> int:
    """Target position chosen by local insertion for ``from_pos``; ``from_pos - 1`` (no move) if none improves."""
    tour = as_tour(tour, instance.n)
    tp = _best_relocation(instance.distances, tour, from_pos, gamma * instance.n, circular)
    return int(tp) if tp >= 0 else (from_pos - 1) % instance.n


def apply_relocation(tour, from_pos: int, to_pos: int) -> np.ndarray:
    out = np.array(tour, dtype=np.int64)
    n = len(out)
    if not (0 <= from_pos < n and 0 <= to_pos < n):
        raise ValueError(f"move ({from_pos}, {to_pos}) out of range for n={n}")
    _apply_relocation(out, from_pos, to_pos)
    return out


def two_opt_delta(instance: TspInstance, tour, i: int, j: int) -> float:
    return float(_two_opt_delta(instance.distances, as_tour(tour, instance.n), i, j))


def apply_two_opt(tour, i: int, j: int) -> np.ndarray:
    out = np.array(tour, dtype=np.int64)
    out[i + 1:j + 1] = out[i + 1:j + 1][::-1].copy()
    return out


def two_opt_sweep(instance: TspInstance, tour, max_sweeps: int = 10**9) -> np.ndarray:
    """First-improvement 2-opt over all position pairs until a sweep finds nothing."""
    out = as_tour(tour, instance.n).copy()
    if instance.n >= 4:
        _two_opt_sweep(instance.distances, out, max_sweeps)
    return out


def random_two_opt(instance: TspInstance, tour, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` random pair draws, each reversal applied only if it shortens the tour."""
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    out = as_tour(tour, instance.n).copy()
    pairs = _draw_pairs(instance.n, count, rng)
    if instance.n >= 4:
        _random_two_opt(instance.distances, out, pairs)
    return out


def local_insertion_optimization(instance: TspInstance, tour, gamma: float,
                                 circular: bool = True) -> np.ndarray:
    """One pass over positions, relocating each city to the best spot within ``gamma * n``."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    out = as_tour(tour, instance.n).copy()
    if instance.n >= 4:
        _local_insertion(instance.distances, out, gamma, circular)
    return out


def combined_local_search(instance: TspInstance, tour, config: LocalSearchConfig,
                          rng: np.random.Generator) -> np.ndarray:
    """``config.rounds`` rounds of random 2-opt followed by a local insertion pass."""
    out = as_tour(tour, instance.n).copy()
    n = instance.n
    count = config.two_opt_count(n)
    pairs = _draw_pairs(n, config.rounds * count, rng).reshape(config.rounds, count, 2)
    if n >= 4 and config.rounds > 0:
        _combined(instance.distances, out, pairs, config.gamma, config.circular)
    return out
