"""Independent reference computations used by the tests."""

from __future__ import annotations

import heapq
import math
from fractions import Fraction

import numpy as np


def segment_touches_cell(a, b, cell) -> bool:
    """Exact closed-square / segment intersection (Liang-Barsky on rationals).

    ``a``/``b`` are cells; the segment joins their centres.
    """
    x0, y0 = Fraction(2 * a[0] + 1, 2), Fraction(2 * a[1] + 1, 2)
    x1, y1 = Fraction(2 * b[0] + 1, 2), Fraction(2 * b[1] + 1, 2)
    lo_t, hi_t = Fraction(0), Fraction(1)
    for p0, d, lo, hi in ((x0, x1 - x0, cell[0], cell[0] + 1), (y0, y1 - y0, cell[1], cell[1] + 1)):
        if d == 0:
            if p0 < lo or p0 > hi:
                return False
            continue
        t_a = (lo - p0) / d
        t_b = (hi - p0) / d
        if t_a > t_b:
            t_a, t_b = t_b, t_a
        lo_t = max(lo_t, t_a)
        hi_t = min(hi_t, t_b)
        if lo_t > hi_t:
            return False
    return True


def raster_los(occ, a, b) -> bool:
    """Brute-force line of sight: test every cell of the bounding box exactly."""
    xs = range(min(a[0], b[0]), max(a[0], b[0]) + 1)
    ys = range(min(a[1], b[1]), max(a[1], b[1]) + 1)
    for i in xs:
        for j in ys:
            if occ[i, j] and segment_touches_cell(a, b, (i, j)):
                return False
    return True


def astar8(occ, start, goal) -> float:
    """8-connected grid A* (no corner cutting), cost in cell units; inf if unreachable."""
    W, H = occ.shape
    h = lambda c: math.hypot(c[0] - goal[0], c[1] - goal[1])  # noqa: E731
    g = {start: 0.0}
    heap = [(h(start), start)]
    done = set()
    while heap:
        _, s = heapq.heappop(heap)
        if s in done:
            continue
        if s == goal:
            return g[s]
        done.add(s)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx == dy == 0:
                    continue
                n = (s[0] + dx, s[1] + dy)
                if not (0 <= n[0] < W and 0 <= n[1] < H) or occ[n]:
                    continue
                if dx and dy and (occ[s[0] + dx, s[1]] or occ[s[0], s[1] + dy]):
                    continue
                c = g[s] + math.hypot(dx, dy)
                if c < g.get(n, math.inf):
                    g[n] = c
                    heapq.heappush(heap, (c + h(n), n))
    return math.inf


def visibility_dijkstra(occ, start, goal) -> float:
    """Shortest any-angle path over the visibility graph of free cell centres."""
    free = [tuple(map(int, c)) for c in np.argwhere(~occ)]
    dist = {start: 0.0}
    heap = [(0.0, start)]
    done = set()
    while heap:
        d, s = heapq.heappop(heap)
        if s in done:
            continue
        if s == goal:
            return d
        done.add(s)
        for n in free:
            if n in done or n == s:
                continue
            if raster_los(occ, s, n):
                c = d + math.hypot(n[0] - s[0], n[1] - s[1])
                if c < dist.get(n, math.inf):
                    dist[n] = c
                    heapq.heappush(heap, (c, n))
    return math.inf


def random_occupancy(rng, size, density):
    occ = rng.random((size, size)) < density
    return occ
