"""Lazy Theta* any-angle search over cell centres of an occupancy grid."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .environment import Cell, GridMap

_NEIGHBOURS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


@dataclass(frozen=True)
class GridPath:
    cells: tuple[Cell, ...]
    waypoints: tuple[tuple[float, float], ...]
    cost: float

    def as_array(self) -> np.ndarray:
        return np.array(self.waypoints, dtype=float)


def supercover(a: Cell, b: Cell) -> list[Cell]:
    """Every cell touched by the segment between the centres of ``a`` and ``b``.

    Corner contacts count: when the segment passes exactly through a grid
    vertex both side cells are included. Integer arithmetic only.
    """
    x, y = a
    dx, dy = b[0] - a[0], b[1] - a[1]
    nx, ny = abs(dx), abs(dy)
    sx = 1 if dx > 0 else -1
    sy = 1 if dy > 0 else -1
    cells = [(x, y)]
    ix = iy = 0
    while ix < nx or iy < ny:
        # compare parametric crossing times of the next vertical / horizontal edge
        cmp = (1 + 2 * ix) * ny - (1 + 2 * iy) * nx
        if cmp == 0:
            cells.append((x + sx, y))
            cells.append((x, y + sy))
            x += sx
            y += sy
            ix += 1
            iy += 1
        elif cmp < 0:
            x += sx
            ix += 1
        else:
            y += sy
            iy += 1
        cells.append((x, y))
    return cells


def line_of_sight(grid: GridMap, a: Cell, b: Cell) -> bool:
    """True iff the centre-to-centre segment touches no occupied cell."""
    if not (grid.in_bounds(a) and grid.in_bounds(b)):
        raise ValueError(f"cells {a}, {b} must lie inside the map")
    occ = grid.occupancy
    return not any(occ[c[0], c[1]] for c in supercover(a, b))


def _dist(a: Cell, b: Cell) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


class LazyThetaStar:
    """One planner per search; the grid is shared read-only.

    Open-list ties are broken by smaller f, then smaller h, then cell order.
    """

    def __init__(self, grid: GridMap):
        self.grid = grid
        self._los_cache: dict[tuple[Cell, Cell], bool] = {}

    def los(self, a: Cell, b: Cell) -> bool:
        key = (a, b) if a <= b else (b, a)
        hit = self._los_cache.get(key)
        if hit is None:
            hit = self._los_cache[key] = line_of_sight(self.grid, a, b)
        return hit

    def _neighbours(self, s: Cell):
        for dx, dy in _NEIGHBOURS:
            n = (s[0] + dx, s[1] + dy)
            if self.grid.is_free(n) and (dx == 0 or dy == 0 or self.los(s, n)):
                yield n

    def search(self, start: Cell, goal: Cell) -> GridPath | None:
        grid = self.grid
        for label, c in (("start", start), ("goal", goal)):
            if not grid.in_bounds(c):
                raise ValueError(f"{label} cell {c} is outside the map")
            if not grid.is_free(c):
                raise ValueError(f"{label} cell {c} is occupied")

        g = {start: 0.0}
        parent = {start: start}
        closed: set[Cell] = set()
        h = lambda c: _dist(c, goal)  # noqa: E731
        open_heap = [(h(start), h(start), start)]

        while open_heap:
            f, hs, s = heapq.heappop(open_heap)
            if s in closed or f != g[s] + hs:
                continue  # stale entry
            self._set_vertex(s, g, parent, closed)
            if s == goal:
                return self._extract(start, goal, parent, g[goal])
            closed.add(s)
            for n in self._neighbours(s):
                if n in closed:
                    continue
                # lazy: assume the grandparent sees n, verify on expansion
                p = parent[s]
                cand = g[p] + _dist(p, n)
                if cand < g.get(n, math.inf):
                    g[n] = cand
                    parent[n] = p
                    hn = h(n)
                    heapq.heappush(open_heap, (cand + hn, hn, n))
        return None

    def _set_vertex(self, s, g, parent, closed):
        p = parent[s]
        if p == s or self.los(p, s):
            return
        best, best_g = None, math.inf
        for n in self._neighbours(s):
            if n in closed:
                cand = g[n] + _dist(n, s)
                if cand < best_g or (cand == best_g and n < best):
                    best, best_g = n, cand
        parent[s] = best
        g[s] = best_g

    def _extract(self, start, goal, parent, cost) -> GridPath:
        cells = [goal]
        while cells[-1] != start:
            cells.append(parent[cells[-1]])
        cells.reverse()
        res = self.grid.resolution
        waypoints = tuple(tuple(float(v) for v in self.grid.cell_center(c)) for c in cells)
        return GridPath(tuple(cells), waypoints, cost * res)


def plan(grid: GridMap, start: Cell, goal: Cell) -> GridPath | None:
    """Any-angle path from ``start`` to ``goal``; ``None`` when the goal is unreachable.

    Every returned leg is re-checked for line of sight.
    """
    planner = LazyThetaStar(grid)
    path = planner.search(tuple(start), tuple(goal))
    if path is None:
        return None
    for a, b in zip(path.cells, path.cells[1:]):
        if not line_of_sight(grid, a, b):
            raise RuntimeError(f"planner produced a blocked leg {a} -> {b}")
    return path


def path_cost(waypoints) -> float:
    w = np.asarray(waypoints, dtype=float)
    return float(np.linalg.norm(np.diff(w, axis=0), axis=1).sum()) if len(w) > 1 else 0.0
