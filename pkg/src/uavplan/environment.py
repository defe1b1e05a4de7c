"""Workspace model: occupancy grid, column obstacles and benchmark scenarios."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .params import CRAZYFLIE, DEFAULT_LIMITS, Limits, UavParams

SCHEMA = "uavplan.scenario/1"
RNG_NAME = "numpy.Philox"

DEFAULT_RESOLUTION = 0.25
DEFAULT_ORIGIN = (-2.0, -2.0)
DEFAULT_CELLS = 16
DEFAULT_START = (-1.75, -1.75, 1.0)
DEFAULT_GOAL = (1.75, 1.75, 1.0)

Cell = tuple[int, int]


@dataclass(frozen=True, eq=False)
class GridMap:
    """Occupancy grid; ``occupancy[ix, iy]`` is True for an occupied cell."""

    width: int
    height: int
    resolution: float
    origin: tuple[float, float]
    occupancy: np.ndarray

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        occ = np.array(self.occupancy, dtype=bool)
        if occ.shape != (self.width, self.height):
            raise ValueError(f"occupancy shape {occ.shape} != ({self.width}, {self.height})")
        occ.flags.writeable = False
        object.__setattr__(self, "occupancy", occ)

    @classmethod
    def empty(cls, width, height, resolution=DEFAULT_RESOLUTION, origin=(0.0, 0.0)) -> "GridMap":
        return cls(width, height, resolution, tuple(origin), np.zeros((width, height), bool))

    def in_bounds(self, cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def is_free(self, cell) -> bool:
        return self.in_bounds(cell) and not self.occupancy[cell[0], cell[1]]

    def cell_center(self, cell) -> np.ndarray:
        return np.asarray(self.origin) + (np.asarray(cell, float) + 0.5) * self.resolution

    def cell_of(self, point) -> Cell:
        """Cell containing ``point``; points on a cell edge go to the cell nearer the map centre."""
        out = []
        for p, o, n in zip(point[:2], self.origin, (self.width, self.height)):
            s = (p - o) / self.resolution
            i = math.floor(s)
            if s == i and s > n / 2:
                i -= 1
            out.append(min(max(i, 0), n - 1))
        return (out[0], out[1])

    def with_occupied(self, cells) -> "GridMap":
        occ = self.occupancy.copy()
        for c in cells:
            occ[c[0], c[1]] = True
        return GridMap(self.width, self.height, self.resolution, self.origin, occ)

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "resolution": self.resolution,
            "origin": list(self.origin),
            "occupied": [list(map(int, c)) for c in np.argwhere(self.occupancy)],
        }

    @classmethod
    def from_dict(cls, d) -> "GridMap":
        occ = np.zeros((d["width"], d["height"]), bool)
        for ix, iy in d.get("occupied", []):
            occ[ix, iy] = True
        return cls(int(d["width"]), int(d["height"]), float(d["resolution"]), tuple(d["origin"]), occ)


@dataclass(frozen=True)
class Column:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("column radius must be positive")


def safety_radius(params: UavParams = CRAZYFLIE) -> float:
    """Vehicle clearance: (arm length + half propeller) with a 10 % margin."""
    return (params.arm_length + params.prop_diameter / 2.0) * 1.1


def column_from_cell(grid: GridMap, cell) -> Column:
    """Column circumscribing an occupied cell."""
    if not grid.in_bounds(cell):
        raise ValueError(f"cell {cell} is outside the map")
    if not grid.occupancy[cell[0], cell[1]]:
        raise ValueError(f"cell {cell} is free")
    c = grid.cell_center(cell)
    return Column((float(c[0]), float(c[1])), math.sqrt(2.0) / 2.0 * grid.resolution)


def obstacle_margin(r_L, col: Column, r_safe: float) -> float:
    """Squared-distance margin to the inflated column; feasible iff >= 0."""
    dx = r_L[0] - col.center[0]
    dy = r_L[1] - col.center[1]
    return dx * dx + dy * dy - (col.radius + r_safe) ** 2


def obstacle_margins(points, columns, r_safe: float) -> np.ndarray:
    """Vectorised margins, shape ``(len(points), len(columns))``."""
    pts = np.atleast_2d(np.asarray(points, float))
    if not columns:
        return np.zeros((pts.shape[0], 0))
    centers = np.array([c.center for c in columns])
    radii = np.array([c.radius for c in columns]) + r_safe
    d = pts[:, None, :2] - centers[None, :, :]
    return (d ** 2).sum(axis=-1) - radii[None, :] ** 2


@dataclass(frozen=True, eq=False)
class Scenario:
    grid: GridMap
    columns: tuple[Column, ...]
    start: tuple[float, float, float]
    goal: tuple[float, float, float]
    limits: Limits = DEFAULT_LIMITS
    name: str = "scenario"
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def workspace_bounds(self):
        return self.limits.position_lower, self.limits.position_upper

    def validate(self, r_safe: float) -> None:
        lo, hi = self.workspace_bounds
        for label, p in (("start", self.start), ("goal", self.goal)):
            if any(v < a or v > b for v, a, b in zip(p, lo, hi)):
                raise ValueError(f"{label} {p} lies outside the workspace")
            for c in self.columns:
                if obstacle_margin(p, c, r_safe) < 0:
                    raise ValueError(f"{label} {p} lies inside inflated column at {c.center}")

    def planning_grid(self, r_safe: float) -> GridMap:
        """Occupancy used by the path planner: occupied cells plus every cell
        whose centre lies strictly inside an inflated column."""
        g = self.grid
        if not self.columns:
            return g
        ix, iy = np.meshgrid(np.arange(g.width), np.arange(g.height), indexing="ij")
        centers = np.stack([ix, iy], -1).reshape(-1, 2)
        xy = np.asarray(g.origin) + (centers + 0.5) * g.resolution
        inside = (obstacle_margins(xy, list(self.columns), r_safe) < 0).any(axis=1)
        occ = g.occupancy | inside.reshape(g.width, g.height)
        return GridMap(g.width, g.height, g.resolution, g.origin, occ)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "name": self.name,
            "seed": self.seed,
            "rng": RNG_NAME if self.seed is not None else None,
            "grid": self.grid.to_dict(),
            "columns": [{"center": list(c.center), "radius": c.radius} for c in self.columns],
            "start": list(self.start),
            "goal": list(self.goal),
            "limits": self.limits.to_dict(),
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, d) -> "Scenario":
        if d.get("schema") != SCHEMA:
            raise ValueError(f"unsupported scenario schema {d.get('schema')!r}")
        return cls(
            grid=GridMap.from_dict(d["grid"]),
            columns=tuple(Column(tuple(c["center"]), float(c["radius"])) for c in d["columns"]),
            start=tuple(float(v) for v in d["start"]),
            goal=tuple(float(v) for v in d["goal"]),
            limits=Limits.from_dict(d["limits"]) if "limits" in d else DEFAULT_LIMITS,
            name=d.get("name", "scenario"),
            seed=d.get("seed"),
            meta=d.get("meta", {}),
        )


def _default_grid() -> GridMap:
    return GridMap.empty(DEFAULT_CELLS, DEFAULT_CELLS, DEFAULT_RESOLUTION, DEFAULT_ORIGIN)


def scenario_from_cells(grid: GridMap, cells, name: str, seed=None, start=DEFAULT_START,
                        goal=DEFAULT_GOAL, limits: Limits = DEFAULT_LIMITS) -> Scenario:
    """Occupancy and analytic columns are derived from the same cell list."""
    cells = sorted(tuple(map(int, c)) for c in cells)
    g = grid.with_occupied(cells)
    cols = tuple(column_from_cell(g, c) for c in cells)
    return Scenario(g, cols, tuple(start), tuple(goal), limits, name, seed)


def make_empty_scenario(start=DEFAULT_START, goal=DEFAULT_GOAL) -> Scenario:
    return scenario_from_cells(_default_grid(), [], "empty", start=start, goal=goal)


def make_two_obstacle_scenario() -> Scenario:
    """Two columns centred on the start-goal diagonal, blocking the straight line."""
    return scenario_from_cells(_default_grid(), [(5, 5), (10, 10)], "two_obstacles")


def _connected(grid: GridMap, a: Cell, b: Cell) -> bool:
    if not (grid.is_free(a) and grid.is_free(b)):
        return False
    seen = {a}
    todo = deque([a])
    while todo:
        c = todo.popleft()
        if c == b:
            return True
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            n = (c[0] + dx, c[1] + dy)
            if n not in seen and grid.is_free(n):
                seen.add(n)
                todo.append(n)
    return False


def make_random_columns_scenario(count: int, seed: int, params: UavParams = CRAZYFLIE,
                                 max_draws: int | None = None) -> Scenario:
    """``count`` columns on uniformly drawn cells, reproducible from ``seed``.

    Cells whose inflated column would swallow the start or goal, or that would
    disconnect start from goal on the planning grid, are rejected.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    base = _default_grid()
    r_safe = safety_radius(params)
    rng = np.random.Generator(np.random.Philox(seed))
    max_draws = 50 * count + 100 if max_draws is None else max_draws
    chosen: list[Cell] = []
    draws = 0
    while len(chosen) < count:
        if draws >= max_draws:
            raise RuntimeError(f"could not place {count} columns after {draws} draws (seed {seed})")
        draws += 1
        flat = int(rng.integers(0, base.width * base.height))
        cell = (flat // base.height, flat % base.height)
        if cell in chosen:
            continue
        trial = scenario_from_cells(base, chosen + [cell], "random_columns", seed)
        col = column_from_cell(trial.grid, cell)
        if obstacle_margin(DEFAULT_START, col, r_safe) < 0 or obstacle_margin(DEFAULT_GOAL, col, r_safe) < 0:
            continue
        pg = trial.planning_grid(r_safe)
        if not _connected(pg, pg.cell_of(DEFAULT_START), pg.cell_of(DEFAULT_GOAL)):
            continue
        chosen.append(cell)
    scen = scenario_from_cells(base, chosen, "random_columns", seed)
    scen.meta.update({"count": count, "draws": draws})
    return scen
