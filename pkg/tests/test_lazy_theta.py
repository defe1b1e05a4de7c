import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import astar8, random_occupancy, raster_los, segment_touches_cell
from uavplan import lazy_theta as lt
from uavplan.environment import GridMap


def grid_from(occ, resolution=1.0):
    occ = np.asarray(occ, bool)
    return GridMap(occ.shape[0], occ.shape[1], resolution, (0.0, 0.0), occ)


class TestSupercover:
    def test_horizontal(self):
        assert lt.supercover((0, 0), (3, 0)) == [(0, 0), (1, 0), (2, 0), (3, 0)]

    def test_diagonal_includes_corner_neighbours(self):
        cells = set(lt.supercover((0, 0), (2, 2)))
        assert {(0, 0), (1, 1), (2, 2), (0, 1), (1, 0), (1, 2), (2, 1)} <= cells

    @settings(max_examples=200, deadline=None)
    @given(a=st.tuples(st.integers(0, 9), st.integers(0, 9)), b=st.tuples(st.integers(0, 9), st.integers(0, 9)))
    def test_matches_exact_intersection(self, a, b):
        got = set(lt.supercover(a, b))
        want = {(i, j) for i in range(10) for j in range(10) if segment_touches_cell(a, b, (i, j))}
        assert got == want


class TestLineOfSight:
    def test_clear(self):
        assert lt.line_of_sight(GridMap.empty(5, 5, 1.0), (0, 0), (4, 3))

    def test_corner_contact_blocks(self):
        g = grid_from(np.zeros((3, 3))).with_occupied([(0, 1)])
        assert not lt.line_of_sight(g, (0, 0), (1, 1))

    def test_outside_rejected(self):
        with pytest.raises(ValueError):
            lt.line_of_sight(GridMap.empty(3, 3, 1.0), (0, 0), (3, 0))

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1))
    def test_matches_raster_oracle(self, seed):
        r = np.random.default_rng(seed)
        occ = random_occupancy(r, 12, 0.25)
        g = grid_from(occ)
        a, b = tuple(r.integers(0, 12, 2)), tuple(r.integers(0, 12, 2))
        assert lt.line_of_sight(g, a, b) == raster_los(occ, a, b)


class TestPlan:
    def test_empty_diagonal(self):
        path = lt.plan(GridMap.empty(5, 5, 0.25), (0, 0), (4, 4))
        assert path.cells == ((0, 0), (4, 4))
        assert abs(path.cost - 4 * math.sqrt(2) * 0.25) <= 1e-12
        np.testing.assert_allclose(path.waypoints, [(0.125, 0.125), (1.125, 1.125)])

    def test_start_equals_goal(self):
        path = lt.plan(GridMap.empty(4, 4, 1.0), (2, 2), (2, 2))
        assert path.cells == ((2, 2),) and path.cost == 0.0

    def test_wall_with_gap(self):
        occ = np.zeros((7, 7), bool)
        occ[3, :] = True
        occ[3, 5] = False
        g = grid_from(occ)
        path = lt.plan(g, (0, 0), (6, 0))
        assert path is not None
        assert any(c == (3, 5) or lt.supercover(a, c).count((3, 5))
                   for a, c in zip(path.cells, path.cells[1:]))
        for a, b in zip(path.cells, path.cells[1:]):
            assert raster_los(occ, a, b)
        assert path.cost >= math.hypot(3, 5) + math.hypot(3, 5) - 1e-9 - 2.0

    def test_enclosed_goal(self):
        occ = np.zeros((7, 7), bool)
        occ[2:5, 2:5] = True
        occ[3, 3] = False
        assert lt.plan(grid_from(occ), (0, 0), (3, 3)) is None

    def test_occupied_endpoint_rejected(self):
        g = GridMap.empty(4, 4, 1.0).with_occupied([(3, 3)])
        with pytest.raises(ValueError):
            lt.plan(g, (0, 0), (3, 3))

    def test_deterministic(self):
        r = np.random.default_rng(3)
        occ = random_occupancy(r, 20, 0.2)
        occ[0, 0] = occ[19, 19] = False
        g = grid_from(occ)
        a, b = lt.plan(g, (0, 0), (19, 19)), lt.plan(g, (0, 0), (19, 19))
        assert (a is None and b is None) or a == b

    def test_path_cost_helper(self):
        assert lt.path_cost([(0, 0), (3, 4), (3, 5)]) == 6.0
        assert lt.path_cost([(1, 1)]) == 0.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_no_worse_than_grid_astar(seed):
    r = np.random.default_rng(seed)
    occ = random_occupancy(r, 15, 0.25)
    occ[0, 0] = occ[14, 14] = False
    path = lt.plan(grid_from(occ), (0, 0), (14, 14))
    ref = astar8(occ, (0, 0), (14, 14))
    if path is None:
        assert math.isinf(ref)
    else:
        assert path.cost <= ref + 1e-9
        for a, b in zip(path.cells, path.cells[1:]):
            assert raster_los(occ, a, b)
