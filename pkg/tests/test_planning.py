import math

import numpy as np
import pytest

from homebot import planning
from homebot.planning import (
    SQRT2,
    HelpNode,
    InstanceTooLarge,
    NavGrid,
    NoPath,
    Path,
    TourPlan,
    astar,
    brute_force_tour,
    helpfulness,
    plan_tour,
    replan,
    select_target,
    travel_time,
)
from homebot.sensors import PerceivedFace


def test_astar_start_is_goal():
    p = astar(NavGrid.from_rows(["..", ".."]), (1, 1), (1, 1))
    assert p.cells == ((1, 1),) and p.cost == 0


def test_astar_empty_grid_diagonal():
    p = astar(NavGrid.from_rows(["....."] * 5), (0, 0), (4, 4))
    assert p.cost == pytest.approx(4 * SQRT2)
    assert p.diagonal_steps == 4 and p.straight_steps == 0


def test_astar_no_corner_cutting():
    # diagonal (0,0)->(1,1) would clip the wall at (1,0)
    grid = NavGrid.from_rows([".#", ".."])
    p = astar(grid, (0, 0), (1, 1))
    assert p.cost == pytest.approx(2.0)


def test_astar_no_path():
    grid = NavGrid.from_rows([".#.", ".#.", ".#."])
    with pytest.raises(NoPath):
        astar(grid, (0, 0), (2, 2))
    with pytest.raises(NoPath):
        astar(grid, (1, 0), (2, 2))


def test_travel_time():
    assert travel_time(Path(((0, 0),), 0, 0), 0.3, 0.1) == 0.0
    assert travel_time(Path(tuple((i, 0) for i in range(10)), 9, 0), 0.3, 0.1) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        travel_time(Path(((0, 0),), 0, 0), 0.0, 0.1)


def test_cost_matrix_symmetric():
    grid = NavGrid.from_rows(["......"] * 4, cell_size=0.1)
    m = planning.cost_matrix(grid, (0, 0), [(5, 0), (5, 3), (2, 2)], 0.3)
    assert m.shape == (4, 4)
    assert np.allclose(m, m.T) and np.all(np.diag(m) == 0)
    assert m[0, 1] == pytest.approx(5 * 0.1 / 0.3)


def _face(d, h, prior=0.15):
    return PerceivedFace("x", prior / d, h, 0.0)


def test_helpfulness_ordering():
    assert helpfulness(_face(1.5, 1.2)) > helpfulness(_face(3.0, 1.2))
    assert helpfulness(_face(2.0, 1.35)) > helpfulness(_face(2.0, 1.05))
    assert helpfulness(_face(2.0, 1.35), weights=(0, 0)) == 0
    assert planning.estimated_distance(_face(2.5, 1.2)) == pytest.approx(2.5)
    with pytest.raises(ValueError):
        helpfulness(PerceivedFace("x", 0.0, 1.0, 0.0))


def _line(rewards, spacing=10.0):
    """Nodes on a line at multiples of ``spacing`` seconds from the robot."""
    nodes = [HelpNode(f"n{i}", (float(i + 1), 0.0), r) for i, r in enumerate(rewards)]
    pos = np.array([0.0] + [spacing * (i + 1) for i in range(len(rewards))])
    return nodes, np.abs(pos[:, None] - pos[None, :])


def test_plan_single_node_and_zero_budget():
    nodes, cost = _line([1.0])
    assert plan_tour(nodes, cost, budget=20).order == ("n0",)
    p = plan_tour(nodes, cost, budget=0)
    assert p.order == () and p.total_reward == 0
    with pytest.raises(ValueError):
        plan_tour(nodes, cost, budget=-1)


def test_plan_respects_budget():
    nodes, cost = _line([1.0, 2.0, 3.0])
    p = plan_tour(nodes, cost, budget=25)
    assert p.order == ("n0", "n1") and p.total_cost <= 25


def test_brute_force_small_cases():
    assert brute_force_tour([], np.zeros((1, 1))).order == ()
    nodes = [HelpNode("a", (0, 0), 1.0), HelpNode("b", (0, 0), 2.0)]
    cost = np.array([[0, 5, 5], [5, 0, 20], [5, 20, 0]], float)
    assert brute_force_tour(nodes, cost, budget=10).order == ("b",)
    with pytest.raises(InstanceTooLarge):
        brute_force_tour([HelpNode(str(i), (0, 0), 1.0) for i in range(11)], np.zeros((12, 12)))


def test_brute_force_enumeration_count():
    rng = np.random.default_rng(0)
    nodes = [HelpNode(str(i), (0, 0), float(r)) for i, r in enumerate(rng.uniform(0, 1, 8))]
    cost = rng.uniform(1, 10, (9, 9))
    plan = brute_force_tour(nodes, cost, budget=1e9, prune=False)
    assert plan.examined == sum(math.perm(8, k) for k in range(9)) == 109601


def test_replan_deterministic_and_drops_vanished():
    nodes, cost = _line([1.0, 2.0])
    plan = plan_tour(nodes, cost, budget=100)
    assert replan(nodes, plan, 0.0, cost) == plan
    gone = [nodes[0], HelpNode("n1", nodes[1].position, 0.0)]
    assert "n1" not in replan(gone, plan, 5.0, cost).order
    with pytest.raises(ValueError):
        replan(nodes, plan, 101.0, cost)


def test_select_target():
    nodes = [HelpNode("a", (0, 0), 1.0), HelpNode("b", (0, 0), 3.0)]
    assert select_target(TourPlan(("a", "b"), 4.0, 1.0, 10.0), nodes) == "b"
    assert select_target(TourPlan((), 0.0, 0.0, 10.0), nodes) is None


def test_help_node_validation():
    with pytest.raises(ValueError):
        HelpNode("a", (0, 0), -1.0)
