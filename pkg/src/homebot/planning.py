"""Grid path planning and budgeted helper selection."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, replace

import numpy as np

from .world import HomeMap

SQRT2 = math.sqrt(2.0)
DEFAULT_BUDGET = 300.0
# insertion scores reward / added_cost**alpha; each exponent is a separate start
# (single-node seeds are only tried with the plain ratio)
ALPHAS = (1.0, 0.5, 0.0)


class NoPath(Exception):
    pass


class InstanceTooLarge(ValueError):
    pass


class NavGrid:
    """Passable cells with 8-connectivity; diagonals may not clip a wall corner."""

    def __init__(self, passable: np.ndarray, cell_size: float = 1.0):
        self.passable = np.asarray(passable, dtype=bool)  # indexed [y, x]
        self.height, self.width = self.passable.shape
        self.cell_size = cell_size

    @classmethod
    def from_map(cls, home: HomeMap) -> NavGrid:
        grid = np.ones((home.height, home.width), dtype=bool)
        for x, y in home.walls:
            grid[y, x] = False
        return cls(grid, home.cell_size)

    @classmethod
    def from_rows(cls, rows, cell_size: float = 1.0) -> NavGrid:
        return cls(np.array([[ch != "#" for ch in row] for row in rows], dtype=bool), cell_size)

    def ok(self, cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height and bool(self.passable[y, x])

    def index(self, cell) -> int:
        return cell[1] * self.width + cell[0]

    def neighbors(self, cell):
        x, y = cell
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                nxt = (x + dx, y + dy)
                if not self.ok(nxt):
                    continue
                if dx and dy:
                    if not (self.ok((x + dx, y)) and self.ok((x, y + dy))):
                        continue
                    yield nxt, True
                else:
                    yield nxt, False


@dataclass(frozen=True)
class Path:
    cells: tuple[tuple[int, int], ...]
    straight_steps: int
    diagonal_steps: int

    @property
    def cost(self) -> float:
        """Length in cell units."""
        return self.straight_steps + self.diagonal_steps * SQRT2

    total_cost = cost


def octile(a, b) -> float:
    dx, dy = abs(a[0] - b[0]), abs(a[1] - b[1])
    return max(dx, dy) + (SQRT2 - 1.0) * min(dx, dy)


def astar(grid: NavGrid, start, goal) -> Path:
    """Cost-optimal 8-connected path; ties broken by (f, h, cell index)."""
    start, goal = tuple(start), tuple(goal)
    if not grid.ok(start) or not grid.ok(goal):
        raise NoPath(f"start {start} or goal {goal} is not passable")
    g = {start: 0.0}
    parent = {start: None}
    h0 = octile(start, goal)
    heap = [(h0, h0, grid.index(start), start)]
    closed = set()
    while heap:
        _, _, _, cell = heapq.heappop(heap)
        if cell in closed:
            continue
        if cell == goal:
            return _reconstruct(parent, goal)
        closed.add(cell)
        for nxt, diag in grid.neighbors(cell):
            if nxt in closed:
                continue
            ng = g[cell] + (SQRT2 if diag else 1.0)
            if ng < g.get(nxt, math.inf) - 1e-12:
                g[nxt] = ng
                parent[nxt] = cell
                h = octile(nxt, goal)
                heapq.heappush(heap, (ng + h, h, grid.index(nxt), nxt))
    raise NoPath(f"no path from {start} to {goal}")


def _reconstruct(parent, goal) -> Path:
    cells = [goal]
    while parent[cells[-1]] is not None:
        cells.append(parent[cells[-1]])
    cells.reverse()
    diag = sum(1 for a, b in zip(cells, cells[1:]) if a[0] != b[0] and a[1] != b[1])
    return Path(tuple(cells), len(cells) - 1 - diag, diag)


def travel_time(path: Path, speed: float, cell_size: float) -> float:
    if speed <= 0:
        raise ValueError("speed must be positive")
    return path.cost * cell_size / speed


def cost_matrix(grid: NavGrid, start_cell, cells, speed: float) -> np.ndarray:
    """Travel seconds between the start (index 0) and each target cell (1..n)."""
    pts = [tuple(start_cell)] + [tuple(c) for c in cells]
    n = len(pts)
    m = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            try:
                t = travel_time(astar(grid, pts[i], pts[j]), speed, grid.cell_size)
            except NoPath:
                t = math.inf
            m[i, j] = m[j, i] = t
    return m


# --- helpfulness ---------------------------------------------------------------


@dataclass(frozen=True)
class HelpfulnessConfig:
    face_width_prior: float = 0.15
    d_max: float = 5.0
    h_adult: float = 1.1
    # share of the adult weight that rewards extra face height; see helpfulness()
    tall_share: float = 0.5
    h_ref: float = 2.0


def helpfulness(face, weights=(1.0, 1.0), cfg: HelpfulnessConfig = HelpfulnessConfig()) -> float:
    """Expected helpfulness of a detected face.

    Proximity comes from the apparent face width against a fixed face-width
    prior; adulthood is a hard face-height threshold. Within the adult term a
    ``tall_share`` fraction grows with face height so that two adults of
    different height are still ranked.
    """
    if face.apparent_width <= 0:
        raise ValueError("apparent_width must be positive")
    w_dist, w_adult = weights
    distance = cfg.face_width_prior / face.apparent_width
    proximity = min(1.0, max(0.0, 1.0 - distance / cfg.d_max))
    adult = 1.0 if face.face_center_height >= cfg.h_adult else 0.0
    tall = min(1.0, max(0.0, face.face_center_height / cfg.h_ref))
    return w_dist * proximity + w_adult * ((1.0 - cfg.tall_share) * adult + cfg.tall_share * tall)


def estimated_distance(face, cfg: HelpfulnessConfig = HelpfulnessConfig()) -> float:
    return cfg.face_width_prior / face.apparent_width


# --- orienteering ----------------------------------------------------------------


@dataclass(frozen=True)
class HelpNode:
    id: str
    position: tuple[float, float]
    reward: float
    visited: bool = False

    def __post_init__(self):
        if self.reward < 0:
            raise ValueError("reward must be >= 0")


@dataclass(frozen=True)
class TourPlan:
    order: tuple[str, ...]
    total_reward: float
    total_cost: float
    budget: float
    examined: int = 0


def _route_cost(cost, seq, start: int) -> float:
    total = 0.0
    prev = start
    for k in seq:
        total += cost[prev][k]
        prev = k
    return total


def _reward(nodes, seq) -> float:
    # fsum over sorted indices: the same node set always yields the same float
    return math.fsum(nodes[k - 1].reward for k in sorted(seq))


def _plan(nodes, cost, seq, budget, start=0, examined=0) -> TourPlan:
    return TourPlan(
        tuple(nodes[k - 1].id for k in seq),
        _reward(nodes, seq),
        float(_route_cost(cost, seq, start)),
        budget,
        examined,
    )


def _two_opt(cost, seq, start):
    """Segment reversals plus single-node relocations until neither helps."""
    seq = list(seq)
    improved = True
    while improved:
        improved = False
        best = _route_cost(cost, seq, start)
        for i in range(len(seq) - 1):
            for j in range(i + 1, len(seq)):
                cand = seq[:i] + seq[i : j + 1][::-1] + seq[j + 1 :]
                c = _route_cost(cost, cand, start)
                if c < best - 1e-12:
                    seq, best, improved = cand, c, True
        for i in range(len(seq)):
            rest = seq[:i] + seq[i + 1 :]
            for pos in range(len(seq)):
                cand = rest[:pos] + [seq[i]] + rest[pos:]
                c = _route_cost(cost, cand, start)
                if c < best - 1e-12:
                    seq, best, improved = cand, c, True
                    break
            if improved:
                break
    return seq


def _greedy(nodes, cost, budget, seq, start, skip=None, alpha=1.0):
    """Best reward/cost**alpha insertion with 2-opt tightening after every insert."""
    seq = list(seq)
    while True:
        used = set(seq)
        if skip is not None:
            used.add(skip)
        total = _route_cost(cost, seq, start)
        best = None
        for k in range(1, len(nodes) + 1):
            if k in used or nodes[k - 1].reward <= 0:
                continue
            r = nodes[k - 1].reward
            for pos in range(len(seq) + 1):
                prev = start if pos == 0 else seq[pos - 1]
                delta = cost[prev][k]
                if pos < len(seq):
                    delta += cost[k][seq[pos]] - cost[prev][seq[pos]]
                if not total + delta <= budget:
                    continue
                ratio = math.inf if delta <= 0 else r / delta**alpha
                key = (ratio, r, -k, -pos)
                if best is None or key > best[0]:
                    best = (key, k, pos)
        if best is None:
            return seq
        _, k, pos = best
        cand = _two_opt(cost, seq[:pos] + [k] + seq[pos:], start)
        if _route_cost(cost, cand, start) > budget:
            return seq
        seq = cand


def _best_insert(cost, seq, k, start):
    best = None
    for pos in range(len(seq) + 1):
        cand = seq[:pos] + [k] + seq[pos:]
        c = _route_cost(cost, cand, start)
        if best is None or c < best[0]:
            best = (c, cand)
    return best


def _improve(nodes, cost, budget, seq, start):
    """Drop-and-refill and swap moves until no move raises the reward."""
    current = _plan(nodes, cost, seq, budget, start)

    def moves(seq, i):
        rest = seq[:i] + seq[i + 1 :]
        yield _greedy(nodes, cost, budget, rest, start, skip=seq[i])
        for k in range(1, len(nodes) + 1):
            if k in seq or nodes[k - 1].reward <= nodes[seq[i] - 1].reward:
                continue
            cand = _two_opt(cost, _best_insert(cost, rest, k, start)[1], start)
            if _route_cost(cost, cand, start) <= budget:
                yield _greedy(nodes, cost, budget, cand, start)

    improved = True
    while improved:
        improved = False
        for i in range(len(seq)):
            for cand in moves(seq, i):
                plan = _plan(nodes, cost, cand, budget, start)
                if plan.total_cost <= budget and plan.total_reward > current.total_reward + 1e-12:
                    seq, current, improved = cand, plan, True
                    break
            if improved:
                break
    return seq


def _better(a: TourPlan, b: TourPlan | None) -> bool:
    if b is None:
        return True
    if a.total_reward != b.total_reward:
        return a.total_reward > b.total_reward
    if a.total_cost != b.total_cost:
        return a.total_cost < b.total_cost
    return a.order < b.order


def plan_tour(nodes, cost, budget: float = DEFAULT_BUDGET, start: int = 0) -> TourPlan:
    """Budgeted visit order over ``nodes``.

    ``cost`` is a square matrix of travel seconds where row/column ``start``
    (default 0) is the robot and node ``i`` sits at index ``i + 1``. Rewards
    count once per node. Greedy ratio insertion (for each of ``ALPHAS``) is
    run from an empty tour
    and from every feasible single node, then improved by drop-and-refill
    and swap moves; the best result is kept.
    """
    if budget < 0:
        raise ValueError("budget must be >= 0")
    nodes = list(nodes)
    cost = np.asarray(cost, dtype=float).tolist()  # plain floats: much faster scalar indexing
    best = _plan(nodes, cost, [], budget, start)
    seeds = [[]] + [[k] for k in range(1, len(nodes) + 1) if cost[start][k] <= budget and nodes[k - 1].reward > 0]
    for alpha in ALPHAS:
        for seed in seeds if alpha == 1.0 else [[]]:
            seq = _greedy(nodes, cost, budget, seed, start, alpha=alpha)
            seq = _improve(nodes, cost, budget, seq, start)
            plan = _plan(nodes, cost, seq, budget, start)
            if plan.total_cost <= budget and _better(plan, best):
                best = plan
    return best


def brute_force_tour(nodes, cost, budget: float = DEFAULT_BUDGET, start: int = 0, prune: bool = True) -> TourPlan:
    """Exact optimum by enumerating ordered node subsets.

    ``examined`` on the result counts prefixes visited, the empty one
    included. With ``prune=False`` every ordered subset is visited, which for
    n nodes is the sum over k of n!/(n-k)!.
    """
    nodes = list(nodes)
    n = len(nodes)
    if n > 10:
        raise InstanceTooLarge(f"brute force limited to 10 nodes, got {n}")
    cost = np.asarray(cost, dtype=float).tolist()
    best = None
    count = 0
    seq: list[int] = []
    used = [False] * (n + 1)

    def visit(total):
        nonlocal best, count
        count += 1
        if total <= budget:
            plan = _plan(nodes, cost, seq, budget, start)
            if _better(plan, best):
                best = plan
        prev = seq[-1] if seq else start
        for k in range(1, n + 1):
            if used[k]:
                continue
            nt = total + cost[prev][k]
            if prune and not nt <= budget:
                continue
            used[k] = True
            seq.append(k)
            visit(nt)
            seq.pop()
            used[k] = False

    visit(0.0)
    if best is None:
        best = _plan(nodes, cost, [], budget, start)
    return replace(best, examined=count)


def replan(nodes_now, plan: TourPlan, elapsed: float, cost, start: int = 0) -> TourPlan:
    """Re-solve with the remaining budget; nodes already rewarded are worth nothing."""
    if elapsed > plan.budget:
        raise ValueError("elapsed time exceeds the plan budget")
    nodes = [replace(nd, reward=0.0) if nd.visited else nd for nd in nodes_now]
    return plan_tour(nodes, cost, plan.budget - elapsed, start)


def select_target(plan: TourPlan, nodes) -> str | None:
    """Most helpful node the plan can reach; ties go to the earlier visit."""
    reward = {nd.id: nd.reward for nd in nodes}
    best = None
    for pos, nid in enumerate(plan.order):
        key = (reward.get(nid, 0.0), -pos)
        if best is None or key > best[0]:
            best = (key, nid)
    return None if best is None else best[1]
