"""Maze world model: procedural map generation, agent dynamics, and path planning.

Coordinate convention: x is the column index growing East, y is the row index
growing South, so North decreases y. Clockwise order is N, E, S, W.
"""

from __future__ import annotations

import heapq
import random
from collections import deque
from dataclasses import dataclass, field
from enum import Enum, IntEnum

Node = tuple[int, int]
Edge = tuple[Node, Node]

ITEMS = ("barstool", "chair", "easel", "hatrack", "lamp", "sofa")
FLOORS = ("blue", "brick", "concrete", "flower", "grass", "gravel", "wood", "yellow")
WALL_PAINTINGS = ("butterfly", "fish", "tower")


class Direction(IntEnum):
    NORTH = 0
    EAST = 1
    SOUTH = 2
    WEST = 3

    def clockwise(self, quarter_turns: int = 1) -> "Direction":
        return Direction((self + quarter_turns) % 4)

    def counterclockwise(self, quarter_turns: int = 1) -> "Direction":
        return Direction((self - quarter_turns) % 4)

    def opposite(self) -> "Direction":
        return Direction((self + 2) % 4)


# (dx, dy) per direction; North decreases y.
DELTAS: dict[Direction, tuple[int, int]] = {
    Direction.NORTH: (0, -1),
    Direction.EAST: (1, 0),
    Direction.SOUTH: (0, 1),
    Direction.WEST: (-1, 0),
}


class Action(Enum):
    MOVE = "MOVE"
    RIGHT = "RIGHT"
    LEFT = "LEFT"
    STOP = "STOP"


ACTIONS = (Action.MOVE, Action.RIGHT, Action.LEFT, Action.STOP)
ACTION_INDEX = {a: i for i, a in enumerate(ACTIONS)}


@dataclass(frozen=True)
class Pose:
    x: int
    y: int
    dir: Direction


class Outcome(Enum):
    STOPPED = "stopped"
    WALL_HIT = "wallHit"
    EXHAUSTED = "exhausted"


@dataclass(frozen=True)
class StepResult:
    """One of moved/turned/stopped/wall_hit; `pose` is the resulting pose
    (unchanged for stopped and wall_hit, which are terminal)."""

    kind: str  # "moved" | "turned" | "stopped" | "wall_hit"
    pose: Pose


@dataclass
class Hall:
    """Maximal run of collinear consecutive edges sharing one floor pattern."""

    axis: str  # "horizontal" | "vertical"
    edges: list[Edge]
    floor: str | None = None


@dataclass
class Area:
    id: int
    nodes: list[Node]
    wall: str


@dataclass
class WorldConfig:
    width: int = 8
    height: int = 8
    p_item: float = 0.25
    min_dist: int = 4


class NoPathError(Exception):
    pass


class InvalidPathError(ValueError):
    pass


class MapResampleNeeded(Exception):
    """Raised by sample_endpoints when no qualifying pair exists; the caller
    should generate a fresh map."""


def norm_edge(a: Node, b: Node) -> Edge:
    return (a, b) if a <= b else (b, a)


@dataclass
class WorldMap:
    width: int
    height: int
    edges: frozenset[Edge]
    items: dict[Node, str]
    halls: list[Hall]
    edge_attrs: dict[Edge, tuple[str, str]]  # edge -> (floor, wall painting)
    areas: list[Area]
    neighbors: dict[Node, list[Node]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        adj: dict[Node, list[Node]] = {
            (x, y): [] for y in range(self.height) for x in range(self.width)
        }
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        self.neighbors = adj

    def in_bounds(self, node: Node) -> bool:
        return 0 <= node[0] < self.width and 0 <= node[1] < self.height

    def has_edge(self, a: Node, b: Node) -> bool:
        return norm_edge(a, b) in self.edges

    def neighbor_toward(self, node: Node, direction: Direction) -> Node | None:
        """Adjacent node in `direction` if the connecting edge is open."""
        dx, dy = DELTAS[direction]
        nxt = (node[0] + dx, node[1] + dy)
        return nxt if norm_edge(node, nxt) in self.edges else None

    def degree(self, node: Node) -> int:
        return len(self.neighbors[node])


def generate_maze(width: int, height: int, rng: random.Random) -> set[Edge]:
    """Carve a perfect maze over the width x height grid with an iterative
    depth-first backtracker from a random start node."""
    if width < 1 or height < 1:
        raise ValueError(f"grid must be at least 1x1, got {width}x{height}")
    visited: set[Node] = set()
    edges: set[Edge] = set()
    start = (rng.randrange(width), rng.randrange(height))
    visited.add(start)
    stack = [start]
    offsets = [(0, -1), (1, 0), (0, 1), (-1, 0)]
    while stack:
        node = stack[-1]
        x, y = node
        candidates = [
            (x + dx, y + dy)
            for dx, dy in offsets
            if 0 <= x + dx < width and 0 <= y + dy < height
            and (x + dx, y + dy) not in visited
        ]
        if not candidates:
            stack.pop()
            continue
        nxt = candidates[rng.randrange(len(candidates))] if len(candidates) > 1 else candidates[0]
        visited.add(nxt)
        edges.add(norm_edge(node, nxt))
        stack.append(nxt)
    return edges


def compute_halls(edges: set[Edge] | frozenset[Edge]) -> list[Hall]:
    """Partition edges into maximal collinear consecutive runs."""
    horizontal: dict[int, list[int]] = {}
    vertical: dict[int, list[int]] = {}
    for (x1, y1), (x2, y2) in edges:
        if y1 == y2:
            horizontal.setdefault(y1, []).append(min(x1, x2))
        else:
            vertical.setdefault(x1, []).append(min(y1, y2))
    halls: list[Hall] = []
    for y in sorted(horizontal):
        xs = sorted(horizontal[y])
        run: list[Edge] = []
        prev = None
        for x in xs:
            if prev is not None and x != prev + 1:
                halls.append(Hall("horizontal", run))
                run = []
            run.append(((x, y), (x + 1, y)))
            prev = x
        halls.append(Hall("horizontal", run))
    for x in sorted(vertical):
        ys = sorted(vertical[x])
        run = []
        prev = None
        for y in ys:
            if prev is not None and y != prev + 1:
                halls.append(Hall("vertical", run))
                run = []
            run.append(((x, y), (x, y + 1)))
            prev = y
        halls.append(Hall("vertical", run))
    return halls


def _cut_areas(width: int, height: int, n_areas: int, rng: random.Random) -> list[list[Node]]:
    """Split nodes into n_areas strips with n_areas - 1 parallel axis-aligned cuts."""
    axes = [ax for ax, size in (("x", width), ("y", height)) if size >= n_areas]
    if not axes:
        return [[(x, y) for y in range(height) for x in range(width)]]
    axis = axes[rng.randrange(len(axes))]
    size = width if axis == "x" else height
    cuts = sorted(rng.sample(range(1, size), n_areas - 1))
    bounds = [0] + cuts + [size]
    groups: list[list[Node]] = []
    for lo, hi in zip(bounds, bounds[1:]):
        if axis == "x":
            groups.append([(x, y) for y in range(height) for x in range(lo, hi)])
        else:
            groups.append([(x, y) for y in range(lo, hi) for x in range(width)])
    return groups


def decorate(edges: set[Edge] | frozenset[Edge], rng: random.Random,
             config: WorldConfig | None = None) -> WorldMap:
    """Dress a maze: items on random nodes, one floor per hall, and 2-3 areas
    each painting its edges with a distinct wall painting.

    An edge takes the painting of the area containing its lexicographically
    smaller endpoint; cuts are redrawn until every area owns at least one edge
    so the number of distinct paintings equals the number of areas.
    """
    cfg = config or WorldConfig()
    width, height = cfg.width, cfg.height
    items: dict[Node, str] = {}
    for y in range(height):
        for x in range(width):
            if rng.random() < cfg.p_item:
                items[(x, y)] = ITEMS[rng.randrange(len(ITEMS))]
    halls = compute_halls(edges)
    for hall in halls:
        hall.floor = FLOORS[rng.randrange(len(FLOORS))]
    floor_of: dict[Edge, str] = {}
    for hall in halls:
        for e in hall.edges:
            floor_of[e] = hall.floor  # type: ignore[assignment]

    n_areas = min(rng.choice((2, 3)), max(width, height), max(len(edges), 1))
    sorted_edges = sorted(edges)
    for _ in range(64):
        groups = _cut_areas(width, height, n_areas, rng)
        node_area = {node: i for i, grp in enumerate(groups) for node in grp}
        used = {node_area[e[0]] for e in sorted_edges}
        if len(used) == len(groups):
            break
    else:
        groups = [[(x, y) for y in range(height) for x in range(width)]]
        node_area = {node: 0 for node in groups[0]}
    paintings = rng.sample(WALL_PAINTINGS, len(groups))
    areas = [Area(i, grp, paintings[i]) for i, grp in enumerate(groups)]
    edge_attrs = {
        e: (floor_of[e], paintings[node_area[e[0]]]) for e in sorted_edges
    }
    return WorldMap(width, height, frozenset(edges), items, halls, edge_attrs, areas)


def generate_world(rng: random.Random, config: WorldConfig | None = None) -> WorldMap:
    cfg = config or WorldConfig()
    return decorate(generate_maze(cfg.width, cfg.height, rng), rng, cfg)


def step(world: WorldMap, pose: Pose, action: Action) -> StepResult:
    """Apply one action. Turns rotate in place, MOVE advances through an open
    edge or reports wall_hit, STOP is terminal."""
    if action is Action.RIGHT:
        return StepResult("turned", Pose(pose.x, pose.y, pose.dir.clockwise()))
    if action is Action.LEFT:
        return StepResult("turned", Pose(pose.x, pose.y, pose.dir.counterclockwise()))
    if action is Action.STOP:
        return StepResult("stopped", pose)
    nxt = world.neighbor_toward((pose.x, pose.y), pose.dir)
    if nxt is None:
        return StepResult("wall_hit", pose)
    return StepResult("moved", Pose(nxt[0], nxt[1], pose.dir))


def execute(world: WorldMap, pose: Pose, actions: list[Action],
            max_actions: int = 1_000_000) -> tuple[Pose, Outcome]:
    """Run actions until STOP, a wall hit, or the list/budget runs out."""
    taken = 0
    for action in actions:
        if taken >= max_actions:
            return pose, Outcome.EXHAUSTED
        result = step(world, pose, action)
        taken += 1
        if result.kind == "stopped":
            return pose, Outcome.STOPPED
        if result.kind == "wall_hit":
            return pose, Outcome.WALL_HIT
        pose = result.pose
    return pose, Outcome.EXHAUSTED


def shortest_path(world: WorldMap, start: Node, goal: Node) -> list[Node]:
    """A* with the Manhattan heuristic; returns the node path including both
    endpoints."""
    if not (world.in_bounds(start) and world.in_bounds(goal)):
        raise ValueError(f"endpoints out of bounds: {start}, {goal}")
    if start == goal:
        return [start]
    gx, gy = goal
    g: dict[Node, int] = {start: 0}
    parent: dict[Node, Node] = {}
    frontier: list[tuple[int, int, Node]] = [(abs(start[0] - gx) + abs(start[1] - gy), 0, start)]
    counter = 0
    while frontier:
        _, _, node = heapq.heappop(frontier)
        if node == goal:
            path = [node]
            while node != start:
                node = parent[node]
                path.append(node)
            path.reverse()
            return path
        base = g[node] + 1
        for nb in world.neighbors[node]:
            if base < g.get(nb, 1 << 30):
                g[nb] = base
                parent[nb] = node
                counter += 1
                heapq.heappush(frontier, (base + abs(nb[0] - gx) + abs(nb[1] - gy), counter, nb))
    raise NoPathError(f"no path from {start} to {goal}")


def bfs_distances(world: WorldMap, start: Node, stop_at: Node | None = None) -> dict[Node, int]:
    dist = {start: 0}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == stop_at:
            break
        d = dist[node] + 1
        for nb in world.neighbors[node]:
            if nb not in dist:
                dist[nb] = d
                queue.append(nb)
    return dist


def direction_between(a: Node, b: Node) -> Direction:
    dx, dy = b[0] - a[0], b[1] - a[1]
    for direction, delta in DELTAS.items():
        if delta == (dx, dy):
            return direction
    raise InvalidPathError(f"nodes {a} and {b} are not adjacent")


def turns_toward(current: Direction, target: Direction) -> list[Action]:
    """Minimal turn sequence; 180 degrees is two RIGHTs by tie-break."""
    diff = (target - current) % 4
    if diff == 0:
        return []
    if diff == 1:
        return [Action.RIGHT]
    if diff == 2:
        return [Action.RIGHT, Action.RIGHT]
    return [Action.LEFT]


def path_to_actions(path: list[Node], start_dir: Direction) -> list[Action]:
    """Translate a node path into turn/move actions ending in STOP."""
    actions: list[Action] = []
    facing = start_dir
    for a, b in zip(path, path[1:]):
        target = direction_between(a, b)
        actions.extend(turns_toward(facing, target))
        actions.append(Action.MOVE)
        facing = target
    actions.append(Action.STOP)
    return actions


def sample_endpoints(world: WorldMap, rng: random.Random, min_dist: int = 4,
                     max_attempts: int = 64) -> tuple[Node, Node]:
    """Uniform rejection sampling of node pairs at least min_dist hops apart."""
    if min_dist < 1:
        raise ValueError("min_dist must be >= 1")
    width, height = world.width, world.height
    for _ in range(max_attempts):
        start = (rng.randrange(width), rng.randrange(height))
        goal = (rng.randrange(width), rng.randrange(height))
        if start == goal:
            continue
        dist = bfs_distances(world, start, stop_at=goal).get(goal)
        if dist is not None and dist >= min_dist:
            return start, goal
    raise MapResampleNeeded(
        f"no node pair at distance >= {min_dist} found in {max_attempts} attempts")


def world_to_dict(world: WorldMap) -> dict:
    """Canonical JSON-ready form with stable key and element order."""
    edges = sorted(world.edges)
    return {
        "width": world.width,
        "height": world.height,
        "edges": [[a[0], a[1], b[0], b[1]] for a, b in edges],
        "items": {f"{x},{y}": world.items[(x, y)] for x, y in sorted(world.items)},
        "halls": [
            {
                "axis": h.axis,
                "edges": [[a[0], a[1], b[0], b[1]] for a, b in h.edges],
                "floor": h.floor,
            }
            for h in world.halls
        ],
        "edgeAttrs": [
            {
                "edge": [a[0], a[1], b[0], b[1]],
                "floor": world.edge_attrs[(a, b)][0],
                "wall": world.edge_attrs[(a, b)][1],
            }
            for a, b in edges
        ],
        "areas": [
            {"id": ar.id, "nodes": [[x, y] for x, y in ar.nodes], "wall": ar.wall}
            for ar in world.areas
        ],
    }


def world_from_dict(data: dict) -> WorldMap:
    def to_edge(quad: list[int]) -> Edge:
        return norm_edge((quad[0], quad[1]), (quad[2], quad[3]))

    edges = frozenset(to_edge(q) for q in data["edges"])
    items = {}
    for key, item in data["items"].items():
        x, y = key.split(",")
        items[(int(x), int(y))] = item
    halls = [
        Hall(h["axis"], [to_edge(q) for q in h["edges"]], h["floor"])
        for h in data["halls"]
    ]
    edge_attrs = {to_edge(ea["edge"]): (ea["floor"], ea["wall"]) for ea in data["edgeAttrs"]}
    areas = [
        Area(aa["id"], [(x, y) for x, y in aa["nodes"]], aa["wall"])
        for aa in data["areas"]
    ]
    return WorldMap(data["width"], data["height"], edges, items, halls, edge_attrs, areas)
