"""World generation, dynamics, and pathfinding tests.

Pathfinding is checked against an independent BFS oracle rather than
against fixtures, so the two route computations must agree everywhere.
"""

import random

import pytest

from mazenav.worldsim import (
    Action,
    Direction,
    InvalidPathError,
    MapResampleNeeded,
    NoPathError,
    Outcome,
    Pose,
    WorldConfig,
    WorldMap,
    bfs_distances,
    compute_halls,
    decorate,
    execute,
    generate_maze,
    generate_world,
    norm_edge,
    path_to_actions,
    sample_endpoints,
    shortest_path,
    step,
    turns_toward,
    world_from_dict,
    world_to_dict,
)

FLOORS = ("blue", "brick", "concrete", "flower", "grass", "gravel", "wood", "yellow")


def is_connected(width, height, edges):
    nodes = {(x, y) for x in range(width) for y in range(height)}
    adj = {n: [] for n in nodes}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = set()
    stack = [next(iter(nodes))]
    while stack:
        n = stack.pop()
        if n in seen:
            continue
        seen.add(n)
        stack.extend(adj[n])
    return seen == nodes


class TestMazeGeneration:
    def test_spanning_tree_many_seeds(self):
        for seed in range(200):
            rng = random.Random(seed)
            edges = generate_maze(8, 8, rng)
            assert len(edges) == 63  # |V| - 1: connected + acyclic
            assert is_connected(8, 8, edges)

    def test_rectangular_sizes(self):
        for width, height in [(1, 1), (1, 5), (5, 1), (2, 2), (3, 7)]:
            edges = generate_maze(width, height, random.Random(0))
            assert len(edges) == width * height - 1
            assert is_connected(width, height, edges)

    def test_zero_size_rejected(self):
        with pytest.raises(ValueError):
            generate_maze(0, 4, random.Random(0))

    def test_edges_are_normalized_grid_neighbors(self):
        edges = generate_maze(6, 6, random.Random(3))
        for a, b in edges:
            assert a < b
            assert abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1

    def test_deterministic_per_seed(self):
        assert generate_maze(8, 8, random.Random(11)) == generate_maze(8, 8, random.Random(11))


class TestHalls:
    def test_halls_partition_edges(self):
        for seed in range(30):
            edges = generate_maze(8, 8, random.Random(seed))
            halls = compute_halls(edges)
            covered = [e for h in halls for e in h.edges]
            assert sorted(covered) == sorted(edges)  # exactly once each

    def test_halls_are_maximal_straight_runs(self):
        edges = {norm_edge((0, 0), (1, 0)), norm_edge((1, 0), (2, 0)),
                 norm_edge((2, 0), (2, 1))}
        halls = compute_halls(edges)
        by_axis = {h.axis: h for h in halls}
        assert len(halls) == 2
        assert len(by_axis["horizontal"].edges) == 2
        assert len(by_axis["vertical"].edges) == 1

    def test_single_node_map_has_no_halls(self):
        assert compute_halls(set()) == []


class TestDecoration:
    def test_world_invariants(self):
        config = WorldConfig()
        for seed in range(50):
            world = generate_world(random.Random(seed), config)
            # one floor per hall, shared by all edges of the hall
            for hall in world.halls:
                assert hall.floor in FLOORS
                for e in hall.edges:
                    assert world.edge_attrs[e][0] == hall.floor
            # areas partition the nodes; every area owns at least one edge
            all_nodes = [n for ar in world.areas for n in ar.nodes]
            assert sorted(all_nodes) == sorted(
                (x, y) for x in range(8) for y in range(8))
            assert 1 <= len(world.areas) <= 3
            owner = {}
            for ar in world.areas:
                for n in ar.nodes:
                    owner[n] = ar.id
            owned = {ar.id: 0 for ar in world.areas}
            for a, b in world.edges:
                owned[min(owner[a], owner[b])] += 1
            assert all(c > 0 for c in owned.values())
            # distinct wall painting per area
            walls = [ar.wall for ar in world.areas]
            assert len(set(walls)) == len(walls)
            # edge painting comes from the lexicographically smaller endpoint's area
            wall_of = {ar.id: ar.wall for ar in world.areas}
            for a, b in world.edges:
                assert world.edge_attrs[(a, b)][1] == wall_of[owner[min(a, b)]]

    def test_item_rate_roughly_quarter(self):
        total = nodes = 0
        for seed in range(60):
            world = generate_world(random.Random(seed))
            total += len(world.items)
            nodes += 64
        assert 0.20 < total / nodes < 0.30

    def test_multiple_areas_common(self):
        counts = {1: 0, 2: 0, 3: 0}
        for seed in range(60):
            world = generate_world(random.Random(seed))
            counts[len(world.areas)] += 1
        assert counts[2] + counts[3] > counts[1]


class TestDynamics:
    def build_line_world(self):
        # 3x1 corridor: (0,0)-(1,0)-(2,0)
        edges = frozenset({norm_edge((0, 0), (1, 0)), norm_edge((1, 0), (2, 0))})
        halls = compute_halls(edges)
        for h in halls:
            h.floor = "blue"
        attrs = {e: ("blue", "fish") for e in edges}
        from mazenav.worldsim import Area
        return WorldMap(3, 1, edges, {}, halls, attrs, [Area(0, [(0, 0), (1, 0), (2, 0)], "fish")])

    def test_turns_rotate_in_place(self):
        world = self.build_line_world()
        pose = Pose(1, 0, Direction.NORTH)
        right = step(world, pose, Action.RIGHT)
        assert right.kind == "turned" and right.pose == Pose(1, 0, Direction.EAST)
        left = step(world, pose, Action.LEFT)
        assert left.pose == Pose(1, 0, Direction.WEST)

    def test_move_through_open_edge(self):
        world = self.build_line_world()
        result = step(world, Pose(0, 0, Direction.EAST), Action.MOVE)
        assert result.kind == "moved" and result.pose == Pose(1, 0, Direction.EAST)

    def test_move_into_wall_reports_wall_hit(self):
        world = self.build_line_world()
        result = step(world, Pose(0, 0, Direction.NORTH), Action.MOVE)
        assert result.kind == "wall_hit" and result.pose == Pose(0, 0, Direction.NORTH)

    def test_execute_outcomes(self):
        world = self.build_line_world()
        start = Pose(0, 0, Direction.EAST)
        pose, outcome = execute(world, start, [Action.MOVE, Action.MOVE, Action.STOP])
        assert outcome is Outcome.STOPPED and pose == Pose(2, 0, Direction.EAST)
        pose, outcome = execute(world, start, [Action.MOVE] * 5)
        assert outcome is Outcome.WALL_HIT
        pose, outcome = execute(world, start, [Action.MOVE])
        assert outcome is Outcome.EXHAUSTED and pose == Pose(1, 0, Direction.EAST)
        pose, outcome = execute(world, start, [Action.RIGHT] * 9, max_actions=4)
        assert outcome is Outcome.EXHAUSTED

    def test_stop_is_terminal_and_pose_preserving(self):
        world = self.build_line_world()
        start = Pose(1, 0, Direction.WEST)
        pose, outcome = execute(world, start, [Action.STOP, Action.MOVE])
        assert outcome is Outcome.STOPPED and pose == start


class TestPathfinding:
    def test_astar_matches_bfs_oracle(self):
        rng = random.Random(99)
        for _ in range(300):
            world = generate_world(rng)
            start = (rng.randrange(8), rng.randrange(8))
            goal = (rng.randrange(8), rng.randrange(8))
            path = shortest_path(world, start, goal)
            oracle = bfs_distances(world, start)[goal]
            assert len(path) - 1 == oracle
            assert path[0] == start and path[-1] == goal
            for a, b in zip(path, path[1:]):
                assert world.has_edge(a, b)

    def test_no_path_raises(self):
        from mazenav.worldsim import Area
        edges = frozenset({norm_edge((0, 0), (1, 0))})
        halls = compute_halls(edges)
        halls[0].floor = "blue"
        world = WorldMap(2, 2, edges, {}, halls, {e: ("blue", "fish") for e in edges},
                         [Area(0, [(0, 0), (1, 0), (0, 1), (1, 1)], "fish")])
        with pytest.raises(NoPathError):
            shortest_path(world, (0, 0), (1, 1))

    def test_trivial_path(self):
        world = generate_world(random.Random(1))
        assert shortest_path(world, (3, 3), (3, 3)) == [(3, 3)]

    def test_turns_toward_tie_break(self):
        assert turns_toward(Direction.NORTH, Direction.SOUTH) == [Action.RIGHT, Action.RIGHT]
        assert turns_toward(Direction.EAST, Direction.NORTH) == [Action.LEFT]
        assert turns_toward(Direction.EAST, Direction.SOUTH) == [Action.RIGHT]
        assert turns_toward(Direction.WEST, Direction.WEST) == []

    def test_path_to_actions_round_trip(self):
        rng = random.Random(7)
        for _ in range(100):
            world = generate_world(rng)
            start = (rng.randrange(8), rng.randrange(8))
            goal = (rng.randrange(8), rng.randrange(8))
            if start == goal:
                continue
            path = shortest_path(world, start, goal)
            direction = Direction(rng.randrange(4))
            actions = path_to_actions(path, direction)
            assert actions[-1] is Action.STOP
            assert Action.STOP not in actions[:-1]
            pose, outcome = execute(world, Pose(start[0], start[1], direction), actions)
            assert outcome is Outcome.STOPPED
            assert (pose.x, pose.y) == goal

    def test_path_to_actions_rejects_disconnected_nodes(self):
        with pytest.raises(InvalidPathError):
            path_to_actions([(0, 0), (2, 0)], Direction.EAST)


class TestEndpointSampling:
    def test_min_distance_respected(self):
        rng = random.Random(5)
        for _ in range(100):
            world = generate_world(rng)
            start, goal = sample_endpoints(world, rng, min_dist=4)
            assert bfs_distances(world, start)[goal] >= 4

    def test_impossible_distance_raises(self):
        from mazenav.worldsim import Area
        edges = frozenset({norm_edge((0, 0), (1, 0))})
        halls = compute_halls(edges)
        halls[0].floor = "blue"
        world = WorldMap(2, 1, edges, {}, halls, {e: ("blue", "fish") for e in edges},
                         [Area(0, [(0, 0), (1, 0)], "fish")])
        with pytest.raises(MapResampleNeeded):
            sample_endpoints(world, random.Random(0), min_dist=4)


class TestSerialization:
    def test_round_trip_identity(self):
        rng = random.Random(13)
        for _ in range(25):
            world = generate_world(rng)
            clone = world_from_dict(world_to_dict(world))
            assert clone.width == world.width and clone.height == world.height
            assert clone.edges == world.edges
            assert clone.items == world.items
            assert clone.edge_attrs == world.edge_attrs
            assert [(h.axis, sorted(h.edges), h.floor) for h in clone.halls] == \
                   [(h.axis, sorted(h.edges), h.floor) for h in world.halls]
            assert [(a.id, sorted(a.nodes), a.wall) for a in clone.areas] == \
                   [(a.id, sorted(a.nodes), a.wall) for a in world.areas]

    def test_dict_form_is_stable(self):
        world = generate_world(random.Random(21))
        import json
        once = json.dumps(world_to_dict(world), sort_keys=False)
        twice = json.dumps(world_to_dict(world), sort_keys=False)
        assert once == twice
