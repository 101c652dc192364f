import numpy as np
import pytest

from gridpursuit.grid_world import (Action, GridConfig, Position, WorldState,
                                    blocked_neighbor_count, count_range_invaders,
                                    is_captured, neighbors, place_agents, step)

from oracles import make_world


def test_neighbors_interior():
    world = make_world(10, 10, [], [(5, 5, 1)])
    got = set(neighbors(Position(5, 5), world))
    assert got == {Position(4, 5), Position(6, 5), Position(5, 4), Position(5, 6)}


def test_neighbors_corner_clipped():
    world = make_world(10, 10, [], [(5, 5, 1)])
    assert set(neighbors(Position(0, 0), world)) == {Position(1, 0), Position(0, 1)}


def test_neighbors_edge_clipped():
    world = make_world(10, 10, [], [(5, 5, 1)])
    assert len(neighbors(Position(0, 5), world)) == 3


def test_captured_fully_surrounded():
    world = make_world(10, 10, [(4, 5), (6, 5), (5, 4), (5, 6)], [(5, 5, 4)])
    assert is_captured(world.evaders[0], world)


def test_captured_corner_with_one_pursuer():
    # corner contributes two wall blocks, one pursuer completes d=3
    world = make_world(10, 10, [(1, 0)], [(0, 0, 3)])
    assert is_captured(world.evaders[0], world)


def test_not_captured_single_pursuer():
    world = make_world(10, 10, [(4, 5)], [(5, 5, 2)])
    assert not is_captured(world.evaders[0], world)


def test_adjacent_evader_blocks_escape():
    # a corner pair of hard evaders must still be capturable: the inner one
    # blocks the corner one's only other exit
    world = make_world(10, 10, [(8, 9), (9, 8)], [(9, 9, 4), (8, 8, 4)])
    corner = world.evaders[0]
    assert blocked_neighbor_count(corner.pos, world) == 4
    assert is_captured(corner, world)


def test_range_invaders_empty():
    world = make_world(20, 20, [], [(10, 10, 2)])
    assert count_range_invaders(world.evaders[0], world) == 0


def test_range_invaders_boundary_inclusive():
    world = make_world(20, 20, [(13, 10)], [(10, 10, 2)], pursuit_range=3)
    assert count_range_invaders(world.evaders[0], world) == 1


def test_range_invaders_brute_force():
    cells = [(8, 8), (12, 12), (10, 13), (1, 1), (18, 2)]
    world = make_world(20, 20, cells, [(10, 10, 2)], pursuit_range=3)
    expected = sum(1 for (x, y) in cells
                   if max(abs(x - 10), abs(y - 10)) <= 3)
    assert expected == 3
    assert count_range_invaders(world.evaders[0], world) == expected


def test_step_simple_move():
    world = make_world(10, 10, [(2, 2)], [(8, 8, 1)])
    after = step(world, {0: Action.RIGHT})
    assert after.pursuers[0].pos == Position(3, 2)
    assert after.tick == world.tick + 1


def test_step_conflict_lowest_id_wins():
    world = make_world(10, 10, [(2, 2), (4, 2)], [(8, 8, 1)])
    after = step(world, {0: Action.RIGHT, 1: Action.LEFT})
    assert after.pursuers[0].pos == Position(3, 2)
    assert after.pursuers[1].pos == Position(4, 2)


def test_step_move_into_wall_cancelled():
    world = make_world(10, 10, [(0, 0)], [(8, 8, 1)])
    after = step(world, {0: Action.LEFT})
    assert after.pursuers[0].pos == Position(0, 0)


def test_step_move_into_obstacle_cancelled():
    world = make_world(10, 10, [(2, 2)], [(8, 8, 1)], obstacles=[(3, 2)])
    after = step(world, {0: Action.RIGHT})
    assert after.pursuers[0].pos == Position(2, 2)


def test_step_chain_into_vacated_cell():
    world = make_world(10, 10, [(2, 2), (3, 2)], [(8, 8, 1)])
    after = step(world, {0: Action.RIGHT, 1: Action.RIGHT})
    assert after.pursuers[0].pos == Position(3, 2)
    assert after.pursuers[1].pos == Position(4, 2)


def test_step_blocked_by_stayer():
    world = make_world(10, 10, [(2, 2), (3, 2)], [(8, 8, 1)])
    after = step(world, {0: Action.RIGHT, 1: Action.STAY})
    assert after.pursuers[0].pos == Position(2, 2)


def test_step_capture_after_move():
    # pursuer steps next to a d=1 evader sitting in the corner
    world = make_world(10, 10, [(2, 0)], [(0, 0, 1)])
    after = step(world, {0: Action.LEFT})
    assert after.pursuers[0].pos == Position(1, 0)
    assert after.evaders[0].captured


def test_step_rejects_unknown_agent():
    world = make_world(10, 10, [(2, 2)], [(8, 8, 1)])
    with pytest.raises(ValueError):
        step(world, {99: Action.UP})


def test_step_rejects_captured_agent():
    world = make_world(10, 10, [(2, 0)], [(0, 0, 1)])
    world = step(world, {0: Action.LEFT})
    assert world.evaders[0].captured
    with pytest.raises(ValueError):
        step(world, {world.evaders[0].id: Action.UP})


def test_step_determinism():
    world = make_world(12, 12, [(2, 2), (3, 7), (9, 4)], [(6, 6, 2), (10, 10, 3)])
    actions = {0: Action.RIGHT, 1: Action.UP, 2: Action.LEFT,
               3: Action.DOWN, 4: Action.STAY}
    a = step(world, actions)
    b = step(world, actions)
    assert a.snapshot() == b.snapshot()


def test_random_walk_preserves_invariants():
    rng = np.random.default_rng(7)
    config = GridConfig(width=12, height=12,
                        obstacles=frozenset({Position(4, 4), Position(7, 2)}))
    world = place_agents(config, 6, 4, [1, 2, 3, 4], 3, rng)
    world.validate()
    choices = list(Action)
    captured_counts = []
    for _ in range(60):
        actions = {}
        for p in world.pursuers:
            actions[p.id] = choices[rng.integers(len(choices))]
        for e in world.alive_evaders():
            actions[e.id] = choices[rng.integers(len(choices))]
        world = step(world, actions)
        world.validate()
        captured_counts.append(sum(e.captured for e in world.evaders))
    assert captured_counts == sorted(captured_counts)


def test_grid_config_validation():
    with pytest.raises(ValueError):
        GridConfig(width=1, height=5)
    with pytest.raises(ValueError):
        GridConfig(width=5, height=5, obstacles=frozenset({Position(9, 0)}))
