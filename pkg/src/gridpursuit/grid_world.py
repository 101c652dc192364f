"""Discrete rectangular grid world for multi-agent pursuit.

Agents occupy cells of a width x height grid.  All movement is simultaneous:
each tick every alive agent submits one action, moves are resolved together,
and evaders that end the tick with enough blocked adjacent cells are captured
and removed from occupancy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable


class Action(Enum):
    """Single-cell moves.  STAY is a policy-layer extension: the physics
    accepts it for any agent, but default pursuer policies never issue it."""

    UP = (0, 1)
    DOWN = (0, -1)
    LEFT = (-1, 0)
    RIGHT = (1, 0)
    STAY = (0, 0)


# Fixed order used for deterministic tie-breaking in policies.
ACTION_ORDER = (Action.UP, Action.DOWN, Action.LEFT, Action.RIGHT, Action.STAY)
MOVE_ACTIONS = ACTION_ORDER[:4]


@dataclass(frozen=True)
class Position:
    x: int
    y: int

    def moved(self, action: Action) -> "Position":
        dx, dy = action.value
        return Position(self.x + dx, self.y + dy)


def chebyshev(a: Position, b: Position) -> int:
    return max(abs(a.x - b.x), abs(a.y - b.y))


def manhattan(a: Position, b: Position) -> int:
    return abs(a.x - b.x) + abs(a.y - b.y)


def euclidean(a: Position, b: Position) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


DISTANCE_METRICS = {
    "chebyshev": chebyshev,
    "manhattan": manhattan,
    "euclidean": euclidean,
}


@dataclass(frozen=True)
class GridConfig:
    width: int
    height: int
    obstacles: frozenset = frozenset()

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ValueError("grid must be at least 2x2")
        object.__setattr__(self, "obstacles", frozenset(self.obstacles))
        for pos in self.obstacles:
            if not self.in_bounds(pos):
                raise ValueError(f"obstacle {pos} out of bounds")

    def in_bounds(self, pos: Position) -> bool:
        return 0 <= pos.x < self.width and 0 <= pos.y < self.height

    def is_obstacle(self, pos: Position) -> bool:
        return pos in self.obstacles

    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)


@dataclass
class PursuerState:
    id: int
    pos: Position
    succeeded: int = 0      # tasks completed successfully
    participated: int = 0   # tasks joined
    abandoned: int = 0      # evaders left uncaught at coalition expiry
    pursuit_range: int = 1  # Chebyshev radius considered "invaded"


@dataclass
class EvaderState:
    id: int
    pos: Position
    difficulty: int = 1     # blocked adjacent cells required for capture
    reward: float = 1.0     # payoff magnitude; defaults to difficulty at setup
    captured: bool = False


@dataclass
class WorldState:
    config: GridConfig
    pursuers: list = field(default_factory=list)
    evaders: list = field(default_factory=list)
    tick: int = 0

    def alive_evaders(self) -> list:
        return [e for e in self.evaders if not e.captured]

    def agent_ids(self) -> set:
        return {p.id for p in self.pursuers} | {e.id for e in self.evaders}

    def occupied(self) -> dict:
        """Map of cell -> agent id for every alive agent."""
        cells = {}
        for p in self.pursuers:
            cells[p.pos] = p.id
        for e in self.evaders:
            if not e.captured:
                cells[e.pos] = e.id
        return cells

    def pursuer_cells(self) -> set:
        return {p.pos for p in self.pursuers}

    def validate(self):
        """Raise if occupancy or placement invariants are broken."""
        seen = {}
        for p in self.pursuers:
            self._check_cell(p.pos, p.id, seen)
        for e in self.evaders:
            if not e.captured:
                self._check_cell(e.pos, e.id, seen)

    def _check_cell(self, pos: Position, agent_id: int, seen: dict):
        if not self.config.in_bounds(pos):
            raise ValueError(f"agent {agent_id} out of bounds at {pos}")
        if self.config.is_obstacle(pos):
            raise ValueError(f"agent {agent_id} on obstacle at {pos}")
        if pos in seen:
            raise ValueError(f"agents {seen[pos]} and {agent_id} share cell {pos}")
        seen[pos] = agent_id

    def snapshot(self) -> dict:
        """Plain-data record of the current tick, for replay traces."""
        return {
            "tick": self.tick,
            "pursuers": [[p.id, p.pos.x, p.pos.y] for p in self.pursuers],
            "evaders": [[e.id, e.pos.x, e.pos.y, e.captured] for e in self.evaders],
        }


def neighbors(pos: Position, world: WorldState) -> list:
    """4-adjacent in-bounds cells; out-of-bounds sides are simply absent."""
    cells = []
    for action in MOVE_ACTIONS:
        nxt = pos.moved(action)
        if world.config.in_bounds(nxt):
            cells.append(nxt)
    return cells


def blocked_neighbor_count(pos: Position, world: WorldState) -> int:
    """Count blocked sides around a cell: walls, obstacles and occupied cells.

    A missing out-of-bounds neighbour blocks escape exactly like an obstacle,
    so it contributes 1.  Another alive evader blocks the cell it stands on
    the same way (nothing can move through it); without this, two adjacent
    hard evaders in a corner can never be captured and a run cannot end.
    """
    in_bounds = neighbors(pos, world)
    blocked = 4 - len(in_bounds)
    occupied = world.pursuer_cells()
    for e in world.evaders:
        if not e.captured and e.pos != pos:
            occupied.add(e.pos)
    for cell in in_bounds:
        if world.config.is_obstacle(cell) or cell in occupied:
            blocked += 1
    return blocked


def is_captured(evader: EvaderState, world: WorldState) -> bool:
    return evader.difficulty <= blocked_neighbor_count(evader.pos, world)


def count_range_invaders(evader: EvaderState, world: WorldState,
                         metric: str = "chebyshev") -> int:
    """Number of pursuers whose pursuit range the evader has invaded."""
    dist = DISTANCE_METRICS[metric]
    return sum(1 for p in world.pursuers if dist(p.pos, evader.pos) <= p.pursuit_range)


def step(world: WorldState, joint_actions: dict) -> WorldState:
    """Resolve one tick of simultaneous movement.

    Moves into walls or obstacles are cancelled.  Movers contesting the same
    target cell lose to the lowest agent id.  A move into a cell that remains
    occupied (its occupant stays or had its own move cancelled) is cancelled;
    chains and swaps where every cell is vacated do resolve.  After movement,
    evaders with enough blocked neighbours are marked captured, and the tick
    counter advances.  Agents without an entry in the action map stay put.
    """
    alive = {}
    for p in world.pursuers:
        alive[p.id] = p
    for e in world.evaders:
        if not e.captured:
            alive[e.id] = e
    for agent_id in joint_actions:
        if agent_id not in alive:
            raise ValueError(f"action for unknown or captured agent id {agent_id}")

    positions = {aid: agent.pos for aid, agent in alive.items()}
    intents = {}
    for aid, agent in alive.items():
        action = joint_actions.get(aid, Action.STAY)
        target = agent.pos.moved(action)
        if target == agent.pos:
            continue
        if not world.config.in_bounds(target) or world.config.is_obstacle(target):
            continue  # cancelled: stays
        intents[aid] = target

    # Same-target conflicts: lowest id keeps the move.
    claimed = {}
    for aid in sorted(intents):
        target = intents[aid]
        if target in claimed:
            pass  # higher id loses, stays
        else:
            claimed[target] = aid
    movers = {aid: tgt for tgt, aid in claimed.items()}

    # Cancel moves into cells that remain occupied, to a fixpoint.
    occupied_by = {pos: aid for aid, pos in positions.items()}
    while True:
        cancelled = []
        for aid, target in movers.items():
            blocker = occupied_by.get(target)
            if blocker is not None and blocker != aid and blocker not in movers:
                cancelled.append(aid)
        if not cancelled:
            break
        for aid in cancelled:
            del movers[aid]

    final = dict(positions)
    final.update(movers)

    new_pursuers = [replace(p, pos=final[p.id]) for p in world.pursuers]
    new_evaders = []
    for e in world.evaders:
        if e.captured:
            new_evaders.append(replace(e))
        else:
            new_evaders.append(replace(e, pos=final[e.id]))

    moved = WorldState(config=world.config, pursuers=new_pursuers,
                       evaders=new_evaders, tick=world.tick + 1)

    # Capture pass runs once, simultaneously, against post-movement occupancy.
    caught = [e for e in moved.evaders if not e.captured and is_captured(e, moved)]
    for e in caught:
        e.captured = True
    return moved


def place_agents(config: GridConfig, n_pursuers: int, n_evaders: int,
                 difficulties: Iterable, pursuit_range: int, rng) -> WorldState:
    """Uniform random placement of all agents on distinct free cells."""
    free = [Position(x, y)
            for x in range(config.width)
            for y in range(config.height)
            if not config.is_obstacle(Position(x, y))]
    difficulties = list(difficulties)
    total = n_pursuers + n_evaders
    if len(free) < total:
        raise ValueError("not enough free cells for all agents")
    if len(difficulties) != n_evaders:
        raise ValueError("one difficulty per evader required")
    picks = rng.choice(len(free), size=total, replace=False)
    pursuers = [PursuerState(id=i, pos=free[picks[i]], pursuit_range=pursuit_range)
                for i in range(n_pursuers)]
    evaders = [EvaderState(id=n_pursuers + j, pos=free[picks[n_pursuers + j]],
                           difficulty=difficulties[j], reward=float(difficulties[j]))
               for j in range(n_evaders)]
    return WorldState(config=config, pursuers=pursuers, evaders=evaders)
