"""Motion strategy: group reward fields and tabular Q-learning.

Each coalition sees an immediate-payoff surface built from Gaussian bumps on
its evaders, scaled by reward magnitude and live priority.  Pursuers learn a
position-indexed Q table against that surface; the same one-step update rule
serves both online learning from real transitions and offline sweeps that
train a table to the optimal policy for a frozen field.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid_world import (ACTION_ORDER, MOVE_ACTIONS, Action, GridConfig, Position,
                         WorldState, euclidean)
from .membership import priority

ACTION_INDEX = {a: i for i, a in enumerate(MOVE_ACTIONS)}


@dataclass
class RewardField:
    group_id: int
    values: np.ndarray  # indexed [x, y]

    def at(self, pos: Position) -> float:
        return float(self.values[pos.x, pos.y])


def bump_surface(bumps, config: GridConfig, sigma_scale: float = 1.0) -> np.ndarray:
    """Sum of Gaussian bumps, one per (position, height) pair."""
    w, h = config.width, config.height
    values = np.zeros((w, h), dtype=np.float32)
    # beyond this radius a bump contributes < 1e-14 of its height
    reach = int(math.ceil(8.5 * math.sqrt(sigma_scale)))
    for pos, height in bumps:
        x0, x1 = max(0, pos.x - reach), min(w, pos.x + reach + 1)
        y0, y1 = max(0, pos.y - reach), min(h, pos.y + reach + 1)
        xs = np.arange(x0, x1, dtype=float)[:, None]
        ys = np.arange(y0, y1, dtype=float)[None, :]
        values[x0:x1, y0:y1] += height * np.exp(
            -((xs - pos.x) ** 2 + (ys - pos.y) ** 2) / (2.0 * sigma_scale))
    return values


def reward_field(group_id: int, evaders, world: WorldState,
                 sigma_scale: float = 1.0, heights: dict | None = None,
                 metric: str = "chebyshev") -> RewardField:
    """Immediate payoff surface of a group: one Gaussian bump per alive
    member evader, height reward * priority, recomputed from the live world.

    ``heights`` pins the bump heights instead (for priority frozen at
    formation time); ``metric`` selects the range-invasion distance.
    """
    evaders = [e for e in evaders if not e.captured]
    if not evaders:
        raise ValueError("group has no alive evaders")
    bumps = []
    for e in evaders:
        if heights is not None:
            height = heights[e.id]
        else:
            height = e.reward * priority(e, world, metric)
        bumps.append((e.pos, height))
    return RewardField(group_id=group_id,
                       values=bump_surface(bumps, world.config, sigma_scale))


def group_reward(x: int, y: int, group, world: WorldState,
                 sigma_scale: float = 1.0) -> float:
    """Scalar payoff at one cell for a coalition's evader group."""
    by_id = {e.id: e for e in world.evaders}
    members = [by_id[eid] for eid in group.evader_ids if not by_id[eid].captured]
    if not members:
        raise ValueError("group has no alive evaders")
    total = 0.0
    for e in members:
        d2 = (x - e.pos.x) ** 2 + (y - e.pos.y) ** 2
        total += e.reward * priority(e, world) * math.exp(-d2 / (2.0 * sigma_scale))
    return total


@dataclass
class QTable:
    owner: int
    values: np.ndarray          # width x height x 4, zero for unvisited
    alpha: float = 0.3
    discount: float = 0.9
    epsilon: float = 0.1

    @classmethod
    def zeros(cls, config: GridConfig, owner: int = -1, **kwargs) -> "QTable":
        return cls(owner=owner, values=np.zeros((config.width, config.height, 4), dtype=np.float32), **kwargs)


@dataclass
class TransitionRecord:
    s: Position
    a: Action
    r: float
    s_next: Position


def q_update(table: QTable, tr: TransitionRecord) -> QTable:
    """One-step update toward r + discount * best successor value."""
    ai = ACTION_INDEX[tr.a]
    best_next = table.values[tr.s_next.x, tr.s_next.y].max()
    old = table.values[tr.s.x, tr.s.y, ai]
    table.values[tr.s.x, tr.s.y, ai] = ((1.0 - table.alpha) * old
                                        + table.alpha * (tr.r + table.discount * best_next))
    return table


def legal_moves(pos: Position, config: GridConfig) -> list:
    """Move actions whose target cell is inside the grid and not an obstacle."""
    out = []
    for a in MOVE_ACTIONS:
        t = pos.moved(a)
        if config.in_bounds(t) and not config.is_obstacle(t):
            out.append(a)
    return out


def select_action(table: QTable, s: Position, rng,
                  legal: list | None = None) -> Action:
    """Epsilon-greedy over the four move actions.

    Both branches draw from ``legal`` (all four when not given): exploration
    uniformly, exploitation by the best Q value with ties broken in fixed
    action order.
    """
    pool = legal if legal else list(MOVE_ACTIONS)
    if table.epsilon > 0 and rng.random() < table.epsilon:
        return pool[rng.integers(len(pool))]
    best, best_q = pool[0], -math.inf
    for a in pool:
        q = table.values[s.x, s.y, ACTION_INDEX[a]]
        if q > best_q:
            best, best_q = a, q
    return best


def pursuer_policy_step(p, coalition, field: RewardField | None,
                        table: QTable | None, rng, config: GridConfig,
                        blocked=frozenset()) -> Action:
    """Action choice for one pursuer.

    Assigned pursuers act epsilon-greedily on their coalition's Q table; a
    pursuer with no coalition wanders uniformly over its legal moves.  Cells
    in ``blocked`` (teammates' current positions) are excluded, so a pursuer
    whose best path is plugged slides around the blocker instead of queueing
    behind it.  With nowhere to go the pursuer stays.
    """
    legal = [a for a in legal_moves(p.pos, config) if p.pos.moved(a) not in blocked]
    if not legal:
        return Action.STAY
    if coalition is None or table is None or field is None:
        return legal[rng.integers(len(legal))]
    return select_action(table, p.pos, rng, legal)


def evader_policy_step(e, world: WorldState, rng) -> Action:
    """Escape heuristic: take the free adjacent cell (or stay) that maximises
    the distance to the closest pursuer; ties resolve in fixed action order."""
    occupied = set(world.occupied())
    candidates = [(Action.STAY, e.pos)]
    for a in MOVE_ACTIONS:
        t = e.pos.moved(a)
        if (world.config.in_bounds(t) and not world.config.is_obstacle(t)
                and t not in occupied):
            candidates.append((a, t))

    def clearance(cell):
        if not world.pursuers:
            return math.inf
        return min(euclidean(cell, p.pos) for p in world.pursuers)

    best_action, best_score = Action.STAY, -math.inf
    for a in ACTION_ORDER:  # fixed order makes the tie-break explicit
        for ca, cell in candidates:
            if ca is not a:
                continue
            score = clearance(cell)
            if score > best_score:
                best_action, best_score = a, score
    return best_action


def discounted_return(rewards, discount: float) -> float:
    if not 0.0 <= discount < 1.0:
        raise ValueError("discount must be in [0, 1)")
    return float(sum(r * discount ** i for i, r in enumerate(rewards)))


# ---------------------------------------------------------------------------
# Offline training against a frozen field.
#
# The world is deterministic: a blocked move leaves the agent in place.  That
# makes the one-step update over all state-action pairs a batch operation, so
# a table can be swept to the optimal policy in milliseconds.
# ---------------------------------------------------------------------------

_SUCC_CACHE: dict = {}


def successor(pos: Position, action: Action, config: GridConfig) -> Position:
    """Single-agent movement rule: blocked moves stay put."""
    t = pos.moved(action)
    if config.in_bounds(t) and not config.is_obstacle(t):
        return t
    return pos


def successor_tables(config: GridConfig) -> np.ndarray:
    """Flat successor cell index per (cell, action), cached per grid."""
    cached = _SUCC_CACHE.get(config)
    if cached is not None:
        return cached
    w, h = config.width, config.height
    xx, yy = np.meshgrid(np.arange(w), np.arange(h), indexing="ij")
    obstacle = np.zeros((w, h), dtype=bool)
    for pos in config.obstacles:
        obstacle[pos.x, pos.y] = True
    succ = np.empty((w * h, 4), dtype=np.intp)
    for ai, a in enumerate(MOVE_ACTIONS):
        dx, dy = a.value
        tx, ty = xx + dx, yy + dy
        invalid = (tx < 0) | (tx >= w) | (ty < 0) | (ty >= h)
        tx = np.where(invalid, xx, tx)
        ty = np.where(invalid, yy, ty)
        blocked = obstacle[tx, ty]
        tx = np.where(blocked, xx, tx)
        ty = np.where(blocked, yy, ty)
        succ[:, ai] = (tx * h + ty).ravel()
    _SUCC_CACHE[config] = succ
    return succ


def sweep_q(table: QTable, field: RewardField, config: GridConfig,
            sweeps: int, alpha: float | None = None, tol: float = 0.0) -> int:
    """Apply the one-step update to every state-action pair, `sweeps` times.

    Rewards are read at the successor cell, matching the online transition
    convention.  Stops early once the largest update falls to ``tol``.
    Returns the number of sweeps actually run.
    """
    succ = successor_tables(config)
    a = table.alpha if alpha is None else alpha
    lam = table.discount
    q = table.values.reshape(-1, 4)
    r_next = field.values.reshape(-1)[succ].astype(q.dtype, copy=False)
    n = q.shape[0]
    v = np.empty(n, dtype=q.dtype)
    tmp = np.empty(n, dtype=q.dtype)
    target = np.empty_like(q)
    done = 0
    for _ in range(sweeps):
        # v = max over the four action columns, done pairwise (much faster
        # than reducing along the tiny axis)
        np.maximum(q[:, 0], q[:, 1], out=v)
        np.maximum(q[:, 2], q[:, 3], out=tmp)
        np.maximum(v, tmp, out=v)
        np.take(v, succ, out=target)
        target *= lam
        target += r_next
        target -= q
        if a != 1.0:
            target *= a
        q += target
        done += 1
        if tol > 0 and float(np.abs(target).max()) <= tol:
            break
    return done


def train_on_field(table: QTable, field: RewardField, config: GridConfig,
                   tol: float = 1e-10, max_sweeps: int = 10000,
                   alpha: float = 1.0) -> int:
    """Sweep the update rule until the table stops changing (optimal policy
    for the frozen field).  Returns sweeps used."""
    return sweep_q(table, field, config, max_sweeps, alpha=alpha, tol=tol)


def distance_potential(peaks, config: GridConfig, discount: float) -> np.ndarray:
    """Optimistic value guess: each peak's height decayed per step of
    Chebyshev distance.  Used to seed fresh tables so that far-off gradients
    exist before any sweep."""
    w, h = config.width, config.height
    xs = np.arange(w)[:, None]
    ys = np.arange(h)[None, :]
    v = np.zeros((w, h), dtype=np.float32)
    for pos, height in peaks:
        dist = np.maximum(np.abs(xs - pos.x), np.abs(ys - pos.y))
        np.maximum(v, height * discount ** dist, out=v)
    return v


def plan_in_box(table: QTable, plan_values: np.ndarray, peaks, box,
                config: GridConfig, sweeps: int) -> None:
    """Re-derive the policy inside a bounding box of the action.

    Seeds the boxed region of the table from a fresh distance potential and
    runs refinement sweeps with shifted-slice successors (valid because the
    grid edge clamps moves; falls back to nothing special for obstacles,
    which callers must route to the full-grid path instead).  Cells outside
    the box keep their previous values and act as a frozen boundary.
    """
    x0, x1, y0, y1 = box
    lam = table.discount
    xs = np.arange(x0, x1)[:, None]
    ys = np.arange(y0, y1)[None, :]
    v = np.zeros((x1 - x0, y1 - y0), dtype=np.float32)
    for pos, height in peaks:
        dist = np.maximum(np.abs(xs - pos.x), np.abs(ys - pos.y))
        np.maximum(v, height * lam ** dist, out=v)

    r = plan_values[x0:x1, y0:y1]
    q = table.values[x0:x1, y0:y1]
    bw, bh = v.shape
    rs = np.empty((4, bw, bh), dtype=np.float32)
    vs = np.empty((4, bw, bh), dtype=np.float32)

    def shift(dst, src):
        # dst[a] = src at the successor cell of each action; the box edge
        # clamps exactly like the grid edge when they coincide, and otherwise
        # holds the boundary value, which the frozen outside region backs up.
        dst[0, :, :-1] = src[:, 1:]   # up
        dst[0, :, -1] = src[:, -1]
        dst[1, :, 1:] = src[:, :-1]   # down
        dst[1, :, 0] = src[:, 0]
        dst[2, 1:, :] = src[:-1, :]   # left
        dst[2, 0, :] = src[0, :]
        dst[3, :-1, :] = src[1:, :]   # right
        dst[3, -1, :] = src[-1, :]

    shift(rs, r)
    # seed: reward at successor plus discounted optimistic value
    shift(vs, v)
    for ai in range(4):
        q[:, :, ai] = rs[ai] + lam * vs[ai]
    for _ in range(sweeps):
        np.maximum(q[:, :, 0], q[:, :, 1], out=v)
        np.maximum(v, q[:, :, 2], out=v)
        np.maximum(v, q[:, :, 3], out=v)
        shift(vs, v)
        for ai in range(4):
            np.multiply(vs[ai], lam, out=vs[ai])
            vs[ai] += rs[ai]
        q[:] = np.moveaxis(vs, 0, 2)


def seed_table(table: QTable, field: RewardField, config: GridConfig,
               potential: np.ndarray) -> QTable:
    """Initialise Q from a value guess: r at successor plus discounted guess."""
    succ = successor_tables(config)
    flat_q = table.values.reshape(-1, 4)
    flat_q[:] = field.values.reshape(-1)[succ] + table.discount * potential.reshape(-1)[succ]
    return table
