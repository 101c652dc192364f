"""Single-run simulation loop.

One run wires the pieces together, tick by tick: refresh each coalition's
payoff surface and re-plan its shared Q table, let every agent pick a move,
resolve the world step, settle capture rewards and lifetime punishments, and
reorganize coalitions whenever one finished, expired, or the evader grouping
drifted away from the clustering's current output.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import rng as streams
from .clustering import (ClusterAssignment, SofmConfig, assign, dbscan,
                         kmeans_refine, kmeans_seed_centroids, singleton, train_sofm)
from .coalition import (allocate_pursuers, form_coalitions, refresh_staffing,
                        reorganize, tick_coalitions)
from .grid_world import Action, GridConfig, Position, place_agents, step
from .learning import (QTable, RewardField, TransitionRecord, bump_surface,
                       distance_potential, evader_policy_step, legal_moves,
                       plan_in_box, pursuer_policy_step, q_update, seed_table,
                       select_action, sweep_q)
from .membership import Coefficients, membership_matrix, priority

CASES = ("AGR", "AGRMF", "SOFM_AGRMF", "KMEANS_AGRMF", "DBSCAN_AGRMF")


@dataclass
class RunMetrics:
    seed: int
    capture_ticks: int
    flexibility: int
    reward_trajectory: list
    per_evader_capture_ticks: dict


@dataclass
class _CoalitionRuntime:
    field: object
    table: QTable
    age: int = 0
    frozen_heights: dict | None = None
    field_key: tuple = ()


def case_behavior(cfg):
    """Clustering method, membership weights and counter learning per case."""
    full = Coefficients(cfg.coef_dist, cfg.coef_conf, cfg.coef_cred)
    if cfg.case == "AGR":
        return "SINGLETON", Coefficients(cfg.coef_dist, 0.0, 0.0), False
    if cfg.case == "AGRMF":
        return "SINGLETON", full, True
    if cfg.case == "SOFM_AGRMF":
        return "SOFM", full, True
    if cfg.case == "KMEANS_AGRMF":
        return "KMEANS", full, True
    if cfg.case == "DBSCAN_AGRMF":
        return "DBSCAN", full, True
    raise ValueError(f"unknown case {cfg.case!r}")


class TraceWriter:
    """Line-oriented JSON replay trace: one record per tick."""

    def __init__(self, fh):
        self.fh = fh

    def write(self, record: dict):
        json.dump(record, self.fh, separators=(",", ":"))
        self.fh.write("\n")


class Simulation:
    def __init__(self, cfg, seed: int, trace: TraceWriter | None = None):
        self.cfg = cfg
        self.seed = seed
        self.trace = trace
        self.method, self.coefs, self.counters_enabled = case_behavior(cfg)

        self.placement_rng = streams.substream(seed, streams.PLACEMENT, 0)
        self.difficulty_rng = streams.substream(seed, streams.PLACEMENT, 1)
        self.sofm_rng = streams.substream(seed, streams.SOFM)
        self.kmeans_rng = streams.substream(seed, streams.KMEANS)
        self.pursuer_rngs = {}
        self.evader_rngs = {}

        self.net = None
        self.centroids = None
        self.velocities = {}
        self.last_partition = None
        self.partition_streak = 0
        # live staffing correction is part of the membership machinery;
        # the bare organizational baseline only re-forms teams when a
        # coalition completes or its lifetime runs out
        self.staffing_live = cfg.case != "AGR"
        self.last_proposal = None
        self.staffing_streak = 0
        self.runtimes: dict = {}
        self.evader_tables: dict = {}
        self.events: list = []

    # -- clustering per case -------------------------------------------------

    def _cluster_params(self) -> dict:
        if self.method == "SOFM":
            return {"network": self.net}
        if self.method == "KMEANS":
            return {"k": self.cfg.kmeans_k, "centroids": self.centroids}
        if self.method == "DBSCAN":
            return {"eps": self.cfg.dbscan_eps, "min_pts": self.cfg.dbscan_min_pts}
        return {}

    def _sofm_config(self, warm: bool) -> SofmConfig:
        epochs = self.cfg.sofm_epochs
        lr_initial = self.cfg.sofm_lr_initial
        if warm:  # keep an adapted map stable between regroupings
            epochs = max(1, epochs // 5)
            lr_initial = max(self.cfg.sofm_lr_final, lr_initial / 5)
        return SofmConfig(
            output_nodes=self.cfg.sofm_nodes or self.cfg.n_evaders,
            epochs=epochs,
            lr_initial=lr_initial,
            lr_final=self.cfg.sofm_lr_final,
            radius_final=self.cfg.sofm_radius_final,
            seed=int(self.sofm_rng.integers(2 ** 62)),
        )

    def _current_assignment(self, matrix) -> ClusterAssignment:
        """Grouping the organizer would produce right now, without retraining."""
        if self.method == "SINGLETON":
            return singleton(matrix)
        if self.method == "SOFM":
            return assign(self.net, matrix)
        if self.method == "KMEANS":
            assignment, self.centroids = kmeans_refine(matrix, self.centroids)
            return assignment
        return dbscan(matrix, self.cfg.dbscan_eps, self.cfg.dbscan_min_pts)

    def _refresh_clusterer(self, matrix, reseed: bool = False):
        """Retrain / re-anchor the clustering model ahead of a (re)formation."""
        if self.method == "SOFM":
            self.net = train_sofm(matrix, self._sofm_config(warm=self.net is not None),
                                  initial=self.net)
        elif self.method == "KMEANS":
            # warm Lloyd refinement between captures keeps the partition
            # stable; a capture changes the dataset, so the centroids reseed
            # from scratch then (and whenever the cluster count changes)
            k = min(self.cfg.kmeans_k, len(matrix.evader_ids))
            if reseed or self.centroids is None or len(self.centroids) != k:
                seed = int(self.kmeans_rng.integers(2 ** 62))
                self.centroids = kmeans_seed_centroids(matrix.values, k, seed)
            _, self.centroids = kmeans_refine(matrix, self.centroids)

    # -- coalition runtime ---------------------------------------------------

    def _coalition_members(self, c, world):
        by_id = {e.id: e for e in world.evaders}
        return [by_id[eid] for eid in c.evader_ids if not by_id[eid].captured]

    def _lead_position(self, e, world) -> Position:
        """Where the evader is headed: current position extrapolated along
        its last step, clipped to the grid."""
        lead = self.cfg.lead_ticks
        vx, vy = self.velocities.get(e.id, (0, 0))
        if lead <= 0 or (vx == 0 and vy == 0):
            return e.pos
        x = min(world.config.width - 1, max(0, e.pos.x + lead * vx))
        y = min(world.config.height - 1, max(0, e.pos.y + lead * vy))
        return Position(x, y)

    def _plan(self, rt, coalition, members, world, sweeps: int):
        """Rebuild the payoff field and re-derive the policy for the current
        evader positions: optimistic distance seed, then refinement sweeps.

        Planning is stateless per call, so far-away pursuers always head for
        where the peaks are now rather than where they were at formation.
        The policy trains on an anticipated copy of the surface in which part
        of each bump sits ahead of the evader along its current heading; a
        chaser that aims at the anticipated point cuts corners instead of
        tailing the target at equal speed.  Rewards always come from the real
        surface (rt.field)."""
        cfg = self.cfg
        if rt.frozen_heights is not None:
            heights = {e.id: rt.frozen_heights[e.id] for e in members}
        else:
            heights = {e.id: e.reward * priority(e, world, cfg.metric) for e in members}
        rt.field = RewardField(rt.field.group_id if rt.field else 0,
                               bump_surface([(e.pos, heights[e.id]) for e in members],
                                            world.config, cfg.sigma_scale))
        w = min(1.0, max(0.0, cfg.lead_weight)) if cfg.lead_ticks > 0 else 0.0
        peaks = []
        for e in members:
            ahead = self._lead_position(e, world)
            if w > 0 and ahead != e.pos:
                peaks += [(e.pos, heights[e.id] * (1.0 - w)), (ahead, heights[e.id] * w)]
            else:
                peaks.append((e.pos, heights[e.id]))
        plan_values = bump_surface(peaks, world.config, cfg.sigma_scale)

        if not world.config.obstacles:
            pursuers_by_id = {p.id: p for p in world.pursuers}
            cells = [pos for pos, _ in peaks]
            cells += [pursuers_by_id[pid].pos for pid in coalition.pursuer_ids]
            margin = 10
            x0 = max(0, min(p.x for p in cells) - margin)
            x1 = min(world.config.width, max(p.x for p in cells) + margin + 1)
            y0 = max(0, min(p.y for p in cells) - margin)
            y1 = min(world.config.height, max(p.y for p in cells) + margin + 1)
            plan_in_box(rt.table, plan_values, peaks, (x0, x1, y0, y1),
                        world.config, sweeps)
        else:
            plan_field = RewardField(rt.field.group_id, plan_values)
            seed_table(rt.table, plan_field, world.config,
                       distance_potential(peaks, world.config, cfg.discount))
            sweep_q(rt.table, plan_field, world.config, sweeps, alpha=cfg.plan_alpha)

    def _make_runtime(self, c, world) -> _CoalitionRuntime:
        members = self._coalition_members(c, world)
        heights = None
        if self.cfg.freeze_priority:
            heights = {e.id: e.reward * priority(e, world, self.cfg.metric) for e in members}
        table = QTable.zeros(world.config, owner=min(c.pursuer_ids, default=-1),
                             alpha=self.cfg.alpha, discount=self.cfg.discount,
                             epsilon=self.cfg.eps_initial)
        rt = _CoalitionRuntime(field=RewardField(c.group_id, np.zeros((1, 1))),
                               table=table, frozen_heights=heights)
        self._plan(rt, c, members, world, self.cfg.plan_sweeps_formation)
        rt.field_key = self._field_key(members, world)
        return rt

    def _sync_runtimes(self, org, world):
        """Create runtimes for new coalitions, drop dissolved ones."""
        live = {c.group_id for c in org.coalitions}
        for gid in list(self.runtimes):
            if gid not in live:
                del self.runtimes[gid]
        for c in org.coalitions:
            if c.group_id not in self.runtimes and c.evader_ids:
                self.runtimes[c.group_id] = self._make_runtime(c, world)
                self.events.append(["formed", c.group_id, list(c.evader_ids),
                                    list(c.pursuer_ids)])

    def _field_key(self, members, world):
        if self.cfg.freeze_priority:
            return tuple((e.id, e.pos.x, e.pos.y) for e in members)
        return tuple((e.id, e.pos.x, e.pos.y,
                      priority(e, world, self.cfg.metric)) for e in members)

    def _replan(self, org, world):
        """Per tick: rebuild each field from live positions and run a few
        warm-started sweeps so the policy tracks the moving peaks.  A field
        whose inputs did not change keeps its table (already swept against
        the identical surface)."""
        for c in org.coalitions:
            rt = self.runtimes.get(c.group_id)
            if rt is None or not c.evader_ids:
                continue
            members = self._coalition_members(c, world)
            if not members:
                continue
            key = self._field_key(members, world)
            if key != rt.field_key:
                rt.field_key = key
                self._plan(rt, c, members, world, self.cfg.plan_sweeps_tick)
            life = max(1, self.cfg.life)
            frac = min(1.0, rt.age / life)
            rt.table.epsilon = (self.cfg.eps_initial
                                + (self.cfg.eps_final - self.cfg.eps_initial) * frac)

    def _engaged_locks(self, org, world) -> dict:
        """Pursuers already fighting next to one of their group's evaders,
        keyed by that evader: re-staffing must not pull them off their slots
        no matter how the groups get recut."""
        evaders_by_id = {e.id: e for e in world.evaders}
        pursuers_by_id = {p.id: p for p in world.pursuers}
        locks = {}
        for c in org.coalitions:
            for pid in c.pursuer_ids:
                pos = pursuers_by_id[pid].pos
                for eid in c.evader_ids:
                    e = evaders_by_id[eid]
                    if max(abs(pos.x - e.pos.x), abs(pos.y - e.pos.y)) <= 2:
                        locks.setdefault(eid, set()).add(pid)
                        break
        return locks

    def _staffing_drifted(self, org, world, matrix, locked) -> bool:
        """True when the ideal greedy allocation for the current groups has
        clearly outscored the live staffing, stably, for several ticks.

        The score margin filters out boundary flutter so that teams only hand
        over when a materially better-positioned crew exists (typically after
        captures free pursuers near another group)."""
        groups = [c.evader_ids for c in org.coalitions if c.evader_ids]
        if not groups:
            return False
        col_of = {pid: j for j, pid in enumerate(matrix.pursuer_ids)}
        row_of = {eid: i for i, eid in enumerate(matrix.evader_ids)}
        proposal = {}
        total_gain = 0.0
        assigned = 0
        for group, chosen, _, score in allocate_pursuers(
                world, groups, matrix, {p.id for p in world.pursuers},
                self.cfg.score_mode, locked=locked):
            proposal[frozenset(group)] = frozenset(chosen)
            total_gain += score
            assigned += len(chosen)
        for c in org.coalitions:
            if not c.evader_ids:
                continue
            rows = matrix.values[[row_of[eid] for eid in c.evader_ids]]
            scores = (rows.max(axis=0) if self.cfg.score_mode == "max"
                      else rows.mean(axis=0))
            total_gain -= float(sum(scores[col_of[pid]] for pid in c.pursuer_ids))
        current = {frozenset(c.evader_ids): frozenset(c.pursuer_ids)
                   for c in org.coalitions if c.evader_ids}
        gain = total_gain / max(1, assigned)
        if proposal == current or gain <= self.cfg.staffing_gain:
            self.last_proposal = None
            self.staffing_streak = 0
            return False
        if proposal == self.last_proposal:
            self.staffing_streak += 1
        else:
            self.last_proposal = proposal
            self.staffing_streak = 1
        return self.staffing_streak >= self.cfg.staffing_patience

    # -- agent decisions -----------------------------------------------------

    def _pursuer_rng(self, pid):
        if pid not in self.pursuer_rngs:
            self.pursuer_rngs[pid] = streams.substream(self.seed, streams.PURSUER, pid)
        return self.pursuer_rngs[pid]

    def _evader_rng(self, eid):
        if eid not in self.evader_rngs:
            self.evader_rngs[eid] = streams.substream(self.seed, streams.EVADER, eid)
        return self.evader_rngs[eid]

    def _evader_action(self, e, world) -> Action:
        rng = self._evader_rng(e.id)
        if self.cfg.evader_policy == "qlearn":  # experimental, not the default
            table = self.evader_tables.get(e.id)
            if table is None:
                table = QTable.zeros(world.config, owner=e.id, alpha=self.cfg.alpha,
                                     discount=self.cfg.discount, epsilon=self.cfg.eps_initial)
                self.evader_tables[e.id] = table
            return select_action(table, e.pos, rng, legal_moves(e.pos, world.config))
        return evader_policy_step(e, world, rng)

    def _evader_learn(self, e, old_pos, action, world):
        if self.cfg.evader_policy != "qlearn":
            return
        table = self.evader_tables.get(e.id)
        if table is None or e.captured:
            return
        if world.pursuers:
            r = min(np.hypot(e.pos.x - p.pos.x, e.pos.y - p.pos.y) for p in world.pursuers)
        else:
            r = 0.0
        q_update(table, TransitionRecord(old_pos, action, float(r), e.pos))

    # -- main loop -----------------------------------------------------------

    def run(self) -> RunMetrics:
        cfg = self.cfg
        grid = GridConfig(width=cfg.width, height=cfg.height, obstacles=cfg.obstacles)
        if cfg.n_evaders == 0:
            return RunMetrics(seed=self.seed, capture_ticks=0, flexibility=0,
                              reward_trajectory=[], per_evader_capture_ticks={})
        difficulties = self.difficulty_rng.integers(cfg.difficulty_min,
                                                    cfg.difficulty_max + 1,
                                                    size=cfg.n_evaders)
        world = place_agents(grid, cfg.n_pursuers, cfg.n_evaders, difficulties,
                             cfg.pursuit_range, self.placement_rng)

        matrix = membership_matrix(world, self.coefs, cfg.invert_distance)
        self._refresh_clusterer(matrix)
        assignment = self._current_assignment(matrix)
        org = form_coalitions(world, assignment, self.coefs, cfg.life,
                              counters_enabled=self.counters_enabled,
                              score_mode=cfg.score_mode,
                              invert_distance=cfg.invert_distance)
        self._sync_runtimes(org, world)

        trajectory = []
        capture_tick_of = {}
        capture_ticks = cfg.max_ticks

        while world.tick < cfg.max_ticks:
            self._replan(org, world)

            actions = {}
            transitions = []  # (group_id, pursuer_id, old_pos, action)
            pursuers_by_id = {p.id: p for p in world.pursuers}
            pursuer_cells = world.pursuer_cells()
            for c in org.coalitions:
                rt = self.runtimes.get(c.group_id)
                for pid in c.pursuer_ids:
                    p = pursuers_by_id[pid]
                    act = pursuer_policy_step(p, c, rt.field if rt else None,
                                              rt.table if rt else None,
                                              self._pursuer_rng(pid), grid,
                                              blocked=pursuer_cells)
                    actions[pid] = act
                    transitions.append((c.group_id, pid, p.pos, act))
            assigned = org.assigned_pursuers()
            for p in world.pursuers:
                if p.id not in assigned:
                    actions[p.id] = pursuer_policy_step(p, None, None, None,
                                                        self._pursuer_rng(p.id), grid,
                                                        blocked=pursuer_cells)
            evader_moves = {}
            for e in world.alive_evaders():
                act = self._evader_action(e, world)
                actions[e.id] = act
                evader_moves[e.id] = (e.pos, act)

            world = step(world, actions)
            world.validate()

            by_id = {p.id: p for p in world.pursuers}
            reward_sum = 0.0
            for gid, pid, old_pos, act in transitions:
                rt = self.runtimes.get(gid)
                if rt is None:
                    continue
                new_pos = by_id[pid].pos
                r = rt.field.at(new_pos)
                if act is not Action.STAY:  # forced idling is not a table action
                    q_update(rt.table, TransitionRecord(old_pos, act, r, new_pos))
                reward_sum += r
            trajectory.append(reward_sum)

            for e in world.evaders:
                if e.captured and e.id not in capture_tick_of:
                    capture_tick_of[e.id] = world.tick
                    self.events.append(["captured", e.id])
                if e.id in evader_moves:
                    old_pos = evader_moves[e.id][0]
                    self.velocities[e.id] = (e.pos.x - old_pos.x, e.pos.y - old_pos.y)
                if not e.captured and e.id in evader_moves:
                    self._evader_learn(e, *evader_moves[e.id], world)

            org, reorganize_needed = tick_coalitions(
                org, world, counters_enabled=self.counters_enabled)
            for rt in self.runtimes.values():
                rt.age += 1

            if self.trace:
                record = world.snapshot()
                record["events"] = self.events
                self.trace.write(record)
                self.events = []

            if not world.alive_evaders():
                capture_ticks = world.tick
                break

            newly_captured = [e.id for e in world.evaders
                              if e.captured and capture_tick_of.get(e.id) == world.tick]
            matrix = None
            if self.method != "SINGLETON" or self.staffing_live:
                matrix = membership_matrix(world, self.coefs, cfg.invert_distance)
            if self.method != "SINGLETON":
                fresh = self._current_assignment(matrix)
                partition = fresh.partition()
                # hysteresis: re-group only once the clustering's output has
                # settled on the same new partition for several consecutive
                # ticks, so boundary flicker does not thrash working coalitions
                if partition == self.last_partition:
                    self.partition_streak += 1
                else:
                    self.partition_streak = 1
                self.last_partition = partition
                if (partition != org.live_partition()
                        and self.partition_streak >= self.cfg.drift_patience):
                    reorganize_needed = True

            if reorganize_needed:
                for c in org.coalitions:
                    if c.expired:
                        self.events.append(["expired", c.group_id])
                if matrix is None:
                    matrix = membership_matrix(world, self.coefs, cfg.invert_distance)
                self._refresh_clusterer(matrix, reseed=bool(newly_captured))
                org = reorganize(org, world, self.method, self._cluster_params(),
                                 coefs=self.coefs, life=cfg.life,
                                 counters_enabled=self.counters_enabled,
                                 score_mode=cfg.score_mode,
                                 invert_distance=cfg.invert_distance,
                                 locked=self._engaged_locks(org, world))
                self.events.append(["reorganized", org.flexibility_count])
                self._sync_runtimes(org, world)
            elif self.staffing_live:
                locked = self._engaged_locks(org, world)
                if self._staffing_drifted(org, world, matrix, locked):
                    if refresh_staffing(org, world, matrix, cfg.life,
                                        counters_enabled=self.counters_enabled,
                                        score_mode=cfg.score_mode, locked=locked):
                        self.events.append(["reorganized", org.flexibility_count])
                        self._sync_runtimes(org, world)

        return RunMetrics(seed=self.seed,
                          capture_ticks=capture_ticks,
                          flexibility=org.flexibility_count,
                          reward_trajectory=trajectory,
                          per_evader_capture_ticks=capture_tick_of)


def simulate(cfg, seed: int, trace_path=None) -> RunMetrics:
    """Run one seeded simulation; optionally stream a replay trace to a file."""
    if trace_path is None:
        return Simulation(cfg, seed).run()
    with open(trace_path, "w") as fh:
        return Simulation(cfg, seed, trace=TraceWriter(fh)).run()
