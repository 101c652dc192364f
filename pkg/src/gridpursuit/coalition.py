"""Organizer protocol: staffing evader groups with pursuers.

The organizer evaluates evaders, groups them, and greedily staffs each group
with the best-fitting free pursuers.  Coalitions carry a tick budget; letting
it run out with uncaught evaders punishes the members, while every capture by
the group rewards them.  Either event (or a change in the evader grouping)
triggers reorganization of the affected coalitions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from . import clustering
from .grid_world import WorldState
from .membership import Coefficients, confidence, credit, membership, membership_matrix, priority


@dataclass
class Coalition:
    group_id: int
    evader_ids: list          # alive, not-yet-credited members
    pursuer_ids: list
    life_remaining: int
    understaffed: bool = False
    expired: bool = False


@dataclass
class OrganizerState:
    organizer_id: int
    coalitions: list = field(default_factory=list)
    evader_list: list = field(default_factory=list)  # (id, pos, reward) snapshot
    flexibility_count: int = 0
    next_group_id: int = 0

    def assigned_pursuers(self) -> set:
        out = set()
        for c in self.coalitions:
            out.update(c.pursuer_ids)
        return out

    def assigned_evaders(self) -> set:
        out = set()
        for c in self.coalitions:
            out.update(c.evader_ids)
        return out

    def coalition_of_pursuer(self, pursuer_id: int):
        for c in self.coalitions:
            if pursuer_id in c.pursuer_ids:
                return c
        return None

    def live_partition(self) -> set:
        return {frozenset(c.evader_ids) for c in self.coalitions if c.evader_ids}


def select_organizer(world: WorldState) -> int:
    """Pursuer with the best combined track record; ties go to the lowest id."""
    if not world.pursuers:
        raise ValueError("no pursuers to choose an organizer from")
    best = min(world.pursuers, key=lambda p: (-(confidence(p) + credit(p)), p.id))
    return best.id


def staffing_demand(group_evaders) -> int:
    """Pursuers needed for a group: the sum of member difficulties."""
    group_evaders = list(group_evaders)
    if not group_evaders:
        raise ValueError("empty evader group")
    return sum(e.difficulty for e in group_evaders)


def evaluate_evaders(world: WorldState) -> list:
    return [(e.id, e.pos, e.reward) for e in world.alive_evaders()]


def allocate_pursuers(world: WorldState, groups: list, matrix: MembershipMatrix,
                      free_ids: set, score_mode: str = "max",
                      locked: dict | None = None) -> list:
    """Greedy allocation: groups in descending summed priority, each taking
    the free pursuers with the best group-membership score (the best fit to
    any member evader, or the mean fit).

    ``locked`` maps an evader id to pursuers engaged next to it; such a
    pursuer stays with whichever group contains that evader (slots allowing),
    so an in-progress surround is never disassembled for a marginally better
    candidate.  Returns (group, pursuer_ids, understaffed, score_total)
    tuples in processing order; does not touch any state."""
    evaders_by_id = {e.id: e for e in world.evaders}
    row_of = {eid: i for i, eid in enumerate(matrix.evader_ids)}
    col_of = {pid: j for j, pid in enumerate(matrix.pursuer_ids)}
    free = set(free_ids)
    locked = locked or {}

    ranked = sorted(
        groups,
        key=lambda g: (-sum(priority(evaders_by_id[eid], world) for eid in g), sorted(g)),
    )
    out = []
    for group in ranked:
        members = [evaders_by_id[eid] for eid in group]
        demand = staffing_demand(members)
        rows = matrix.values[[row_of[eid] for eid in group]]
        scores = rows.max(axis=0) if score_mode == "max" else rows.mean(axis=0)
        held_pool = set()
        for eid in group:
            held_pool.update(locked.get(eid, ()))
        held = sorted((pid for pid in held_pool if pid in free),
                      key=lambda pid: (-scores[col_of[pid]], pid))[:demand]
        free.difference_update(held)
        candidates = sorted(free, key=lambda pid: (-scores[col_of[pid]], pid))
        chosen = held + candidates[:demand - len(held)]
        chosen.sort(key=lambda pid: (-scores[col_of[pid]], pid))
        free.difference_update(chosen)
        out.append((sorted(group), chosen, len(chosen) < demand,
                    float(sum(scores[col_of[pid]] for pid in chosen))))
    return out


def _staff_groups(state: OrganizerState, world: WorldState, groups: list,
                  matrix: MembershipMatrix, life: int, free_ids: set,
                  counters_enabled: bool, score_mode: str, locked: dict | None = None):
    pursuers_by_id = {p.id: p for p in world.pursuers}
    for group, chosen, understaffed, _ in allocate_pursuers(world, groups, matrix,
                                                            free_ids, score_mode,
                                                            locked=locked):
        for pid in chosen:
            free_ids.discard(pid)
            if counters_enabled:
                pursuers_by_id[pid].participated += 1
        state.coalitions.append(Coalition(
            group_id=state.next_group_id,
            evader_ids=list(group),
            pursuer_ids=list(chosen),
            life_remaining=life,
            understaffed=understaffed,
        ))
        state.next_group_id += 1


def form_coalitions(world: WorldState, assignment: clustering.ClusterAssignment,
                    coefs: Coefficients, life: int, *,
                    counters_enabled: bool = True, score_mode: str = "max",
                    invert_distance: bool = True) -> OrganizerState:
    """Build a fresh organizer state covering every evader in the assignment."""
    if not assignment.labels:
        raise ValueError("assignment covers no evaders")
    state = OrganizerState(organizer_id=select_organizer(world))
    state.evader_list = evaluate_evaders(world)
    free_ids = {p.id for p in world.pursuers}
    matrix = membership_matrix(world, coefs, invert_distance)
    _staff_groups(state, world, assignment.groups(), matrix, life, free_ids,
                  counters_enabled, score_mode)
    return state


def tick_coalitions(state: OrganizerState, world: WorldState, *,
                    counters_enabled: bool = True, lifetime_enabled: bool = True):
    """Advance coalition lifetimes one tick and settle rewards/punishments.

    Captured members credit every coalition pursuer once and leave the list;
    an expiring coalition costs each pursuer one abandonment per evader still
    uncaught.  ``lifetime_enabled=False`` freezes lifetimes (static-team
    baseline): only captures are processed.  Returns (state,
    reorganize_needed).
    """
    captured = {e.id for e in world.evaders if e.captured}
    pursuers_by_id = {p.id: p for p in world.pursuers}
    reorganize_needed = False

    for c in state.coalitions:
        caught = [eid for eid in c.evader_ids if eid in captured]
        if caught and counters_enabled:
            for pid in c.pursuer_ids:
                pursuers_by_id[pid].succeeded += len(caught)
        c.evader_ids = [eid for eid in c.evader_ids if eid not in captured]
        if not c.evader_ids:
            reorganize_needed = True
            continue
        if c.expired:
            reorganize_needed = True
            continue
        if not lifetime_enabled:
            continue
        c.life_remaining = max(0, c.life_remaining - 1)
        if c.life_remaining == 0:
            c.expired = True
            reorganize_needed = True
            if counters_enabled:
                for pid in c.pursuer_ids:
                    pursuers_by_id[pid].abandoned += len(c.evader_ids)
    return state, reorganize_needed


def refresh_staffing(state: OrganizerState, world: WorldState,
                     matrix: MembershipMatrix, life: int, *,
                     counters_enabled: bool = True, score_mode: str = "max",
                     locked: dict | None = None) -> bool:
    """Hand groups over to the pursuers that fit them best right now.

    The organizer recomputes the greedy allocation for the existing evader
    groups over the full pursuer pool.  Groups whose ideal team changed are
    re-formed with fresh lifetimes; pursuers newly joining a group count one
    more participation.  Counts one reorganization when anything changed.
    Returns True if any team changed.
    """
    groups = [c.evader_ids for c in state.coalitions if c.evader_ids]
    if not groups:
        return False
    pursuers_by_id = {p.id: p for p in world.pursuers}
    current = {frozenset(c.evader_ids): c for c in state.coalitions if c.evader_ids}
    changed = False
    for group, chosen, understaffed, _ in allocate_pursuers(
            world, groups, matrix, {p.id for p in world.pursuers}, score_mode,
            locked=locked):
        old = current[frozenset(group)]
        if set(chosen) == set(old.pursuer_ids):
            continue
        changed = True
        if counters_enabled:
            for pid in set(chosen) - set(old.pursuer_ids):
                pursuers_by_id[pid].participated += 1
        state.coalitions.remove(old)
        state.coalitions.append(Coalition(
            group_id=state.next_group_id,
            evader_ids=list(group),
            pursuer_ids=list(chosen),
            life_remaining=life,
            understaffed=understaffed,
        ))
        state.next_group_id += 1
    if changed:
        state.flexibility_count += 1
        state.organizer_id = select_organizer(world)
        state.evader_list = evaluate_evaders(world)
    return changed


def reorganize(state: OrganizerState, world: WorldState, method: str,
               params: dict | None = None, *, coefs: Coefficients = Coefficients(),
               life: int = 30, counters_enabled: bool = True,
               score_mode: str = "max", invert_distance: bool = True,
               restaff: set | None = None, locked: dict | None = None) -> OrganizerState:
    """Dissolve finished or drifted coalitions and re-staff the freed evaders.

    The surviving coalitions are those that are neither expired nor complete,
    whose evader set still matches a group of the fresh clustering, and whose
    staffing was not flagged stale (``restaff`` holds evader-id frozensets
    whose teams should be rebuilt); all other coalitions dissolve, and their
    evaders are re-formed from the pool of free pursuers.  Counts one
    reorganization.
    """
    state.organizer_id = select_organizer(world)
    state.evader_list = evaluate_evaders(world)
    state.flexibility_count += 1

    alive = world.alive_evaders()
    if not alive:
        state.coalitions = []
        return state

    matrix = membership_matrix(world, coefs, invert_distance)
    assignment = clustering.cluster(matrix, method, params)
    new_partition = assignment.partition()
    restaff = restaff or set()

    survivors = [c for c in state.coalitions
                 if c.evader_ids and not c.expired
                 and frozenset(c.evader_ids) in new_partition
                 and frozenset(c.evader_ids) not in restaff]
    covered = set()
    for c in survivors:
        covered.update(c.evader_ids)
    state.coalitions = survivors

    freed_groups = [g for g in assignment.groups() if not covered.intersection(g)]
    free_ids = {p.id for p in world.pursuers} - state.assigned_pursuers()
    _staff_groups(state, world, freed_groups, matrix, life, free_ids,
                  counters_enabled, score_mode, locked=locked)
    return state
