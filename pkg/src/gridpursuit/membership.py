"""Membership scoring between evaders and pursuers.

A pursuer's fit for chasing a given evader blends three ingredients: how
close it is, how reliably it has completed past tasks (confidence), and how
rarely it has walked away from targets (credit).  Stacking the per-pursuer
scores row-by-evader gives the matrix whose rows drive evader grouping.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .grid_world import EvaderState, PursuerState, WorldState, count_range_invaders, euclidean

CONFIDENCE_FLOOR = 0.1
CREDIT_FLOOR = 0.1


@dataclass(frozen=True)
class Coefficients:
    """Relative weights of the distance, confidence and credit terms."""

    coef_dist: float = 1.0
    coef_conf: float = 1.0
    coef_cred: float = 1.0

    def __post_init__(self):
        if min(self.coef_dist, self.coef_conf, self.coef_cred) < 0:
            raise ValueError("coefficients must be non-negative")
        if self.total() <= 0:
            raise ValueError("coefficient sum must be positive")

    def total(self) -> float:
        return self.coef_dist + self.coef_conf + self.coef_cred


def confidence(p: PursuerState) -> float:
    """Success ratio of past tasks, floored at 0.1 (the no-history value)."""
    if p.participated == 0:
        return CONFIDENCE_FLOOR
    return min(1.0, max(CONFIDENCE_FLOOR, p.succeeded / p.participated))


def credit(p: PursuerState) -> float:
    """Non-abandonment ratio; 1 with no history, floored at 0.1."""
    denom = p.participated + p.succeeded
    if denom == 0:
        return 1.0
    return max(CREDIT_FLOOR, min(1.0, 1.0 - p.abandoned / denom))


def closeness(e_pos, p_pos, config) -> float:
    """Distance term, inverted and normalised by the grid diagonal so that
    co-located pairs score 1 and opposite corners score 0."""
    return 1.0 - euclidean(e_pos, p_pos) / config.diagonal()


def membership(e: EvaderState, p: PursuerState, world: WorldState,
               coefs: Coefficients = Coefficients(),
               invert_distance: bool = True) -> float:
    """Weighted fit of pursuer p for the task of capturing evader e, in [0, 1].

    ``invert_distance=False`` uses the raw normalised distance instead, which
    makes far pursuers score higher; kept only for A/B comparison.
    """
    dist_term = closeness(e.pos, p.pos, world.config)
    if not invert_distance:
        dist_term = 1.0 - dist_term
    num = (coefs.coef_dist * dist_term
           + coefs.coef_conf * confidence(p)
           + coefs.coef_cred * credit(p))
    return num / coefs.total()


def priority(e: EvaderState, world: WorldState, metric: str = "chebyshev") -> float:
    """Urgency of an evader: crowding by nearby pursuers over its difficulty."""
    if e.difficulty < 1:
        raise ValueError("difficulty must be >= 1")
    return (1 + count_range_invaders(e, world, metric)) / e.difficulty


@dataclass
class MembershipMatrix:
    """Evader-major score matrix; row i is the grouping vector of evader i."""

    values: np.ndarray
    evader_ids: list
    pursuer_ids: list

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.evader_ids), len(self.pursuer_ids)):
            raise ValueError("matrix shape does not match id lists")

    def row(self, evader_id: int) -> np.ndarray:
        return self.values[self.evader_ids.index(evader_id)]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["evader_id"] + [str(pid) for pid in self.pursuer_ids])
            for eid, row in zip(self.evader_ids, self.values):
                writer.writerow([eid] + [repr(float(v)) for v in row])


def membership_matrix(world: WorldState, coefs: Coefficients = Coefficients(),
                      invert_distance: bool = True) -> MembershipMatrix:
    """Score every (alive evader, pursuer) pair. Column order follows pursuer
    id order; rows follow evader id order."""
    evaders = world.alive_evaders()
    if not evaders:
        raise ValueError("no alive evaders to score")
    if not world.pursuers:
        raise ValueError("no pursuers to score")
    pursuers = sorted(world.pursuers, key=lambda p: p.id)
    evaders = sorted(evaders, key=lambda e: e.id)

    conf = np.array([confidence(p) for p in pursuers])
    cred = np.array([credit(p) for p in pursuers])
    diag = world.config.diagonal()
    ex = np.array([e.pos.x for e in evaders], dtype=float)
    ey = np.array([e.pos.y for e in evaders], dtype=float)
    px = np.array([p.pos.x for p in pursuers], dtype=float)
    py = np.array([p.pos.y for p in pursuers], dtype=float)
    dist = np.hypot(ex[:, None] - px[None, :], ey[:, None] - py[None, :])
    dist_term = 1.0 - dist / diag
    if not invert_distance:
        dist_term = dist / diag
    values = (coefs.coef_dist * dist_term
              + coefs.coef_conf * conf[None, :]
              + coefs.coef_cred * cred[None, :]) / coefs.total()
    return MembershipMatrix(values=values,
                            evader_ids=[e.id for e in evaders],
                            pursuer_ids=[p.id for p in pursuers])
