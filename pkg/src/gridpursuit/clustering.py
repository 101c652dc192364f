"""Grouping of evaders by clustering their membership-score rows.

The primary method is a one-dimensional self-organizing map trained by
competitive learning; k-means and DBSCAN are provided as baselines, and
SINGLETON puts every evader in its own group.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .membership import MembershipMatrix

METHODS = ("SOFM", "KMEANS", "DBSCAN", "SINGLETON")


@dataclass
class SofmConfig:
    output_nodes: int
    epochs: int = 200
    lr_initial: float = 0.5
    lr_final: float = 0.01
    radius_initial: float | None = None  # defaults to output_nodes / 2
    radius_final: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.output_nodes < 1:
            raise ValueError("need at least one output node")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not (self.lr_initial >= self.lr_final > 0):
            raise ValueError("learning rates must satisfy initial >= final > 0")
        if self.radius_initial is None:
            self.radius_initial = self.output_nodes / 2
        if not (self.radius_initial >= self.radius_final >= 0):
            raise ValueError("radii must satisfy initial >= final >= 0")


@dataclass
class SofmNetwork:
    weights: np.ndarray  # output_nodes x input_dim
    config: SofmConfig


@dataclass
class ClusterAssignment:
    """Group label per evader id, with labels contiguous from 0."""

    labels: dict
    method: str

    def to_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["evader_id", "group_index", "method"])
            for eid in sorted(self.labels):
                writer.writerow([eid, self.labels[eid], self.method])

    def group_count(self) -> int:
        return len(set(self.labels.values())) if self.labels else 0

    def groups(self) -> list:
        """Evader ids per group, indexed by group label."""
        out = [[] for _ in range(self.group_count())]
        for eid in sorted(self.labels):
            out[self.labels[eid]].append(eid)
        return out

    def partition(self) -> set:
        """Label-free view for comparing two assignments."""
        return {frozenset(g) for g in self.groups()}


def _compact(raw_labels, evader_ids) -> dict:
    """Relabel to contiguous group indices ordered by first appearance."""
    remap = {}
    labels = {}
    for eid, raw in zip(evader_ids, raw_labels):
        if raw not in remap:
            remap[raw] = len(remap)
        labels[eid] = remap[raw]
    return labels


def train_sofm(matrix: MembershipMatrix, cfg: SofmConfig,
               initial: SofmNetwork | None = None) -> SofmNetwork:
    """Competitive learning over a 1-D lattice of output units.

    Per sample, the best-matching unit pulls its lattice neighbourhood toward
    the input; learning rate and neighbourhood radius decay linearly from the
    initial to the final value across epochs.  ``initial`` warm-starts the
    weights when its shape still matches.
    """
    rows = matrix.values
    if rows.size == 0:
        raise ValueError("cannot train on an empty matrix")
    n, dim = rows.shape
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((cfg.seed, 0x50F))))
    if initial is not None and initial.weights.shape == (cfg.output_nodes, dim):
        weights = initial.weights.copy()
    else:
        weights = rng.uniform(0.0, 1.0, size=(cfg.output_nodes, dim))

    lattice = np.arange(cfg.output_nodes, dtype=float)
    for epoch in range(cfg.epochs):
        frac = epoch / (cfg.epochs - 1) if cfg.epochs > 1 else 0.0
        lr = cfg.lr_initial + (cfg.lr_final - cfg.lr_initial) * frac
        radius = cfg.radius_initial + (cfg.radius_final - cfg.radius_initial) * frac
        order = rng.permutation(n)
        for idx in order:
            u = rows[idx]
            bmu = int(np.argmin(((weights - u) ** 2).sum(axis=1)))
            if radius > 0:
                h = np.exp(-((lattice - bmu) ** 2) / (2.0 * radius * radius))
            else:
                h = np.zeros(cfg.output_nodes)
                h[bmu] = 1.0
            weights += lr * h[:, None] * (u - weights)
    return SofmNetwork(weights=weights, config=cfg)


def assign(net: SofmNetwork, matrix: MembershipMatrix) -> ClusterAssignment:
    """Label each evader with its best-matching unit (ties: lowest unit)."""
    if net.weights.shape[1] != matrix.values.shape[1]:
        raise ValueError("network and matrix dimensions do not match")
    d2 = ((matrix.values[:, None, :] - net.weights[None, :, :]) ** 2).sum(axis=2)
    bmus = np.argmin(d2, axis=1)
    return ClusterAssignment(labels=_compact(bmus, matrix.evader_ids), method="SOFM")


def quantization_error(net: SofmNetwork, matrix: MembershipMatrix) -> float:
    """Mean Euclidean distance from each row to its best-matching unit."""
    d2 = ((matrix.values[:, None, :] - net.weights[None, :, :]) ** 2).sum(axis=2)
    return float(np.sqrt(d2.min(axis=1)).mean())


def _lloyd(rows: np.ndarray, centroids: np.ndarray, max_iter: int = 100):
    """Alternate nearest-centroid assignment and mean updates to a fixpoint.

    Empty clusters keep their previous centroid.  Returns (labels, centroids).
    """
    labels = None
    for _ in range(max_iter):
        d2 = ((rows[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(len(centroids)):
            members = rows[labels == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
    return labels, centroids


def kmeans_seed_centroids(rows: np.ndarray, k: int, seed: int) -> np.ndarray:
    """First centroid uniform at random, the rest by farthest-point choice."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 0x4B4D))))
    centroids = [rows[rng.integers(len(rows))]]
    while len(centroids) < k:
        d2 = np.min(((rows[:, None, :] - np.asarray(centroids)[None, :, :]) ** 2).sum(axis=2), axis=1)
        centroids.append(rows[int(np.argmax(d2))])
    return np.asarray(centroids, dtype=float).copy()


def kmeans(matrix: MembershipMatrix, k: int, seed: int = 0) -> ClusterAssignment:
    rows = matrix.values
    if not 1 <= k <= len(rows):
        raise ValueError(f"k={k} out of range for {len(rows)} rows")
    centroids = kmeans_seed_centroids(rows, k, seed)
    labels, _ = _lloyd(rows, centroids)
    return ClusterAssignment(labels=_compact(labels, matrix.evader_ids), method="KMEANS")


def kmeans_refine(matrix: MembershipMatrix, centroids: np.ndarray):
    """Lloyd iterations warm-started from known centroids. Returns the
    assignment plus updated centroids, for incremental re-grouping."""
    labels, centroids = _lloyd(matrix.values, centroids.copy())
    assignment = ClusterAssignment(labels=_compact(labels, matrix.evader_ids), method="KMEANS")
    return assignment, centroids


def dbscan(matrix: MembershipMatrix, eps: float, min_pts: int) -> ClusterAssignment:
    """Density clustering on Euclidean row distance.

    ``min_pts`` counts the point itself.  Noise points are not dropped: each
    becomes its own singleton group so that every evader stays assignable.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    rows = matrix.values
    n = len(rows)
    d = np.sqrt(((rows[:, None, :] - rows[None, :, :]) ** 2).sum(axis=2))
    within = d <= eps
    core = within.sum(axis=1) >= min_pts

    labels = np.full(n, -1)
    cluster_id = 0
    for i in range(n):
        if labels[i] != -1 or not core[i]:
            continue
        frontier = [i]
        labels[i] = cluster_id
        while frontier:
            j = frontier.pop(0)
            if not core[j]:
                continue
            for nb in np.nonzero(within[j])[0]:
                if labels[nb] == -1:
                    labels[nb] = cluster_id
                    frontier.append(int(nb))
        cluster_id += 1
    for i in range(n):
        if labels[i] == -1:  # noise: own singleton group
            labels[i] = cluster_id
            cluster_id += 1
    return ClusterAssignment(labels=_compact(labels, matrix.evader_ids), method="DBSCAN")


def singleton(matrix: MembershipMatrix) -> ClusterAssignment:
    labels = {eid: i for i, eid in enumerate(matrix.evader_ids)}
    return ClusterAssignment(labels=labels, method="SINGLETON")


def cluster(matrix: MembershipMatrix, method: str, params: dict | None = None) -> ClusterAssignment:
    """Dispatch to one grouping method by tag.

    KMEANS accepts either a seed (fresh run) or ``centroids`` to refine, so a
    caller tracking centroids across reorganizations gets stable groupings.
    """
    params = params or {}
    if method == "SINGLETON":
        return singleton(matrix)
    if method == "SOFM":
        return assign(params["network"], matrix)
    if method == "KMEANS":
        if params.get("centroids") is not None:
            assignment, _ = kmeans_refine(matrix, params["centroids"])
            return assignment
        k = min(params.get("k", 3), len(matrix.evader_ids))
        return kmeans(matrix, k, params.get("seed", 0))
    if method == "DBSCAN":
        return dbscan(matrix, params.get("eps", 0.15), params.get("min_pts", 2))
    raise ValueError(f"unknown clustering method {method!r}")
