"""Batch harness: seeded repetitions of the five comparison cases.

Runs are independent and fully determined by (config, seed), so a batch can
be executed serially or across worker processes with identical results.
Outputs are plain CSV files plus a JSON manifest recording the schema version
and the exact configuration.
"""
from __future__ import annotations

import configparser
import csv
import dataclasses
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import CASES, RunMetrics, simulate
from .grid_world import Position

WORKERS_ENV = "GRIDPURSUIT_WORKERS"
SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    case: str = "SOFM_AGRMF"
    width: int = 100
    height: int = 100
    obstacles: frozenset = frozenset()
    n_pursuers: int = 33
    n_evaders: int = 9
    difficulty_min: int = 2
    difficulty_max: int = 4
    repetitions: int = 100
    base_seed: int = 0
    max_ticks: int = 10000
    life: int = 30
    coef_dist: float = 1.0
    coef_conf: float = 1.0
    coef_cred: float = 1.0
    pursuit_range: int = 15
    metric: str = "chebyshev"
    invert_distance: bool = True
    score_mode: str = "max"
    sofm_nodes: int = 0          # 0 means "one unit per evader"
    sofm_epochs: int = 200
    sofm_lr_initial: float = 0.5
    sofm_lr_final: float = 0.01
    sofm_radius_final: float = 0.5
    kmeans_k: int = 3
    dbscan_eps: float = 0.15
    dbscan_min_pts: int = 2
    alpha: float = 0.3
    discount: float = 0.9
    eps_initial: float = 0.3
    eps_final: float = 0.05
    sigma_scale: float = 1.0
    plan_sweeps_formation: int = 40
    plan_sweeps_tick: int = 4
    plan_alpha: float = 1.0
    lead_ticks: int = 8
    lead_weight: float = 0.5
    drift_patience: int = 4
    staffing_patience: int = 4
    staffing_gain: float = 0.01
    evader_policy: str = "heuristic"
    freeze_priority: bool = False

    def validate(self) -> "ExperimentConfig":
        if self.case not in CASES:
            raise ConfigError(f"case must be one of {CASES}, got {self.case!r}")
        if self.width < 2 or self.height < 2:
            raise ConfigError("grid must be at least 2x2")
        if self.n_pursuers < 1:
            raise ConfigError("need at least one pursuer")
        if self.n_evaders < 0:
            raise ConfigError("evader count cannot be negative")
        if not 1 <= self.difficulty_min <= self.difficulty_max <= 4:
            raise ConfigError("difficulty range must satisfy 1 <= min <= max <= 4")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.max_ticks <= 0:
            raise ConfigError("max_ticks must be positive")
        if self.life < 1:
            raise ConfigError("life must be >= 1")
        if self.pursuit_range < 1:
            raise ConfigError("pursuit_range must be >= 1")
        if not 0 <= self.discount < 1:
            raise ConfigError("discount must be in [0, 1)")
        if not 0 <= self.alpha <= 1:
            raise ConfigError("alpha must be in [0, 1]")
        for name in ("eps_initial", "eps_final"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must be in [0, 1]")
        if self.kmeans_k < 1:
            raise ConfigError("kmeans_k must be >= 1")
        if self.dbscan_eps <= 0:
            raise ConfigError("dbscan_eps must be positive")
        if self.dbscan_min_pts < 1:
            raise ConfigError("dbscan_min_pts must be >= 1")
        if self.score_mode not in ("max", "mean"):
            raise ConfigError("score_mode must be 'max' or 'mean'")
        if self.evader_policy not in ("heuristic", "qlearn"):
            raise ConfigError("evader_policy must be 'heuristic' or 'qlearn'")
        if self.metric not in ("chebyshev", "manhattan", "euclidean"):
            raise ConfigError("metric must be chebyshev, manhattan or euclidean")
        for pos in self.obstacles:
            if not (0 <= pos.x < self.width and 0 <= pos.y < self.height):
                raise ConfigError(f"obstacle {pos} out of bounds")
        free = self.width * self.height - len(self.obstacles)
        if self.n_pursuers + self.n_evaders > free:
            raise ConfigError("more agents than free cells")
        return self

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["obstacles"] = sorted((p.x, p.y) for p in self.obstacles)
        return d


def parse_obstacles(text: str) -> frozenset:
    """Parse 'x,y; x,y; ...' into a set of positions."""
    cells = set()
    for chunk in text.replace("|", ";").split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        x, y = (int(v) for v in chunk.split(","))
        cells.add(Position(x, y))
    return frozenset(cells)


# name -> (ini section, converter)
_FIELD_PARSERS = {
    "case": ("experiment", str),
    "repetitions": ("experiment", int),
    "base_seed": ("experiment", int),
    "max_ticks": ("experiment", int),
    "life": ("experiment", int),
    "width": ("grid", int),
    "height": ("grid", int),
    "obstacles": ("grid", parse_obstacles),
    "n_pursuers": ("agents", int),
    "n_evaders": ("agents", int),
    "difficulty_min": ("agents", int),
    "difficulty_max": ("agents", int),
    "pursuit_range": ("agents", int),
    "evader_policy": ("agents", str),
    "coef_dist": ("membership", float),
    "coef_conf": ("membership", float),
    "coef_cred": ("membership", float),
    "metric": ("membership", str),
    "invert_distance": ("membership", lambda s: s.strip().lower() in ("1", "true", "yes", "on")),
    "score_mode": ("membership", str),
    "sofm_nodes": ("sofm", int),
    "sofm_epochs": ("sofm", int),
    "sofm_lr_initial": ("sofm", float),
    "sofm_lr_final": ("sofm", float),
    "sofm_radius_final": ("sofm", float),
    "kmeans_k": ("kmeans", int),
    "dbscan_eps": ("dbscan", float),
    "dbscan_min_pts": ("dbscan", int),
    "alpha": ("learning", float),
    "discount": ("learning", float),
    "eps_initial": ("learning", float),
    "eps_final": ("learning", float),
    "sigma_scale": ("learning", float),
    "plan_sweeps_formation": ("learning", int),
    "plan_sweeps_tick": ("learning", int),
    "plan_alpha": ("learning", float),
    "lead_ticks": ("learning", int),
    "lead_weight": ("learning", float),
    "drift_patience": ("experiment", int),
    "staffing_patience": ("experiment", int),
    "staffing_gain": ("experiment", float),
    "freeze_priority": ("learning", lambda s: s.strip().lower() in ("1", "true", "yes", "on")),
}

# ini files may use the short option name inside a section, e.g. [sofm] epochs=
_SHORT_OPTIONS = {
    ("agents", "pursuers"): "n_pursuers",
    ("agents", "evaders"): "n_evaders",
    ("sofm", "nodes"): "sofm_nodes",
    ("sofm", "epochs"): "sofm_epochs",
    ("sofm", "lr_initial"): "sofm_lr_initial",
    ("sofm", "lr_final"): "sofm_lr_final",
    ("sofm", "radius_final"): "sofm_radius_final",
    ("kmeans", "k"): "kmeans_k",
    ("dbscan", "eps"): "dbscan_eps",
    ("dbscan", "min_pts"): "dbscan_min_pts",
}


def load_config_file(path) -> dict:
    """Read a sectioned key=value config file into override kwargs."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    overrides = {}
    for section in parser.sections():
        for option, raw in parser.items(section):
            name = _SHORT_OPTIONS.get((section, option), option)
            if name not in _FIELD_PARSERS:
                raise ConfigError(f"unknown option [{section}] {option} in {path}")
            expected_section, conv = _FIELD_PARSERS[name]
            if expected_section != section:
                raise ConfigError(f"option {option} belongs in [{expected_section}], "
                                  f"found in [{section}] in {path}")
            try:
                overrides[name] = conv(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for [{section}] {option} in {path}: {exc}")
    return overrides


def build_config(file_path=None, **cli_overrides) -> ExperimentConfig:
    """Defaults, then config file values, then CLI overrides."""
    values = {}
    if file_path is not None:
        values.update(load_config_file(file_path))
    values.update({k: v for k, v in cli_overrides.items() if v is not None})
    try:
        cfg = ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc))
    return cfg.validate()


# ---------------------------------------------------------------------------
# Batch execution
# ---------------------------------------------------------------------------

@dataclass
class BatchSummary:
    case: str
    runs: list
    mean_capture: float = 0.0
    std_capture: float = 0.0
    min_capture: int = 0
    max_capture: int = 0
    mean_flexibility: float = 0.0
    std_flexibility: float = 0.0
    mean_trajectory: list = field(default_factory=list)

    @classmethod
    def from_runs(cls, case: str, runs: list) -> "BatchSummary":
        runs = sorted(runs, key=lambda m: m.seed)
        captures = np.array([m.capture_ticks for m in runs], dtype=float)
        flex = np.array([m.flexibility for m in runs], dtype=float)
        longest = max((len(m.reward_trajectory) for m in runs), default=0)
        padded = np.zeros((len(runs), longest))
        for i, m in enumerate(runs):
            padded[i, :len(m.reward_trajectory)] = m.reward_trajectory
        return cls(
            case=case,
            runs=runs,
            mean_capture=float(captures.mean()) if len(runs) else 0.0,
            std_capture=float(captures.std(ddof=1)) if len(runs) > 1 else 0.0,
            min_capture=int(captures.min()) if len(runs) else 0,
            max_capture=int(captures.max()) if len(runs) else 0,
            mean_flexibility=float(flex.mean()) if len(runs) else 0.0,
            std_flexibility=float(flex.std(ddof=1)) if len(runs) > 1 else 0.0,
            mean_trajectory=list(padded.mean(axis=0)) if longest else [],
        )


def resolve_workers(workers=None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return 1


def _run_seed(args):
    cfg, seed = args
    return simulate(cfg, seed)


def run_single(cfg: ExperimentConfig, seed: int, trace_path=None) -> RunMetrics:
    cfg.validate()
    return simulate(cfg, seed, trace_path=trace_path)


def run_batch(cfg: ExperimentConfig, workers=None) -> BatchSummary:
    cfg.validate()
    seeds = range(cfg.base_seed, cfg.base_seed + cfg.repetitions)
    n_workers = resolve_workers(workers)
    if n_workers == 1 or cfg.repetitions == 1:
        runs = [simulate(cfg, s) for s in seeds]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            runs = list(pool.map(_run_seed, [(cfg, s) for s in seeds]))
    return BatchSummary.from_runs(cfg.case, runs)


@dataclass
class CaseComparison:
    summaries: dict  # case -> BatchSummary, insertion-ordered
    seeds: list

    def improvement(self, better: str, worse: str) -> float:
        """Mean capture-time improvement of `better` over `worse`, percent."""
        a = self.summaries[better].mean_capture
        b = self.summaries[worse].mean_capture
        return 100.0 * (b - a) / b if b else 0.0

    def paired_differences(self, a: str, b: str) -> np.ndarray:
        """Per-seed capture-tick differences (b minus a)."""
        runs_a = {m.seed: m for m in self.summaries[a].runs}
        runs_b = {m.seed: m for m in self.summaries[b].runs}
        return np.array([runs_b[s].capture_ticks - runs_a[s].capture_ticks
                         for s in self.seeds], dtype=float)


def compare_cases(configs: list, workers=None) -> CaseComparison:
    """Run several cases over the same seeds and align their results."""
    if not configs:
        raise ConfigError("no configurations to compare")
    reference = configs[0]
    for cfg in configs[1:]:
        if cfg.replace(case=reference.case) != reference:
            raise ConfigError("compared configs must share all scenario "
                              "parameters and differ only in case")
    cases = [cfg.case for cfg in configs]
    if len(set(cases)) != len(cases):
        raise ConfigError("duplicate case in comparison")
    summaries = {}
    for cfg in configs:
        summaries[cfg.case] = run_batch(cfg, workers=workers)
    seeds = list(range(reference.base_seed, reference.base_seed + reference.repetitions))
    return CaseComparison(summaries=summaries, seeds=seeds)


# ---------------------------------------------------------------------------
# File outputs
# ---------------------------------------------------------------------------

def _write_csv(path: Path, header: list, rows: list):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _summary_rows(summaries: dict) -> list:
    rows = []
    for case, s in summaries.items():
        rows.append([case, len(s.runs), _fmt(s.mean_capture), _fmt(s.std_capture),
                     _fmt(s.mean_flexibility), _fmt(s.std_flexibility)])
    return rows


def emit_outputs(results, out_dir, config: ExperimentConfig | None = None) -> list:
    """Write summary, per-run and trajectory CSVs (plus a comparison table
    when given a CaseComparison).  Returns the list of paths written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if isinstance(results, BatchSummary):
        summaries = {results.case: results}
        comparison = None
    else:
        summaries = results.summaries
        comparison = results

    written = []

    path = out_dir / "summary.csv"
    _write_csv(path, ["case", "runs", "mean_capture", "std_capture",
                      "mean_flexibility", "std_flexibility"],
               _summary_rows(summaries))
    written.append(path)

    for case, s in summaries.items():
        path = out_dir / f"runs_{case}.csv"
        _write_csv(path, ["seed", "capture_ticks", "flexibility"],
                   [[m.seed, m.capture_ticks, m.flexibility] for m in s.runs])
        written.append(path)

        path = out_dir / f"trajectory_{case}.csv"
        _write_csv(path, ["tick", "mean_reward"],
                   [[t + 1, _fmt(v)] for t, v in enumerate(s.mean_trajectory)])
        written.append(path)

    if comparison is not None:
        cases = list(summaries)
        header = ["seed"]
        for case in cases:
            header += [f"capture_{case}", f"flexibility_{case}"]
        rows = []
        for seed in comparison.seeds:
            row = [seed]
            for case in cases:
                m = next(r for r in summaries[case].runs if r.seed == seed)
                row += [m.capture_ticks, m.flexibility]
            rows.append(row)
        path = out_dir / "comparison.csv"
        _write_csv(path, header, rows)
        written.append(path)

        rows = []
        for a in cases:
            for b in cases:
                if a != b:
                    rows.append([a, b, _fmt(comparison.improvement(a, b))])
        path = out_dir / "improvements.csv"
        _write_csv(path, ["case", "baseline", "capture_improvement_pct"], rows)
        written.append(path)

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "files": [p.name for p in written],
        "config": config.to_dict() if config is not None else None,
        "cases": list(summaries),
    }
    path = out_dir / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(path)
    return written
