"""Command-line interface.

Subcommands:
  run            one case, seeded repetitions, CSV output (+ figures)
  compare        several cases over shared seeds, aligned comparison output
  replay-export  single seeded run emitting a line-oriented JSON replay trace

Every configuration field can come from an INI-style config file (--config)
and be overridden by a flag.  GRIDPURSUIT_WORKERS sets the default worker
count for batches.
"""
from __future__ import annotations

import argparse
import sys

from .engine import CASES
from .experiment import (ConfigError, build_config, compare_cases, emit_outputs,
                         parse_obstacles, run_batch, run_single)


def _add_config_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", metavar="FILE", help="INI config file")
    g = parser.add_argument_group("scenario")
    g.add_argument("--width", type=int)
    g.add_argument("--height", type=int)
    g.add_argument("--obstacles", type=parse_obstacles, metavar="X,Y;X,Y")
    g.add_argument("--pursuers", type=int, dest="n_pursuers")
    g.add_argument("--evaders", type=int, dest="n_evaders")
    g.add_argument("--difficulty-min", type=int, dest="difficulty_min")
    g.add_argument("--difficulty-max", type=int, dest="difficulty_max")
    g.add_argument("--pursuit-range", type=int, dest="pursuit_range")
    g.add_argument("--max-ticks", type=int, dest="max_ticks")
    g.add_argument("--life", type=int)
    g.add_argument("--drift-patience", type=int, dest="drift_patience")
    g.add_argument("--staffing-patience", type=int, dest="staffing_patience")
    g.add_argument("--staffing-gain", type=float, dest="staffing_gain")
    g.add_argument("--repetitions", type=int)
    g.add_argument("--base-seed", type=int, dest="base_seed")
    g = parser.add_argument_group("membership")
    g.add_argument("--coef-dist", type=float, dest="coef_dist")
    g.add_argument("--coef-conf", type=float, dest="coef_conf")
    g.add_argument("--coef-cred", type=float, dest="coef_cred")
    g.add_argument("--metric", choices=("chebyshev", "manhattan", "euclidean"))
    g.add_argument("--raw-distance", action="store_const", const=False,
                   dest="invert_distance",
                   help="use the uninverted distance term (A/B mode)")
    g.add_argument("--score-mode", choices=("max", "mean"), dest="score_mode")
    g = parser.add_argument_group("clustering")
    g.add_argument("--sofm-nodes", type=int, dest="sofm_nodes")
    g.add_argument("--sofm-epochs", type=int, dest="sofm_epochs")
    g.add_argument("--sofm-lr-initial", type=float, dest="sofm_lr_initial")
    g.add_argument("--sofm-lr-final", type=float, dest="sofm_lr_final")
    g.add_argument("--sofm-radius-final", type=float, dest="sofm_radius_final")
    g.add_argument("--kmeans-k", type=int, dest="kmeans_k")
    g.add_argument("--dbscan-eps", type=float, dest="dbscan_eps")
    g.add_argument("--dbscan-min-pts", type=int, dest="dbscan_min_pts")
    g = parser.add_argument_group("learning")
    g.add_argument("--alpha", type=float)
    g.add_argument("--discount", type=float)
    g.add_argument("--eps-initial", type=float, dest="eps_initial")
    g.add_argument("--eps-final", type=float, dest="eps_final")
    g.add_argument("--sigma-scale", type=float, dest="sigma_scale")
    g.add_argument("--plan-sweeps-formation", type=int, dest="plan_sweeps_formation")
    g.add_argument("--plan-sweeps-tick", type=int, dest="plan_sweeps_tick")
    g.add_argument("--plan-alpha", type=float, dest="plan_alpha")
    g.add_argument("--lead-ticks", type=int, dest="lead_ticks")
    g.add_argument("--lead-weight", type=float, dest="lead_weight")
    g.add_argument("--evader-policy", choices=("heuristic", "qlearn"),
                   dest="evader_policy")
    g.add_argument("--freeze-priority", action="store_const", const=True,
                   dest="freeze_priority")


_CONFIG_KEYS = (
    "width", "height", "obstacles", "n_pursuers", "n_evaders", "difficulty_min",
    "difficulty_max", "pursuit_range", "max_ticks", "life", "repetitions",
    "base_seed", "coef_dist", "coef_conf", "coef_cred", "metric",
    "invert_distance", "score_mode", "sofm_nodes", "sofm_epochs",
    "sofm_lr_initial", "sofm_lr_final", "sofm_radius_final", "kmeans_k",
    "dbscan_eps", "dbscan_min_pts", "alpha", "discount", "eps_initial",
    "eps_final", "sigma_scale", "plan_sweeps_formation", "plan_sweeps_tick",
    "plan_alpha", "lead_ticks", "lead_weight", "drift_patience", "staffing_patience",
    "staffing_gain", "evader_policy", "freeze_priority",
)


def _config_from_args(args, case: str):
    overrides = {k: getattr(args, k, None) for k in _CONFIG_KEYS}
    overrides["case"] = case
    return build_config(file_path=args.config, **overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridpursuit",
        description="Grid-world pursuit-evasion experiments with evader "
                    "grouping and coalition learning.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one case over seeded repetitions")
    p_run.add_argument("--case", choices=CASES, default=None)
    p_run.add_argument("--out-dir", default="results", help="output directory")
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--figures", action="store_true",
                       help="also render PNG figures into the output directory")
    _add_config_flags(p_run)

    p_cmp = sub.add_parser("compare", help="run several cases on shared seeds")
    p_cmp.add_argument("--cases", default=",".join(CASES),
                       help="comma-separated case list (default: all five)")
    p_cmp.add_argument("--out-dir", default="results", help="output directory")
    p_cmp.add_argument("--workers", type=int, default=None)
    p_cmp.add_argument("--figures", action="store_true",
                       help="also render PNG figures into the output directory")
    _add_config_flags(p_cmp)

    p_rep = sub.add_parser("replay-export",
                           help="run one seed and export a replay trace")
    p_rep.add_argument("--case", choices=CASES, default=None)
    p_rep.add_argument("--seed", type=int, default=None,
                       help="seed to replay (default: base seed)")
    p_rep.add_argument("--out", default="replay.jsonl", help="trace file path")
    _add_config_flags(p_rep)
    return parser


def _cmd_run(args) -> int:
    cfg = _config_from_args(args, args.case or "SOFM_AGRMF")
    summary = run_batch(cfg, workers=args.workers)
    paths = emit_outputs(summary, args.out_dir, config=cfg)
    if args.figures:
        from .report import render_figures
        paths += render_figures({summary.case: summary}, args.out_dir)
    print(f"{cfg.case}: {len(summary.runs)} runs, "
          f"mean capture {summary.mean_capture:.2f} "
          f"(std {summary.std_capture:.2f}), "
          f"mean flexibility {summary.mean_flexibility:.2f}")
    for p in paths:
        print(f"wrote {p}")
    return 0


def _cmd_compare(args) -> int:
    cases = [c.strip() for c in args.cases.split(",") if c.strip()]
    configs = [_config_from_args(args, case) for case in cases]
    comparison = compare_cases(configs, workers=args.workers)
    paths = emit_outputs(comparison, args.out_dir, config=configs[0])
    if args.figures:
        from .report import render_figures
        paths += render_figures(comparison.summaries, args.out_dir)
    for case, s in comparison.summaries.items():
        print(f"{case}: mean capture {s.mean_capture:.2f} "
              f"(std {s.std_capture:.2f}), "
              f"mean flexibility {s.mean_flexibility:.2f}")
    for p in paths:
        print(f"wrote {p}")
    return 0


def _cmd_replay(args) -> int:
    cfg = _config_from_args(args, args.case or "SOFM_AGRMF")
    seed = cfg.base_seed if args.seed is None else args.seed
    metrics = run_single(cfg, seed, trace_path=args.out)
    print(f"{cfg.case} seed {seed}: capture_ticks={metrics.capture_ticks} "
          f"flexibility={metrics.flexibility}")
    print(f"wrote {args.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "compare":
            return _cmd_compare(args)
        if args.command == "replay-export":
            return _cmd_replay(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    parser.error(f"unknown command {args.command!r}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
