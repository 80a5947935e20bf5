"""Command-line entry point: ``elasticsched {plan,run,transform,compare}``.

Exit codes: 0 success, 1 usage or configuration error, 2 simulation or
verification failure.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import dsl
from .config import ConfigError, ExperimentConfig, load_config
from .dsl.transform import ShardPlan
from .gpu import PRESETS, get_preset
from .planner import (CriticalProfile, OverheadParams, elastic_block_sizes, rank_key, score_all,
                      shrink_design_space, slicing_plan)
from .sim import export_latency_cdf, run
from .workload import ProfileError, load_profile

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--gpu", choices=sorted(PRESETS), help="GPU preset (overrides the config)")
    p.add_argument("--seed", type=int, help="arrival seed (overrides the config)")
    p.add_argument("--out", type=Path, help="output directory")


# -- plan ----------------------------------------------------------------------

def _critical_profiles(args) -> list[CriticalProfile]:
    out = []
    for spec in args.critical or []:
        try:
            n, s = spec.lower().split("x")
            out.append(CriticalProfile(int(n), int(s)))
        except ValueError:
            raise UsageError(f"--critical expects <blocks>x<threads>, got {spec!r}") from None
    if args.critical_profile:
        out += [CriticalProfile.of(k) for k in load_profile(args.critical_profile)]
    if not out:
        raise UsageError("give at least one --critical NxS or --critical-profile")
    return out


def cmd_plan(args) -> int:
    gpu = get_preset(args.gpu or "rtx2060-like")
    kernels = load_profile(args.profile)
    profiles = _critical_profiles(args)
    ov = OverheadParams()
    for k in kernels:
        scored = sorted(score_all(k, profiles, gpu, ov), key=rank_key)
        kept = shrink_design_space(k, profiles, gpu, ov)
        kept_keys = {(s.shard_grid_size, s.elastic_block_size) for s in kept}
        print(f"kernel {k.id}: M={k.grid_size} B={k.block_size} candidates={len(scored)}")
        print(f"  {'keep':4} {'shard':>5} {'block':>5} {'shards':>6} {'feasible':>8} "
              f"{'wiscore':>8} {'oscore':>6} {'combined':>8}")
        for s in scored:
            c = s.candidate
            mark = "*" if (c.shard_grid_size, c.elastic_block_size) in kept_keys else ""
            print(f"  {mark:4} {c.shard_grid_size:5d} {c.elastic_block_size:5d} {c.n_shards:6d} "
                  f"{'yes' if s.feasible else 'no':>8} {s.wiscore:8.4f} {s.oscore:6d} {s.combined:8.4f}")
        if kept[0].fallback:
            print(f"  fallback: no feasible candidate, original launch "
                  f"({k.grid_size}, {k.block_size}) kept")
        pruned = 1 - len(kept) / len(scored)
        print(f"  kept={len(kept)} pruned_fraction={pruned:.3f}")
    return EXIT_OK


# -- run / compare ---------------------------------------------------------------

def _cell(args):
    workload, policy, gpu, model, seed, write_trace, decision_log, out = args
    trace, metrics = run(workload, policy, gpu, model, seed, record=write_trace or False,
                         decision_log=decision_log)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        metrics.export(out / "metrics.txt")
        if write_trace:
            trace.export(out / "trace.txt")
        if metrics.critical_latencies:
            export_latency_cdf(metrics, out / "latency_cdf.txt")
        if decision_log and trace.decisions:
            (out / "decisions.txt").write_text("".join(line + "\n" for line in trace.decisions))
    return metrics


def run_cells(cfg: ExperimentConfig, out_dir: Path | None, parallel: int = 1):
    """Simulate every (workload, policy) cell; returns {workload name: [(label, Metrics)]}."""
    jobs, labels = [], []
    for wl in cfg.workloads:
        seen: dict[str, int] = {}
        for policy in cfg.policies:
            seen[policy] = seen.get(policy, 0) + 1
            label = policy if seen[policy] == 1 else f"{policy}-{seen[policy]}"
            cell_out = out_dir / wl.name / label if out_dir is not None else None
            jobs.append((wl, policy, cfg.gpu, cfg.model, cfg.seed, cfg.write_trace and out_dir is not None,
                         cfg.decision_log, cell_out))
            labels.append((wl.name, label))
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as ex:
            results = list(ex.map(_cell, jobs))
    else:
        results = [_cell(j) for j in jobs]
    grouped: dict[str, list] = {}
    for (wname, label), m in zip(labels, results):
        grouped.setdefault(wname, []).append((label, m))
    return grouped


def _baseline(rows):
    for label, m in rows:
        if m.policy == "sequential":
            return m
    return rows[0][1]


def _ratio(a, b):
    return a / b if b else float("nan")


def summary_table(grouped) -> str:
    lines = [f"{'workload':10} {'policy':14} {'crit_mean_ms':>12} {'crit_p99_ms':>11} {'throughput':>10} "
             f"{'occupancy':>9} {'lat_x':>6} {'thr_x':>6}"]
    for wname, rows in grouped.items():
        base = _baseline(rows)
        for label, m in rows:
            lines.append(f"{wname:10} {label:14} {m.critical_mean * 1e3:12.4f} {m.critical_p99 * 1e3:11.4f} "
                         f"{m.throughput:10.2f} {m.occupancy:9.4f} "
                         f"{_ratio(m.critical_mean, base.critical_mean):6.3f} "
                         f"{_ratio(m.throughput, base.throughput):6.3f}")
    return "\n".join(lines) + "\n"


def comparison_report(grouped) -> str:
    lines = ["# ratios are policy / baseline (sequential when present)",
             f"{'workload':10} {'policy':14} {'latency_mean':>12} {'latency_p99':>11} {'throughput':>10} "
             f"{'occupancy':>9}"]
    for wname, rows in grouped.items():
        base = _baseline(rows)
        for label, m in rows:
            lines.append(f"{wname:10} {label:14} {_ratio(m.critical_mean, base.critical_mean):12.4f} "
                         f"{_ratio(m.critical_p99, base.critical_p99):11.4f} "
                         f"{_ratio(m.throughput, base.throughput):10.4f} "
                         f"{_ratio(m.occupancy, base.occupancy):9.4f}")
    return "\n".join(lines) + "\n"


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config, args.seed, args.gpu)
    if args.out is not None:
        cfg.out_dir = args.out
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    out = cfg.out_dir or Path("results")
    grouped = run_cells(cfg, out, args.parallel)
    table = summary_table(grouped)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.txt").write_text(table)
    sys.stdout.write(table)
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load(args)
    if len(cfg.policies) < 2:
        raise UsageError("compare needs at least two policies")
    grouped = run_cells(cfg, None, args.parallel)
    report = comparison_report(grouped)
    sys.stdout.write(report)
    if cfg.out_dir is not None:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        (cfg.out_dir / "comparison.txt").write_text(report)
    if args.gnuplot:
        with open(args.gnuplot, "w") as f:
            f.write("# workload policy latency_x p99_x throughput_x occupancy_x\n")
            for wname, rows in grouped.items():
                base = _baseline(rows)
                for label, m in rows:
                    f.write(f"{wname} {label} {_ratio(m.critical_mean, base.critical_mean):.6f} "
                            f"{_ratio(m.critical_p99, base.critical_p99):.6f} "
                            f"{_ratio(m.throughput, base.throughput):.6f} "
                            f"{_ratio(m.occupancy, base.occupancy):.6f}\n")
    return EXIT_OK


# -- transform -------------------------------------------------------------------

def cmd_transform(args) -> int:
    try:
        source = Path(args.source).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {args.source}: {exc.strerror}") from None
    kernel = dsl.parse_kernel(source)
    launch, sets = dsl.read_directives(source)
    M = args.grid or launch.get("grid")
    B = args.block or launch.get("block")
    elastic = dsl.elasticize(kernel, args.mode)
    sys.stdout.write(dsl.print_kernel(elastic))
    if not args.verify:
        return EXIT_OK
    if not M or not B:
        raise UsageError("--verify needs --grid/--block (or a // @launch directive)")
    shards = [args.shard] if args.shard else list(slicing_plan(M))
    blocks = [args.elastic_block] if args.elastic_block else elastic_block_sizes(B, args.warp)
    try:
        plans = [ShardPlan.uniform(M, g, b, args.mode) for g in shards for b in blocks]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = dsl.verify_equivalence(kernel, elastic, M, B, plans, seed=args.seed or 0, scalars=sets)
    for line in report.lines():
        print(line)
    print("PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_FAIL


# -- entry -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="elasticsched", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("plan", help="score and shrink elastic candidates for a kernel profile")
    p.add_argument("profile", help="kernel profile file or shipped model name")
    p.add_argument("--critical", action="append", metavar="NxS",
                   help="critical kernel blocks x threads per block (repeatable)")
    p.add_argument("--critical-profile", help="profile whose kernels are the critical set")
    _common(p)
    p.set_defaults(fn=cmd_plan)

    for name, fn, text in (("run", cmd_run, "simulate every policy and write metrics/traces"),
                           ("compare", cmd_compare, "report policy/sequential ratios")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config", help="experiment config file")
        p.add_argument("--parallel", type=int, default=1, metavar="N", help="run N cells concurrently")
        if name == "compare":
            p.add_argument("--gnuplot", metavar="FILE", help="also write gnuplot-ready columns")
        _common(p)
        p.set_defaults(fn=fn)

    p = sub.add_parser("transform", help="print the elastic form of a DSL kernel")
    p.add_argument("source", help="kernel source file")
    p.add_argument("--mode", choices=("computation", "memory"), default="computation",
                   help="logical index recovery scheme")
    p.add_argument("--grid", type=int, help="logical grid size M")
    p.add_argument("--block", type=int, help="logical block size B")
    p.add_argument("--shard", type=int, help="verify only this shard grid size")
    p.add_argument("--elastic-block", type=int, help="verify only this elastic block size")
    p.add_argument("--warp", type=int, default=32, help="elastic block size step for --verify")
    p.add_argument("--verify", action="store_true", help="check equivalence on random inputs")
    _common(p)
    p.set_defaults(fn=cmd_transform)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (UsageError, ConfigError, ProfileError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BrokenPipeError:
        return EXIT_OK
    except dsl.DslError as exc:
        print(f"error: {args.source}:{exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # simulation failures
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
