"""Acceptance suite: one test per acceptance criterion, each printing a PASS/FAIL line."""

import time
from importlib import resources

import numpy as np
import pytest

from coordsim import run_random_events
from elasticsched import dsl
from elasticsched.cli import main
from elasticsched.dsl.transform import ShardPlan, naive_resize
from elasticsched.gpu import GpuSpec, get_preset
from elasticsched.planner import (CriticalProfile, ElasticCandidate, elastic_block_sizes, feasible, oscore,
                                  shrink_design_space, slicing_plan, wiscore)
from elasticsched.pruning import run_pruning_check
from elasticsched.sim import POLICIES, ContentionModel, run
from elasticsched.workload import KernelSpec, build_mdtb, load_trace
from oracles import occupancy_bruteforce
from simutil import kernel, one_shot

RTX = get_preset("rtx2060-like")


def report(n, ok, detail):
    print(f"[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}")
    return ok


# 1 ---------------------------------------------------------------------------

def test_criterion_1_transformer_equivalence():
    t0 = time.time()
    corpus = dsl.load_corpus()
    failures, checked = [], 0
    for c in corpus:
        M, B = c.grid, c.block
        for mode in ("computation", "memory"):
            elastic = dsl.elasticize(c.ast, mode)
            plans = [ShardPlan.uniform(M, g, b, mode) for g in slicing_plan(M)
                     for b in elastic_block_sizes(B, 32)]
            rep = dsl.verify_equivalence(c.ast, elastic, M, B, plans, seed=11, scalars=c.scalars)
            checked += len(rep.results)
            failures += [line for line in rep.lines() if line.startswith("FAIL")]
    elapsed = time.time() - t0
    ok = len(corpus) >= 8 and not failures and elapsed < 60
    assert report(1, ok, f"{len(corpus)} kernels, {checked} shard plans, {len(failures)} mismatches, "
                         f"{elapsed:.1f}s"), failures[:5]


# 2 ---------------------------------------------------------------------------

def test_criterion_2_naive_resize_fails():
    broken = []
    for c in dsl.load_corpus():
        M, B = c.grid, c.block
        ok, detail = naive_resize(c.ast, M, B, M * 2, B // 2, seed=5, scalars=c.scalars)
        if not ok:
            broken.append(f"{c.name} ({detail})")
    assert report(2, bool(broken), f"naive resize wrong on {len(broken)} kernel(s): {'; '.join(broken)}")


# 3 ---------------------------------------------------------------------------

def test_criterion_3_pruning_safety():
    t0 = time.time()
    results = run_pruning_check(1000, RTX, seed=0)
    elapsed = time.time() - t0
    bad = [r for r in results if not r.ok]
    for r in bad:
        print(f"  pruning violation: {r.describe()}")
    rate = 1 - len(bad) / len(results)
    ok = rate >= 0.95 and elapsed < 300
    assert report(3, ok, f"optimum kept in {rate:.0%} of {len(results)} instances, {elapsed:.1f}s")


# 4 ---------------------------------------------------------------------------

def test_criterion_4_formula_vectors():
    g8 = GpuSpec("g8", n_sm=8, l_threads=1024)
    ov = dict(launch_overhead_per_shard=15e-6, baseline_launch=15e-6, max_blk_overhead=350e-6,
              max_pt_overhead=350e-6)
    checks = {
        "slicing_plan(12)": slicing_plan(12) == (3, 6, 12),
        "slicing_plan(1)": slicing_plan(1) == (1,),
        "slicing_plan(16)": slicing_plan(16) == (1, 2, 4, 8, 16),
        "feasible 6 of 6": feasible(ElasticCandidate(6, 32, 1), CriticalProfile(10, 256), g8),
        "infeasible 7 of 6": not feasible(ElasticCandidate(7, 32, 1), CriticalProfile(10, 256), g8),
        "saturated threads": not feasible(ElasticCandidate(1, 32, 1), CriticalProfile(1, 1024), g8),
        "mod term zero": feasible(ElasticCandidate(8, 32, 1), CriticalProfile(16, 32), g8),
        "wiscore 0.25": wiscore(ElasticCandidate(2, 256, 1), CriticalProfile(10, 256), g8) == 0.25,
        "wiscore packed": wiscore(ElasticCandidate(6, 768, 1), CriticalProfile(2, 256), g8) == 1.0,
        "oscore 1 shard": oscore(ElasticCandidate(64, 32, 1), **ov) == 1,
        "oscore 64 shards": oscore(ElasticCandidate(1, 32, 64), **ov) == 0,
        "oscore 4 shards": oscore(ElasticCandidate(16, 32, 4), **ov) == 1,
        "shrink 40 -> 8": len(shrink_design_space(KernelSpec("k", 16, 256, 1.0), [CriticalProfile(4, 256)],
                                                  RTX)) == 8,
    }
    rng = np.random.default_rng(4)
    n_feasible, out_of_range = 0, 0
    while n_feasible < 10_000:
        gpu = GpuSpec("r", n_sm=int(rng.integers(1, 80)), l_threads=32 * int(rng.integers(1, 65)))
        crit = CriticalProfile(int(rng.integers(1, 300)), int(rng.integers(1, gpu.l_threads + 1)))
        c = ElasticCandidate(int(rng.integers(1, gpu.n_sm + 1)), int(rng.integers(1, gpu.l_threads + 1)), 1)
        if not feasible(c, crit, gpu):
            continue
        n_feasible += 1
        w = wiscore(c, crit, gpu)
        out_of_range += not (0.0 <= w <= 1.0)
    failed = [k for k, v in checks.items() if not v]
    ok = not failed and out_of_range == 0
    assert report(4, ok, f"{len(checks) - len(failed)}/{len(checks)} vectors exact, "
                         f"{out_of_range} of {n_feasible} random wiscores outside [0,1]"), failed


# 5 ---------------------------------------------------------------------------

REL_TOL = 1e-9


def test_criterion_5_sequential_optimality():
    violations, compared = [], 0
    for wid in "ABCD":
        for seed in range(1, 6):
            wl = build_mdtb(wid, duration=0.4, seed=seed)
            seq = run(wl, "sequential", RTX, record=False)[1].critical_latencies
            for policy in ("multistream", "elastic"):
                other = run(wl, policy, RTX, record=False)[1].critical_latencies
                for i, (a, b) in enumerate(zip(seq, other)):
                    compared += 1
                    if a > b * (1 + REL_TOL):
                        violations.append(f"MDTB-{wid} seed={seed} {policy} req#{i}: {a:.9f} > {b:.9f}")
    assert report(5, not violations and compared > 0,
                  f"{compared} paired critical requests, {len(violations)} violations"), violations[:5]


# 6 ---------------------------------------------------------------------------

def _directional(wl, min_thr, max_overhead, label):
    t0 = time.time()
    _, seq = run(wl, "sequential", RTX, record=False)
    _, ela = run(wl, "elastic", RTX, record=False)
    elapsed = time.time() - t0
    thr = ela.throughput / seq.throughput
    over = ela.critical_mean / seq.critical_mean - 1
    ok = thr >= min_thr and over <= max_overhead and elapsed < 60
    return report(6, ok, f"{label}: throughput {thr:.3f}x (need >= {min_thr}), critical overhead "
                          f"{over:+.1%} (need <= {max_overhead:.0%}), {elapsed:.1f}s for both cells")


@pytest.mark.parametrize("cell", ["MDTB-A", "LGSVL"])
def test_criterion_6_directional(cell):
    if cell == "MDTB-A":
        assert _directional(build_mdtb("A", duration=2.0, seed=1), 1.4, 0.35, cell)
    else:
        trace = resources.files("elasticsched") / "traces" / "lgsvl.trace"
        assert _directional(load_trace(trace), 1.5, 0.25, cell)


# 7 ---------------------------------------------------------------------------

def test_criterion_7_coordinator_invariants():
    total, completed = 0, 0
    for seed in range(4):
        completed += run_random_events(3000, seed)
        total += 3000
    ok = total >= 10_000 and completed > 0
    assert report(7, ok, f"{total} random events, invariants held at every step, "
                         f"{completed} normal kernels each executed every block exactly once")


# 8 ---------------------------------------------------------------------------

def test_criterion_8_determinism(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("[experiment]\nseed = 7\npolicies = sequential, multistream, ib, elastic\n"
                   "[workload]\nmdtb = B C\nduration = 0.2\n")
    outs = []
    for i in range(3):
        out = tmp_path / f"run{i}"
        assert main(["run", str(cfg), "--out", str(out)]) == 0
        outs.append({p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*.txt"))})
    files = [f for f in outs[0] if f.name in ("trace.txt", "metrics.txt")]
    same = outs[0] == outs[1] == outs[2]
    assert report(8, same and len(files) == 16, f"{len(outs[0])} files byte-identical across 3 runs")


# 9 ---------------------------------------------------------------------------

def test_criterion_9_occupancy_oracle():
    rng = np.random.default_rng(99)
    worst = 0.0
    for i in range(20):
        gpu = GpuSpec("r", n_sm=int(rng.integers(1, 7)), l_threads=256 * int(rng.integers(1, 5)),
                      max_warps_per_sm=int(rng.choice([16, 32, 64])))
        def rk(name):
            return kernel(name, int(rng.integers(1, 24)), 32 * int(rng.integers(1, gpu.l_threads // 64 + 1))
                          - int(rng.integers(0, 8)), float(rng.uniform(100, 3000)), float(rng.uniform(0, 0.6)))
        crit = [rk(f"c{j}") for j in range(int(rng.integers(1, 4)))]
        norm = [rk(f"n{j}") for j in range(int(rng.integers(1, 4)))]
        arrivals = sorted(float(x) for x in rng.uniform(0, 0.004, size=3))
        wl = one_shot(crit, norm, crit_at=arrivals, norm_at=arrivals[:2], duration=0.01)
        policy = POLICIES[i % len(POLICIES)]
        trace, m = run(wl, policy, gpu, ContentionModel())
        ref = occupancy_bruteforce(trace.events, gpu.n_sm, gpu.warp_size, gpu.max_warps_per_sm, trace.horizon)
        assert ref > 0
        worst = max(worst, abs(m.occupancy - ref) / ref)
    assert report(9, worst <= 1e-9, f"20 random traces, worst relative error {worst:.2e}")
