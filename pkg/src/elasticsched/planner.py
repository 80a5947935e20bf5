"""Offline elastic-kernel candidate generation and design-space shrinking.

A candidate is a (shard grid size, elastic block size) pair for one normal
kernel. Candidates are filtered by the two co-location constraints against
critical kernels, scored by workload balance (``wiscore``) times a binary
launch-overhead gate (``oscore``), and only the top fifth is kept for the
runtime coordinator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .gpu import GpuSpec
from .workload import KernelSpec

KEEP_FRACTION = 0.2
# 15 us per launch and a 0.35 ms scheduling budget
DEFAULT_LAUNCH_OVERHEAD = 15e-6
DEFAULT_MAX_OVERHEAD = 0.35e-3


@dataclass(frozen=True, order=True)
class ElasticCandidate:
    shard_grid_size: int
    elastic_block_size: int
    n_shards: int

    def __post_init__(self):
        if self.shard_grid_size < 1:
            raise ValueError("shard_grid_size must be >= 1")
        if self.elastic_block_size < 1:
            raise ValueError("elastic_block_size must be >= 1")
        if self.n_shards < 1:
            raise ValueError("n_shards must be >= 1")

    @classmethod
    def for_kernel(cls, M: int, shard_grid_size: int, elastic_block_size: int):
        return cls(shard_grid_size, elastic_block_size, -(-M // shard_grid_size))


@dataclass(frozen=True)
class CriticalProfile:
    n_blk_rt: int
    s_blk_rt: int

    def __post_init__(self):
        if self.n_blk_rt < 1 or self.s_blk_rt < 1:
            raise ValueError("critical profile needs n_blk_rt >= 1 and s_blk_rt >= 1")

    @classmethod
    def of(cls, kernel: KernelSpec) -> "CriticalProfile":
        return cls(kernel.grid_size, kernel.block_size)


@dataclass(frozen=True)
class ScoredCandidate:
    candidate: ElasticCandidate
    wiscore: float
    oscore: int
    combined: float
    feasible: bool = True
    fallback: bool = False

    @property
    def shard_grid_size(self):
        return self.candidate.shard_grid_size

    @property
    def elastic_block_size(self):
        return self.candidate.elastic_block_size


@dataclass(frozen=True)
class OverheadParams:
    launch_overhead_per_shard: float = DEFAULT_LAUNCH_OVERHEAD
    baseline_launch: float = DEFAULT_LAUNCH_OVERHEAD
    max_blk_overhead: float = DEFAULT_MAX_OVERHEAD
    max_pt_overhead: float = DEFAULT_MAX_OVERHEAD
    pt_overhead_per_shard: float = 0.0


def slicing_plan(M: int) -> tuple[int, ...]:
    """Dyadic slice sizes ``(M/2^n, ..., M/2, M)`` with ``n`` the 2-adic valuation of M."""
    if M < 1:
        raise ValueError("M must be >= 1")
    n = (M & -M).bit_length() - 1
    return tuple(M >> k for k in range(n, -1, -1))


def block_bounds(crit: CriticalProfile, gpu: GpuSpec) -> tuple[int, int]:
    """Upper bounds on (shard blocks, elastic block threads) next to ``crit``."""
    return gpu.n_sm - crit.n_blk_rt % gpu.n_sm, gpu.l_threads - crit.s_blk_rt


def feasible(c: ElasticCandidate, crit: CriticalProfile, gpu: GpuSpec) -> bool:
    max_blocks, max_threads = block_bounds(crit, gpu)
    return c.shard_grid_size <= max_blocks and c.elastic_block_size <= max_threads


def wiscore(c: ElasticCandidate, crit: CriticalProfile, gpu: GpuSpec) -> float:
    """Workload-balance score in [0, 1]; 1 means leftover SMs and threads are exactly filled.

    The intra-SM factor uses ``S_blk_rt + S_blk_be`` (critical plus elastic
    threads on a shared SM).
    """
    if c.shard_grid_size < 1:
        raise ValueError("shard must have at least one block")
    if not feasible(c, crit, gpu):
        raise ValueError(f"{c} is infeasible next to {crit}")
    inter = (crit.n_blk_rt % gpu.n_sm + c.shard_grid_size) / gpu.n_sm
    intra = (crit.s_blk_rt + c.elastic_block_size) / gpu.l_threads
    return min(1.0, max(0.0, inter * intra))


def launch_overheads(c: ElasticCandidate, launch_overhead_per_shard: float, baseline_launch: float,
                     pt_overhead_per_shard: float = 0.0) -> tuple[float, float]:
    lo_blk = c.n_shards * launch_overhead_per_shard - baseline_launch
    lo_pt = c.n_shards * pt_overhead_per_shard
    return lo_blk, lo_pt


def oscore(c: ElasticCandidate, launch_overhead_per_shard: float, baseline_launch: float,
           max_blk_overhead: float, max_pt_overhead: float,
           pt_overhead_per_shard: float = 0.0) -> int:
    """1 if the extra launch cost of slicing stays under both budgets, else 0."""
    for v in (launch_overhead_per_shard, baseline_launch, max_blk_overhead,
              max_pt_overhead, pt_overhead_per_shard):
        if v < 0:
            raise ValueError("overhead times must be >= 0")
    lo_blk, lo_pt = launch_overheads(c, launch_overhead_per_shard, baseline_launch,
                                     pt_overhead_per_shard)
    return int(lo_blk < max_blk_overhead and lo_pt < max_pt_overhead)


def elastic_block_sizes(block_size: int, warp_size: int) -> list[int]:
    sizes = list(range(warp_size, block_size + 1, warp_size))
    if not sizes or sizes[-1] != block_size:
        sizes.append(block_size)
    return sizes


def enumerate_candidates(kernel: KernelSpec, gpu: GpuSpec) -> list[ElasticCandidate]:
    M = kernel.grid_size
    return [ElasticCandidate.for_kernel(M, g, b)
            for g in slicing_plan(M)
            for b in elastic_block_sizes(kernel.block_size, gpu.warp_size)]


def worst_case_profile(profiles) -> CriticalProfile:
    return CriticalProfile(max(p.n_blk_rt for p in profiles), max(p.s_blk_rt for p in profiles))


def score_candidate(c: ElasticCandidate, profiles, gpu: GpuSpec, ov: OverheadParams,
                    worst: CriticalProfile | None = None) -> ScoredCandidate:
    worst = worst or worst_case_profile(profiles)
    o = oscore(c, ov.launch_overhead_per_shard, ov.baseline_launch, ov.max_blk_overhead,
               ov.max_pt_overhead, ov.pt_overhead_per_shard)
    ws = [wiscore(c, p, gpu) if feasible(c, p, gpu) else 0.0 for p in profiles]
    w = math.fsum(ws) / len(ws)
    return ScoredCandidate(c, w, o, w * o, feasible=feasible(c, worst, gpu))


def rank_key(sc: ScoredCandidate):
    return (-sc.combined, sc.candidate.shard_grid_size, sc.candidate.elastic_block_size)


def score_all(kernel: KernelSpec, crit_profiles, gpu: GpuSpec,
              overheads: OverheadParams | None = None) -> list[ScoredCandidate]:
    """Every raw candidate with its scores, in enumeration order."""
    profiles = list(crit_profiles)
    if not profiles:
        raise ValueError("at least one critical profile is required")
    ov = overheads or OverheadParams()
    worst = worst_case_profile(profiles)
    return [score_candidate(c, profiles, gpu, ov, worst) for c in enumerate_candidates(kernel, gpu)]


def keep_count(n_raw: int) -> int:
    return max(1, math.ceil(n_raw * KEEP_FRACTION - 1e-9))


def shrink_design_space(kernel: KernelSpec, crit_profiles, gpu: GpuSpec,
                        overheads: OverheadParams | None = None) -> list[ScoredCandidate]:
    """Top 20% (by raw candidate count) of the feasible candidates, best first.

    Feasibility is checked against the worst-case profile (largest block
    count and block size over ``crit_profiles``); scores are the mean over
    profiles. If nothing is feasible the un-sliced original kernel comes
    back as a single flagged fallback entry.
    """
    scored = score_all(kernel, crit_profiles, gpu, overheads)
    ok = sorted((s for s in scored if s.feasible), key=rank_key)
    if not ok:
        orig = ElasticCandidate.for_kernel(kernel.grid_size, kernel.grid_size, kernel.block_size)
        return [ScoredCandidate(orig, 0.0, 0, 0.0, feasible=False, fallback=True)]
    return ok[:keep_count(len(scored))]


def format_plan(cands) -> str:
    lines = [f"shard_grid={s.candidate.shard_grid_size} block={s.candidate.elastic_block_size} "
             f"wiscore={s.wiscore:.6f} oscore={s.oscore}" for s in cands]
    return "\n".join(lines) + ("\n" if lines else "")


def parse_plan(text: str, M: int) -> list[ScoredCandidate]:
    out = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        kv = dict(tok.split("=", 1) for tok in line.split())
        c = ElasticCandidate.for_kernel(M, int(kv["shard_grid"]), int(kv["block"]))
        w, o = float(kv["wiscore"]), int(kv["oscore"])
        out.append(ScoredCandidate(c, w, o, w * o))
    return out
