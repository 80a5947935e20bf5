"""Empirical check that design-space shrinking keeps the best candidate.

For a small random instance (one normal kernel, a short critical kernel
sequence) every raw candidate is simulated on its own: the coordinator is
handed that single candidate and the normal kernel's completion time is
measured while the critical request runs. The shrunk top fifth should
contain one of the fastest candidates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gpu import GpuSpec
from .planner import CriticalProfile, OverheadParams, ScoredCandidate, score_all, shrink_design_space
from .sim import ContentionModel, run
from .workload import ArrivalPattern, Criticality, KernelSpec, TaskSpec, Workload

TIE_RTOL = 1e-9


@dataclass(frozen=True)
class Instance:
    normal: KernelSpec
    critical: tuple[KernelSpec, ...]


@dataclass
class InstanceResult:
    instance: Instance
    times: dict  # (shard grid, elastic block) -> normal completion time
    best: list
    kept: list
    ok: bool

    def describe(self) -> str:
        k = self.instance.normal
        crit = ",".join(f"{c.grid_size}x{c.block_size}" for c in self.instance.critical)
        return (f"normal M={k.grid_size} B={k.block_size} critical=[{crit}] best={self.best} "
                f"kept={self.kept}")


def random_instance(rng: np.random.Generator, gpu: GpuSpec, max_m: int = 16, max_block: int = 128) -> Instance:
    w = gpu.warp_size
    M = int(rng.integers(1, max_m + 1))
    B = int(rng.integers(1, max_block // w + 1)) * w
    normal = KernelSpec("n", M, B, float(rng.uniform(200, 2000)), float(rng.uniform(0.0, 0.3)))
    crit = []
    for i in range(int(rng.integers(1, 4))):
        g = int(rng.integers(1, 2 * gpu.n_sm + 1))
        b = int(rng.integers(1, (gpu.l_threads // 2) // w + 1)) * w
        crit.append(KernelSpec(f"c{i}", g, b, float(rng.uniform(500, 3000)), float(rng.uniform(0.0, 0.3))))
    return Instance(normal, tuple(crit))


def _workload(inst: Instance) -> Workload:
    crit = TaskSpec("crit", inst.critical, Criticality.CRITICAL)
    norm = TaskSpec("norm", (inst.normal,), Criticality.NORMAL)
    # a single request each at t=0; the horizon is generous enough for both to finish
    return Workload("pruning", crit, ArrivalPattern("uniform", 1.0), norm, ArrivalPattern("uniform", 1.0),
                    duration=1.0, critical_arrivals=(0.0,), normal_arrivals=(0.0,))


def candidate_time(inst: Instance, sc: ScoredCandidate, gpu: GpuSpec, model: ContentionModel) -> float:
    wl = _workload(inst)
    _, m = run(wl, "elastic", gpu, model, record=False, candidates={inst.normal.id: [sc]})
    if not m.normal_latencies:
        return float("inf")
    return m.normal_latencies[0]


def check_instance(inst: Instance, gpu: GpuSpec, model: ContentionModel | None = None) -> InstanceResult:
    model = model or ContentionModel()
    profiles = [CriticalProfile.of(k) for k in inst.critical]
    ov = OverheadParams(launch_overhead_per_shard=model.launch_overhead, baseline_launch=model.launch_overhead)
    kept = shrink_design_space(inst.normal, profiles, gpu, ov)
    times = {}
    for sc in score_all(inst.normal, profiles, gpu, ov):
        c = sc.candidate
        times[(c.shard_grid_size, c.elastic_block_size)] = candidate_time(inst, sc, gpu, model)
    t_best = min(times.values())
    best = sorted(k for k, t in times.items() if t <= t_best * (1 + TIE_RTOL))
    kept_keys = [(s.shard_grid_size, s.elastic_block_size) for s in kept]
    ok = any(k in best for k in kept_keys)
    return InstanceResult(inst, times, best, kept_keys, ok)


def run_pruning_check(n: int, gpu: GpuSpec, seed: int = 0, model: ContentionModel | None = None):
    rng = np.random.default_rng(seed)
    return [check_instance(random_instance(rng, gpu), gpu, model) for _ in range(n)]
