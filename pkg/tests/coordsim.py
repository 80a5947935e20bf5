"""Random event-sequence driver for the coordinator (shared by unit and acceptance tests)."""

from __future__ import annotations

import numpy as np

from elasticsched.coordinator import ACTUAL, DISPATCHED, Coordinator, Event
from elasticsched.gpu import GpuSpec
from elasticsched.planner import CriticalProfile, block_bounds, shrink_design_space
from elasticsched.workload import KernelSpec


def random_kernel(rng, i):
    M = int(rng.choice([1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 64]))
    B = int(rng.choice([32, 64, 128, 256]))
    return KernelSpec(f"n{i}", M, B, 1.0)


def random_profile(rng, gpu):
    return CriticalProfile(int(rng.integers(1, 3 * gpu.n_sm)), int(rng.integers(1, gpu.l_threads // 2 + 1)))


def run_random_events(n_events: int, seed: int, gpu: GpuSpec | None = None):
    """Drive a coordinator with ``n_events`` random events, checking invariants after each.

    Returns the number of normal kernels that completed.
    """
    gpu = gpu or GpuSpec("rand", n_sm=8, l_threads=1024)
    rng = np.random.default_rng(seed)
    coord = Coordinator(gpu)
    executed = {}  # job key -> per-block execution counts
    kernels = {}
    queued = []  # dispatched-but-not-launched shards, launch order
    running = []  # launched shards
    critical = None
    n_kernels = 0
    completed = 0
    for step in range(n_events):
        choices = ["normal_arrival", "critical_arrival" if critical is None else "critical_retire"]
        if queued:
            choices.append("launch")
        if running:
            choices.append("shard_retire")
        kind = choices[int(rng.integers(len(choices)))]
        if kind == "launch":
            sd = queued.pop(0)
            coord.launched(sd)
            running.append(sd)
            coord.check()
            continue
        if kind == "normal_arrival":
            k = random_kernel(rng, n_kernels)
            profs = [random_profile(rng, gpu) for _ in range(int(rng.integers(1, 3)))]
            cands = shrink_design_space(k, profs, gpu)
            key = n_kernels
            n_kernels += 1
            kernels[key] = k
            executed[key] = [0] * k.grid_size
            ev = Event(kind, float(step), job=(key, k, cands))
        elif kind == "critical_arrival":
            critical = random_profile(rng, gpu)
            if rng.random() < 0.5:
                critical = (critical, random_profile(rng, gpu))
            ev = Event(kind, float(step), profile=critical)
        elif kind == "critical_retire":
            critical = random_profile(rng, gpu) if rng.random() < 0.3 else None
            ev = Event(kind, float(step), profile=critical)
        else:
            sd = running.pop(int(rng.integers(len(running))))
            for b in range(sd.start, sd.start + sd.count):
                executed[sd.job.key][b] += 1
            ev = Event(kind, float(step), shard=sd)
        d = coord.on_event(ev)
        for sd in d.cancel:
            queued.remove(sd)
        queued.extend(d.dispatch)
        # priority safety against every profile the coordinator was told to respect
        if d.dispatch and critical is not None:
            profs = [critical] if isinstance(critical, CriticalProfile) else list(critical)
            max_blocks = min(block_bounds(p, gpu)[0] for p in profs)
            max_threads = min(block_bounds(p, gpu)[1] for p in profs)
            assert all(sd.block_size <= max_threads for sd in d.dispatch)
            live = sum(sd.count for sd in queued) + sum(sd.count for sd in running)
            assert live <= max_blocks
        for sd in d.dispatch:
            assert sd.node.status == ACTUAL
        for key in d.completed:
            assert executed[key] == [1] * kernels[key].grid_size, (key, executed[key])
            completed += 1
        coord.check()
        # no livelock: with nothing to protect, the head kernel is fully issued
        if critical is None and coord.queue:
            tree = coord.queue[0].tree
            assert not tree.frontier()
        for job in coord.queue:
            for n in job.tree.leaves():
                assert n.status != DISPATCHED or executed[job.key][n.start] == 0
    return completed
