"""Discrete-event GPU model: FIFO block dispatch, SM residency and contention.

Blocks dispatched together from one launch onto one SM form a *group* that
shares a progress fraction. Every residency change recomputes each group's
service rate from the contention law (see :func:`block_service_time`), so
progress is piecewise linear in time.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..gpu import GpuSpec, SmState
from ..workload import KernelSpec

# event kind priorities at equal timestamps
RETIRE, DISPATCH, ARRIVAL = 0, 1, 2
CRITICAL, NORMAL = "critical", "normal"
# groups within this progress fraction of completion retire together
PROGRESS_EPS = 1e-10


@dataclass(frozen=True)
class ContentionModel:
    """Calibration surface of the simulator (times in seconds)."""

    sm_throughput: float = 1.0e9  # thread-work units per second per SM
    # memory-work units per second, GPU-wide; None uses the GpuSpec's value
    mem_bandwidth: float | None = None
    launch_overhead: float = 15e-6
    coordinator_overhead: float = 10e-6
    barrier_overhead: float = 30e-6
    # fractional extra work per additional persistent-thread loop trip
    pt_overhead: float = 0.0
    ib_group_size: int = 2

    def __post_init__(self):
        for name in ("sm_throughput", "launch_overhead", "coordinator_overhead", "barrier_overhead"):
            if not getattr(self, name) > 0:
                raise ValueError(f"ContentionModel.{name} must be positive")
        if self.mem_bandwidth is not None and not self.mem_bandwidth > 0:
            raise ValueError("ContentionModel.mem_bandwidth must be positive")
        if self.pt_overhead < 0:
            raise ValueError("ContentionModel.pt_overhead must be >= 0")
        if self.ib_group_size < 1:
            raise ValueError("ContentionModel.ib_group_size must be >= 1")


def block_service_time(threads: int, work_per_thread: float, mem_intensity: float,
                       sm: SmState, total_mem_demand: float, model: ContentionModel,
                       gpu: GpuSpec | None = None) -> float:
    """Service time of a resident block if the current residency stayed fixed.

    ``sm`` must already include the block; ``total_mem_demand`` is the sum of
    ``threads * mem_intensity`` over every resident block on the GPU,
    including this one. Bandwidth comes from ``model`` or else ``gpu``.
    """
    total = sm.resident_threads
    if total < threads:
        raise ValueError("block is not resident on this SM")
    compute = threads * work_per_thread * (1.0 - mem_intensity)
    compute_time = compute / (model.sm_throughput * (threads / total))
    memory_time = 0.0
    if mem_intensity > 0:
        demand = threads * mem_intensity
        memory = threads * work_per_thread * mem_intensity
        bw = model.mem_bandwidth or (gpu.mem_bandwidth if gpu else None)
        if bw is None:
            raise ValueError("memory bandwidth needs a ContentionModel value or a GpuSpec")
        memory_time = memory / (bw * (demand / total_mem_demand))
    return max(compute_time, memory_time)


@dataclass
class RequestRecord:
    id: int
    task: str
    criticality: str
    arrival: float
    start: float | None = None
    completion: float | None = None

    @property
    def label(self) -> str:
        return f"{self.task}#{self.id}"

    @property
    def latency(self) -> float | None:
        if self.completion is None or self.start is None:
            return None
        return self.completion - self.start


class Launch:
    """One kernel (or elastic shard) launch travelling through the dispatch queue."""

    __slots__ = ("id", "request", "kernel", "side", "start", "count", "threads", "shmem", "warps",
                 "work", "next", "remaining", "on_done", "on_enqueue", "cancelled", "payload")

    def __init__(self, request, kernel: KernelSpec, side, start, count, threads, work,
                 on_done=None, on_enqueue=None, payload=None):
        self.id = -1
        self.request = request
        self.kernel = kernel
        self.side = side
        self.start = start
        self.count = count
        self.threads = threads
        self.shmem = kernel.shmem_per_block
        self.warps = 0
        self.work = work  # work per thread of one physical block
        self.next = 0
        self.remaining = count
        self.on_done = on_done
        self.on_enqueue = on_enqueue
        self.cancelled = False
        self.payload = payload


@dataclass
class SimTrace:
    """Timestamped dispatch/retire events plus per-request records.

    Each event is ``(time, kind, task, kernel, first_block, last_block, sm, threads)``;
    ``kind`` is one of ``arr``, ``disp``, ``ret``, ``kret``. Fields that do
    not apply are ``None`` (or -1 for ``sm``).
    """

    n_sm: int
    max_warps_per_sm: int
    warp_size: int
    horizon: float = 0.0
    events: list = field(default_factory=list)
    requests: list = field(default_factory=list)
    decisions: list = field(default_factory=list)

    def lines(self):
        for t, kind, task, kernel, b0, b1, sm, thr in self.events:
            blocks = f"{b0}..{b1}" if b0 is not None else "-"
            kern = kernel if kernel is not None else "-"
            extra = f" threads={thr}" if thr else ""
            yield f"t={t:.9f} kind={kind} task={task} kernel={kern} blocks={blocks} sm={sm}{extra}"

    def export(self, path):
        with open(path, "w") as f:
            for line in self.lines():
                f.write(line + "\n")


def _runs(blocks):
    """Split a sorted list of block ids into contiguous (first, last) runs."""
    out = []
    first = prev = blocks[0]
    for b in blocks[1:]:
        if b != prev + 1:
            out.append((first, prev))
            first = b
        prev = b
    out.append((first, prev))
    return out


class Engine:
    def __init__(self, gpu: GpuSpec, model: ContentionModel, horizon: float, record: bool = True):
        self.gpu = gpu
        self.model = model
        self.horizon = horizon
        self.now = 0.0
        self.record = record
        self.mem_bandwidth = model.mem_bandwidth or gpu.mem_bandwidth
        self.trace = SimTrace(gpu.n_sm, gpu.max_warps_per_sm, gpu.warp_size, horizon)
        self._heap: list = []
        self._seq = 0
        self._launch_seq = 0
        self.lanes = {CRITICAL: deque(), NORMAL: deque()}

        n = gpu.n_sm
        self.free_threads = [gpu.l_threads] * n
        self.free_shmem = [gpu.shared_mem_per_sm] * n
        self.free_warps = [gpu.max_warps_per_sm] * n
        self.sm_threads = np.zeros(n, dtype=np.float64)

        cap = 64
        self._cap = cap
        self.active = np.zeros(cap, dtype=bool)
        self.g_sm = np.zeros(cap, dtype=np.int64)
        self.g_threads = np.zeros(cap)  # total threads of the group
        self.g_warps = np.zeros(cap, dtype=np.int64)
        self.g_demand = np.zeros(cap)  # total memory demand of the group
        self.g_ccoef = np.zeros(cap)
        self.g_mcoef = np.zeros(cap)
        self.g_progress = np.zeros(cap)
        self.g_rate = np.zeros(cap)
        self.g_launch: list = [None] * cap
        self.g_blocks: list = [None] * cap
        self._free_slots = list(range(cap - 1, -1, -1))
        self._dirty = True

        # occupancy integrals
        self.warp_time = 0.0
        self.active_sm_time = 0.0
        self.blocks_dispatched = 0
        self.blocks_retired = 0

    # -- scheduling -----------------------------------------------------
    def schedule(self, time: float, prio: int, fn, *args):
        self._seq += 1
        heapq.heappush(self._heap, (time, prio, self._seq, fn, args))

    def submit(self, launch: Launch, delay: float):
        """Enqueue ``launch``'s blocks into its dispatch lane after ``delay``."""
        self._launch_seq += 1
        launch.id = self._launch_seq
        launch.warps = self.gpu.warps(launch.threads)
        self.schedule(self.now + delay, DISPATCH, self._enqueue, launch)
        return launch

    def _enqueue(self, launch: Launch):
        if launch.cancelled:
            return
        self.lanes[launch.side].append(launch)
        if launch.on_enqueue is not None:
            launch.on_enqueue(launch)

    def log(self, kind, task, kernel=None, blocks=None, sm=-1, threads=0):
        if self.record:
            b0, b1 = blocks if blocks is not None else (None, None)
            self.trace.events.append((self.now, kind, task, kernel, b0, b1, sm, threads))

    # -- residency ------------------------------------------------------
    def _grow(self):
        old = self._cap
        cap = old * 2
        for name in ("active", "g_sm", "g_threads", "g_warps", "g_demand", "g_ccoef", "g_mcoef",
                     "g_progress", "g_rate"):
            arr = getattr(self, name)
            new = np.zeros(cap, dtype=arr.dtype)
            new[:old] = arr
            setattr(self, name, new)
        self.g_launch.extend([None] * old)
        self.g_blocks.extend([None] * old)
        self._free_slots.extend(range(cap - 1, old - 1, -1))
        self._cap = cap

    def _fits(self, sm: int, launch: Launch) -> bool:
        return (self.free_threads[sm] >= launch.threads and self.free_shmem[sm] >= launch.shmem
                and self.free_warps[sm] >= launch.warps)

    def _select_sm(self, launch: Launch) -> int:
        """Most free thread slots among SMs that fit, lowest index on ties; -1 if none."""
        best, best_free = -1, -1
        for sm, free in enumerate(self.free_threads):
            if free > best_free and self._fits(sm, launch):
                best, best_free = sm, free
        return best

    def _place_group(self, launch: Launch, sm: int, blocks: list):
        if not self._free_slots:
            self._grow()
        s = self._free_slots.pop()
        k = launch.kernel
        n = len(blocks)
        self.active[s] = True
        self.g_sm[s] = sm
        self.g_threads[s] = n * launch.threads
        self.g_warps[s] = n * launch.warps
        self.g_demand[s] = n * launch.threads * k.mem_intensity
        self.g_ccoef[s] = launch.work * (1.0 - k.mem_intensity) / self.model.sm_throughput
        self.g_mcoef[s] = launch.work / self.mem_bandwidth if k.mem_intensity > 0 else 0.0
        self.g_progress[s] = 0.0
        self.g_launch[s] = launch
        self.g_blocks[s] = blocks
        self.sm_threads[sm] += n * launch.threads
        self.blocks_dispatched += n
        self._dirty = True
        if self.record:
            for run in _runs(blocks):
                self.log("disp", launch.request.label, k.id, run, sm, launch.threads)

    def try_dispatch(self):
        """Strict FIFO: the critical lane drains before the normal lane, no bypass.

        Blocks of the head launch are placed one at a time on the SM chosen
        by :meth:`_select_sm`; a heap keyed on (-free threads, index) gives
        the same choice without rescanning every SM per block.
        """
        ft, fs, fw = self.free_threads, self.free_shmem, self.free_warps
        for lane in (self.lanes[CRITICAL], self.lanes[NORMAL]):
            while lane:
                L = lane[0]
                heap = [(-ft[sm], sm) for sm in range(len(ft)) if self._fits(sm, L)]
                heapq.heapify(heap)
                placed: dict[int, list] = {}
                while L.next < L.count and heap:
                    _, sm = heapq.heappop(heap)
                    ft[sm] -= L.threads
                    fs[sm] -= L.shmem
                    fw[sm] -= L.warps
                    placed.setdefault(sm, []).append(L.start + L.next)
                    L.next += 1
                    if self._fits(sm, L):
                        heapq.heappush(heap, (-ft[sm], sm))
                for sm, blocks in placed.items():
                    self._place_group(L, sm, blocks)
                if L.next < L.count:
                    return
                lane.popleft()

    def _rates(self):
        idx = np.flatnonzero(self.active)
        if idx.size:
            sm = self.g_sm[idx]
            per_sm = np.bincount(sm, weights=self.g_threads[idx], minlength=self.gpu.n_sm)
            demand = self.g_demand[idx].sum()
            dur = np.maximum(self.g_ccoef[idx] * per_sm[sm], self.g_mcoef[idx] * demand)
            self.g_rate[idx] = 1.0 / dur
        self._idx = idx
        self._dirty = False

    def _next_retire(self) -> float:
        if self._dirty:
            self._rates()
        idx = self._idx
        if not idx.size:
            return math.inf
        rem = (1.0 - self.g_progress[idx]) / self.g_rate[idx]
        return self.now + float(rem.min())

    def _advance(self, t: float):
        dt = t - self.now
        if dt > 0:
            idx = self._idx
            if idx.size:
                self.g_progress[idx] += dt * self.g_rate[idx]
                self.warp_time += dt * float(self.g_warps[idx].sum())
                self.active_sm_time += dt * int(np.count_nonzero(self.sm_threads))
            self.now = t

    def _retire_due(self):
        idx = self._idx
        due = idx[self.g_progress[idx] >= 1.0 - PROGRESS_EPS]
        if not due.size:
            # rounding left the earliest group a hair short of 1.0
            due = idx[[int(np.argmax(self.g_progress[idx]))]]
        order = sorted(due.tolist(), key=lambda s: (self.g_launch[s].id, self.g_blocks[s][0]))
        finished = []
        for s in order:
            L = self.g_launch[s]
            blocks = self.g_blocks[s]
            sm = int(self.g_sm[s])
            n = len(blocks)
            self.active[s] = False
            self.free_threads[sm] += n * L.threads
            self.free_shmem[sm] += n * L.shmem
            self.free_warps[sm] += n * L.warps
            self.sm_threads[sm] -= n * L.threads
            self.g_launch[s] = None
            self.g_blocks[s] = None
            self._free_slots.append(s)
            self.blocks_retired += n
            if self.record:
                for run in _runs(blocks):
                    self.log("ret", L.request.label, L.kernel.id, run, sm, L.threads)
            L.remaining -= n
            if L.remaining == 0:
                finished.append(L)
        self._dirty = True
        for L in finished:
            self.log("kret", L.request.label, L.kernel.id, (L.start, L.start + L.count - 1))
            if L.on_done is not None:
                L.on_done(L)

    def run(self):
        heap = self._heap
        while True:
            t_ret = self._next_retire()
            t_evt = heap[0][0] if heap else math.inf
            t = min(t_ret, t_evt)
            if t > self.horizon:
                self._advance(self.horizon)
                break
            self._advance(t)
            if t_ret <= t_evt:
                self._retire_due()
            else:
                _, _, _, fn, args = heapq.heappop(heap)
                fn(*args)
            self.try_dispatch()
        self.now = self.horizon

    @property
    def occupancy(self) -> float:
        if self.active_sm_time <= 0:
            return 0.0
        return self.warp_time / (self.active_sm_time * self.gpu.max_warps_per_sm)
