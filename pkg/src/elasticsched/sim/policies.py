"""Scheduling policies driving the engine: who launches which kernel when."""

from __future__ import annotations

from collections import deque

from ..coordinator import Coordinator, Event
from ..planner import CriticalProfile, OverheadParams, shrink_design_space
from ..workload import KernelSpec, Workload
from .engine import ARRIVAL, CRITICAL, DISPATCH, NORMAL, Engine, Launch, RequestRecord

POLICIES = ("sequential", "multistream", "ib", "elastic")


class ConfigError(ValueError):
    """Raised before simulation starts for inconsistent policy inputs."""


class Driver:
    name = "base"

    def __init__(self, eng: Engine, workload: Workload, seed: int):
        self.eng = eng
        self.wl = workload
        self.tasks = {CRITICAL: workload.critical, NORMAL: workload.normal}
        self.pending = {CRITICAL: deque(), NORMAL: deque()}
        self.closed = {}
        self.requests: list[RequestRecord] = []
        self.seed = seed

    # -- request lifecycle
    def start(self):
        wl = self.wl
        for side in (CRITICAL, NORMAL):
            times, closed = wl.arrivals(side)
            self.closed[side] = closed
            if closed:
                times = [0.0]
            for t in times:
                self.eng.schedule(t, ARRIVAL, self._arrive, side)

    def _arrive(self, side):
        task = self.tasks[side]
        rec = RequestRecord(len(self.requests), task.name, side, self.eng.now)
        self.requests.append(rec)
        self.eng.log("arr", rec.label)
        self.pending[side].append(rec)
        self.on_arrival(side)

    def begin(self, side) -> RequestRecord:
        rec = self.pending[side].popleft()
        rec.start = self.eng.now
        return rec

    def complete(self, rec: RequestRecord):
        rec.completion = self.eng.now
        if self.closed[rec.criticality]:
            self.eng.schedule(self.eng.now, ARRIVAL, self._arrive, rec.criticality)

    def will_continue(self, side) -> bool:
        """Whether another request of ``side`` starts right after the current one."""
        return bool(self.pending[side]) or self.closed[side]

    def launch_kernel(self, rec, kernel: KernelSpec, side, on_done, delay=None):
        L = Launch(rec, kernel, side, 0, kernel.grid_size, kernel.block_size,
                   kernel.work_per_thread, on_done=on_done)
        return self.eng.submit(L, self.eng.model.launch_overhead if delay is None else delay)

    def on_arrival(self, side):
        raise NotImplementedError


class StreamRunner:
    """Runs one side's requests back to back, kernels in stream order."""

    def __init__(self, drv: Driver, side):
        self.drv = drv
        self.side = side
        self.current: RequestRecord | None = None
        self.k = 0

    @property
    def kernels(self):
        return self.drv.tasks[self.side].kernels

    def poke(self):
        if self.current is None and self.drv.pending[self.side]:
            self.current = self.drv.begin(self.side)
            self.k = 0
            self.issue()

    def issue(self):
        self.drv.launch_kernel(self.current, self.kernels[self.k], self.side, self.kernel_done)

    def kernel_done(self, _launch):
        self.k += 1
        if self.k < len(self.kernels):
            self.issue()
            return
        rec, self.current = self.current, None
        self.drv.complete(rec)
        self.poke()


class Sequential(Driver):
    """Exclusive GPU per request; the two queues are served round-robin."""

    name = "sequential"

    def __init__(self, *a):
        super().__init__(*a)
        self.busy = False
        self.last = NORMAL
        self.k = 0
        self.current = None

    def on_arrival(self, side):
        if not self.busy:
            self._next()

    def _next(self):
        other = NORMAL if self.last == CRITICAL else CRITICAL
        for side in (other, self.last):
            if self.pending[side]:
                self.busy = True
                self.last = side
                self.current = self.begin(side)
                self.k = 0
                self._issue()
                return

    def _issue(self):
        kernels = self.tasks[self.last].kernels
        self.launch_kernel(self.current, kernels[self.k], self.last, self._done)

    def _done(self, _launch):
        self.k += 1
        if self.k < len(self.tasks[self.last].kernels):
            self._issue()
            return
        rec, self.current = self.current, None
        self.busy = False
        self.complete(rec)
        self._next()


class MultiStream(Driver):
    """One stream per side; critical blocks sit ahead of normal ones in the dispatch queue."""

    name = "multistream"

    def __init__(self, *a):
        super().__init__(*a)
        self.streams = {side: StreamRunner(self, side) for side in (CRITICAL, NORMAL)}

    def on_arrival(self, side):
        self.streams[side].poke()


class InterStreamBarrier(Driver):
    """Multi-stream execution cut into phases separated by device-wide barriers.

    A phase holds the next critical kernel plus up to ``ib_group_size``
    normal kernels (run in stream order); the next phase starts only after
    every kernel of the current one has retired and the barrier has elapsed.
    A phase with work from one stream only needs no cross-stream barrier.
    """

    name = "ib"

    def __init__(self, *a):
        super().__init__(*a)
        self.group = self.eng.model.ib_group_size
        self.in_phase = False
        self.cur = {CRITICAL: None, NORMAL: None}
        self.k = {CRITICAL: 0, NORMAL: 0}
        self.outstanding = 0

    def on_arrival(self, side):
        if not self.in_phase:
            self._phase()

    def _take(self, side) -> bool:
        if self.cur[side] is None and self.pending[side]:
            self.cur[side] = self.begin(side)
            self.k[side] = 0
        return self.cur[side] is not None

    def _phase(self):
        have_c = self._take(CRITICAL)
        have_n = self._take(NORMAL)
        if not (have_c or have_n):
            return
        self.in_phase = True
        self.mixed = have_c and have_n
        self.outstanding = 0
        if have_c:
            self.outstanding += 1
            self._launch(CRITICAL)
        if have_n:
            left = len(self.tasks[NORMAL].kernels) - self.k[NORMAL]
            self.normal_budget = min(self.group, left)
            self.outstanding += self.normal_budget
            self._launch(NORMAL)

    def _launch(self, side):
        rec = self.cur[side]
        kernel = self.tasks[side].kernels[self.k[side]]
        self.launch_kernel(rec, kernel, side, lambda L, s=side: self._done(s))

    def _done(self, side):
        self.k[side] += 1
        self.outstanding -= 1
        if self.k[side] == len(self.tasks[side].kernels):
            rec, self.cur[side] = self.cur[side], None
            self.complete(rec)
        elif side == NORMAL:
            self.normal_budget -= 1
            if self.normal_budget > 0:
                self._launch(NORMAL)
        if self.outstanding == 0:
            delay = self.eng.model.barrier_overhead if self.mixed else 0.0
            self.eng.schedule(self.eng.now + delay, DISPATCH, self._barrier)

    def _barrier(self):
        self.in_phase = False
        self._phase()


def candidate_sets(workload: Workload, gpu, model) -> dict:
    """Shrunk elastic candidates for every normal kernel against the critical task's kernels."""
    profiles = [CriticalProfile.of(k) for k in workload.critical.kernels]
    ov = OverheadParams(launch_overhead_per_shard=model.launch_overhead,
                        baseline_launch=model.launch_overhead)
    out = {}
    for k in workload.normal.kernels:
        if k.id not in out:
            out[k.id] = shrink_design_space(k, profiles, gpu, ov)
    return out


class Elastic(Driver):
    """Critical stream as usual; the normal side is fed as elastic shards by the coordinator."""

    name = "elastic"

    def __init__(self, eng, workload, seed, candidates=None, log=False):
        super().__init__(eng, workload, seed)
        self.crit = StreamRunner(self, CRITICAL)
        self.crit.issue = self._crit_issue
        self.coord = Coordinator(eng.gpu, log=log)
        self.candidates = candidates if candidates is not None else candidate_sets(workload, eng.gpu, eng.model)
        missing = [k.id for k in workload.normal.kernels if not self.candidates.get(k.id)]
        if missing:
            raise ConfigError(f"no elastic candidates for normal kernels: {', '.join(missing)}")
        self.normal: RequestRecord | None = None
        self.nk = 0
        self.launches: dict[int, Launch] = {}
        self.host_free = 0.0

    def on_arrival(self, side):
        if side == CRITICAL:
            self.crit.poke()
        else:
            self._normal_poke()

    # -- critical side
    def _window(self, k: int):
        """Profiles the normal side must respect: kernel ``k`` and the one after it."""
        kernels = self.crit.kernels
        window = [CriticalProfile.of(kernels[k])]
        if k + 1 < len(kernels):
            window.append(CriticalProfile.of(kernels[k + 1]))
        elif self.will_continue(CRITICAL):
            window.append(CriticalProfile.of(kernels[0]))
        return tuple(window)

    def _crit_issue(self):
        kernel = self.crit.kernels[self.crit.k]
        self.launch_kernel(self.crit.current, kernel, CRITICAL, self._crit_done)
        self._feed(Event("critical_arrival", self.eng.now, profile=self._window(self.crit.k)))

    def _crit_done(self, launch):
        k = self.crit.k + 1
        if k < len(self.crit.kernels):
            nxt = self._window(k)
        elif self.will_continue(CRITICAL):
            nxt = self._window(0)
        else:
            nxt = None
        self._feed(Event("critical_retire", self.eng.now, profile=nxt))
        StreamRunner.kernel_done(self.crit, launch)

    # -- normal side
    def _normal_poke(self):
        if self.normal is None and self.pending[NORMAL]:
            self.normal = self.begin(NORMAL)
            self.nk = 0
            self._normal_issue()

    def _normal_issue(self):
        k = self.tasks[NORMAL].kernels[self.nk]
        key = (self.normal.id, self.nk)
        self._feed(Event("normal_arrival", self.eng.now, job=(key, k, self.candidates[k.id])))

    def _feed(self, ev: Event):
        d = self.coord.on_event(ev)
        for sd in d.cancel:
            L = self.launches.pop(id(sd))
            L.cancelled = True
        m = self.eng.model
        now = self.eng.now
        # a bin-packing decision costs host time; the plain pass-through with no
        # critical work to protect is folded into the launch itself
        packing = ev.kind.startswith("critical") or self.coord.critical is not None
        t = max(now + (m.coordinator_overhead if packing else 0.0), self.host_free) if d.dispatch else now
        for sd in d.dispatch:
            t += m.launch_overhead
            k = sd.job.kernel
            per_thread = k.work_per_thread * k.block_size / sd.block_size
            trips = -(-k.block_size // sd.block_size)
            per_thread *= 1.0 + m.pt_overhead * (trips - 1)
            L = Launch(self.normal, k, NORMAL, sd.start, sd.count, sd.block_size, per_thread,
                       on_done=self._shard_done, on_enqueue=self._shard_enqueued, payload=sd)
            self.launches[id(sd)] = L
            self.eng.submit(L, t - now)
        if d.dispatch:
            self.host_free = t
        for key in d.completed:
            self._normal_kernel_done(key)

    def _shard_enqueued(self, L):
        self.launches.pop(id(L.payload), None)
        self.coord.launched(L.payload)

    def _shard_done(self, L):
        self._feed(Event("shard_retire", self.eng.now, shard=L.payload))

    def _normal_kernel_done(self, key):
        self.nk += 1
        if self.nk < len(self.tasks[NORMAL].kernels):
            self._normal_issue()
            return
        rec, self.normal = self.normal, None
        self.complete(rec)
        self._normal_poke()


DRIVERS = {cls.name: cls for cls in (Sequential, MultiStream, InterStreamBarrier, Elastic)}
