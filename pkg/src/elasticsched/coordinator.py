"""Runtime coordination of elastic normal-kernel shards.

Each queued normal kernel owns a shaded binary tree over its ``M`` logical
blocks. Leaves of the current cut are either *virtual* (potential shards not
yet chosen) or *actual* shards that have been selected, launched
(*dispatched*) or finished (*retired*). The "shade" of a node is the elastic
block size it was launched with.

The coordinator is greedy: while a critical kernel is resident it carves
the largest admissible shards off the head of the tree that still fit the
critical kernel's leftover SMs and thread slots; when the GPU is free of
critical work it launches whatever remains at the original block size.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .gpu import GpuSpec
from .planner import CriticalProfile, block_bounds, rank_key, slicing_plan
from .workload import KernelSpec

VIRTUAL = "virtual"
ACTUAL = "actual"
DISPATCHED = "dispatched"
RETIRED = "retired"
SPLIT = "split"  # internal node: its range is described by its children

EVENT_KINDS = ("critical_arrival", "critical_retire", "shard_retire", "normal_arrival")


class ShardNode:
    __slots__ = ("start", "count", "level", "status", "block_size", "children", "parent")

    def __init__(self, start, count, level=0, parent=None):
        self.start = start
        self.count = count
        self.level = level
        self.status = VIRTUAL
        self.block_size = None
        self.children = None
        self.parent = parent

    @property
    def end(self):
        return self.start + self.count

    def __repr__(self):
        shade = f" shade={self.block_size}" if self.block_size else ""
        return f"<shard [{self.start},{self.end}) {self.status}{shade}>"


class ShadedBinaryTree:
    def __init__(self, kernel: KernelSpec, candidates):
        M = kernel.grid_size
        if M < 1:
            raise ValueError("kernel grid must be >= 1")
        candidates = list(candidates)
        if not candidates:
            raise ValueError("candidate list must be non-empty")
        plan = set(slicing_plan(M))
        self.kernel = kernel
        self.M = M
        self.candidates = sorted(candidates, key=rank_key)
        self.admissible = sorted({c.shard_grid_size for c in self.candidates
                                  if c.shard_grid_size in plan})
        self.leaf_size = self.admissible[0] if self.admissible else M
        self.root = ShardNode(0, M)

    @property
    def depth(self) -> int:
        """Number of levels a fully split tree would have."""
        return (self.M // self.leaf_size).bit_length()

    def leaves(self):
        stack = [self.root]
        while stack:
            n = stack.pop()
            if n.children:
                stack.append(n.children[1])
                stack.append(n.children[0])
            else:
                yield n

    def frontier(self) -> list[ShardNode]:
        return [n for n in self.leaves() if n.status == VIRTUAL]

    def head(self) -> ShardNode | None:
        for n in self.leaves():
            if n.status == VIRTUAL:
                return n
        return None

    @property
    def done(self) -> bool:
        return all(n.status == RETIRED for n in self.leaves())

    def _split(self, node: ShardNode):
        half = node.count // 2
        node.children = (ShardNode(node.start, half, node.level + 1, node),
                         ShardNode(node.start + half, half, node.level + 1, node))
        node.status = SPLIT

    def take(self, size: int, block_size: int) -> ShardNode:
        """Carve a ``size``-block shard off the head of the frontier and make it actual."""
        node = self.head()
        if node is None:
            raise ValueError("frontier is empty")
        if size not in self.admissible and size != self.M:
            raise ValueError(f"shard size {size} is not admissible for this kernel")
        if size > node.count or node.count % size:
            raise ValueError(f"cannot carve {size} blocks from {node}")
        while node.count > size:
            self._split(node)
            node = node.children[0]
        node.status = ACTUAL
        node.block_size = block_size
        return node

    def take_whole(self, node: ShardNode, block_size: int) -> ShardNode:
        if node.status != VIRTUAL or node.children:
            raise ValueError(f"{node} is not a frontier node")
        node.status = ACTUAL
        node.block_size = block_size
        return node

    def mark_dispatched(self, node: ShardNode):
        if node.status != ACTUAL:
            raise ValueError(f"{node} is not actual")
        node.status = DISPATCHED

    def mark_retired(self, node: ShardNode):
        if node.status != DISPATCHED:
            raise ValueError(f"{node} is not dispatched")
        node.status = RETIRED

    def revert(self, node: ShardNode):
        if node.status != ACTUAL:
            raise ValueError(f"{node} is not pending")
        node.status = VIRTUAL
        node.block_size = None

    def merge(self) -> int:
        """Collapse sibling pairs that are both virtual leaves; returns merges done."""
        merged = 0
        changed = True
        while changed:
            changed = False
            stack = [self.root]
            while stack:
                n = stack.pop()
                if not n.children:
                    continue
                a, b = n.children
                if not a.children and not b.children and a.status == VIRTUAL and b.status == VIRTUAL:
                    n.children = None
                    n.status = VIRTUAL
                    n.block_size = None
                    merged += 1
                    changed = True
                else:
                    stack.extend((a, b))
        return merged

    def check(self):
        """Assert the partition and depth invariants; returns status counts by block."""
        pos = 0
        counts = {VIRTUAL: 0, ACTUAL: 0, DISPATCHED: 0, RETIRED: 0}
        max_level = (self.M & -self.M).bit_length() - 1
        for n in self.leaves():
            assert n.start == pos, f"gap or overlap at {n}"
            assert n.count >= 1
            assert n.status in counts, f"leaf with status {n.status}"
            assert n.level <= max_level, "sharding deeper than the slicing plan allows"
            counts[n.status] += n.count
            pos = n.end
        assert pos == self.M, "leaves do not cover the kernel"
        return counts


@dataclass
class KernelJob:
    key: object
    kernel: KernelSpec
    tree: ShadedBinaryTree

    @property
    def candidates(self):
        return self.tree.candidates


@dataclass(frozen=True)
class ShardDispatch:
    job: KernelJob
    node: ShardNode
    start: int
    count: int
    block_size: int


@dataclass
class Event:
    kind: str
    time: float = 0.0
    profile: CriticalProfile | tuple | None = None
    shard: ShardDispatch | None = None
    job: tuple | None = None  # (key, kernel, candidates) for normal_arrival


@dataclass
class Decision:
    dispatch: list = field(default_factory=list)
    cancel: list = field(default_factory=list)
    completed: list = field(default_factory=list)


def build_tree(kernel: KernelSpec, candidates) -> ShadedBinaryTree:
    return ShadedBinaryTree(kernel, candidates)


class Coordinator:
    """Single-owner state machine; feed it events, act on the returned decisions."""

    def __init__(self, gpu: GpuSpec, log: bool = False):
        self.gpu = gpu
        self.queue: deque[KernelJob] = deque()
        self.critical: CriticalProfile | None = None
        self.inflight = 0  # blocks in actual or dispatched shards
        self.pending: list[ShardDispatch] = []
        self.log_enabled = log
        self.log: list[str] = []

    # -- helpers
    def _options(self, job: KernelJob, max_threads: int) -> dict[int, int]:
        """Best-ranked elastic block size per admissible shard size under a thread cap."""
        best: dict[int, int] = {}
        for sc in job.tree.candidates:
            g, b = sc.candidate.shard_grid_size, sc.candidate.elastic_block_size
            if g in job.tree.admissible and b <= max_threads and g not in best:
                best[g] = b
        return best

    def bounds(self, critical) -> tuple[int, int] | None:
        """Co-location bounds against one profile or the tightest of several."""
        if critical is None:
            return None
        profiles = [critical] if isinstance(critical, CriticalProfile) else list(critical)
        if not profiles:
            return None
        pairs = [block_bounds(p, self.gpu) for p in profiles]
        return min(b for b, _ in pairs), min(t for _, t in pairs)

    def budget(self, critical) -> tuple[int, int] | None:
        b = self.bounds(critical)
        if b is None:
            return None
        return b[0] - self.inflight, b[1]

    # -- core policy
    def select_shards(self, critical=None) -> list[ShardDispatch]:
        """Greedy shard choice for the head kernel.

        ``critical`` is the resident critical profile, a sequence of profiles
        that must all be respected (resident kernel plus the one queued
        behind it), or None when no critical work is on the GPU.
        """
        if not self.queue:
            return []
        job = self.queue[0]
        tree = job.tree
        out = []
        if self.bounds(critical) is None:
            # nothing to protect: launch the rest of the kernel at its original width
            for node in tree.frontier():
                tree.take_whole(node, job.kernel.block_size)
                out.append(ShardDispatch(job, node, node.start, node.count, node.block_size))
                self.inflight += node.count
        else:
            budget, max_threads = self.budget(critical)
            options = self._options(job, max_threads)
            sizes = sorted(options, reverse=True)
            while budget > 0:
                head = tree.head()
                if head is None:
                    break
                size = next((s for s in sizes if s <= budget and s <= head.count), None)
                if size is None:
                    break
                node = tree.take(size, options[size])
                out.append(ShardDispatch(job, node, node.start, node.count, node.block_size))
                self.inflight += size
                budget -= size
        self.pending.extend(out)
        return out

    def on_event(self, ev: Event) -> Decision:
        if ev.kind not in EVENT_KINDS:
            raise ValueError(f"unknown coordinator event {ev.kind!r}")
        d = Decision()
        if ev.kind == "normal_arrival":
            key, kernel, candidates = ev.job
            self.queue.append(KernelJob(key, kernel, build_tree(kernel, candidates)))
        elif ev.kind == "critical_arrival":
            self.critical = ev.profile
            # pending (selected, not yet launched) shards are re-planned
            for sd in self.pending:
                sd.job.tree.revert(sd.node)
                self.inflight -= sd.count
                d.cancel.append(sd)
            self.pending = []
            for job in self.queue:
                job.tree.merge()
        elif ev.kind == "critical_retire":
            self.critical = ev.profile
            for job in self.queue:
                job.tree.merge()
        elif ev.kind == "shard_retire":
            sd = ev.shard
            sd.job.tree.mark_retired(sd.node)
            self.inflight -= sd.count
            if self.queue and self.queue[0] is sd.job and sd.job.tree.done:
                self.queue.popleft()
                d.completed.append(sd.job.key)
        d.dispatch = self.select_shards(self.critical)
        if self.log_enabled:
            shards = ",".join(f"({s.start},{s.count},{s.block_size})" for s in d.dispatch)
            self.log.append(f"t={ev.time:.9f} event={ev.kind} dispatched=[{shards}]")
        return d

    def launched(self, sd: ShardDispatch):
        """The shard's launch reached the GPU; it can no longer be re-planned."""
        self.pending.remove(sd)
        sd.job.tree.mark_dispatched(sd.node)

    def check(self):
        for job in self.queue:
            job.tree.check()
        live = sum(n.count for job in self.queue for n in job.tree.leaves()
                   if n.status in (ACTUAL, DISPATCHED))
        assert live == self.inflight, (live, self.inflight)
