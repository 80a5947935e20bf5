"""Modeled GPU architecture and SM residency bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field, replace


class NoCapacity(Exception):
    """Raised by :func:`select_sm` when no SM can host the block.

    This is a normal scheduling signal (the block waits in the FIFO
    dispatch queue), not a fault.
    """


@dataclass(frozen=True)
class GpuSpec:
    name: str
    n_sm: int
    l_threads: int
    warp_size: int = 32
    max_warps_per_sm: int = 32
    shared_mem_per_sm: int = 65536
    # memory-work units per second, shared by all SMs
    mem_bandwidth: float = 1.0e10

    def __post_init__(self):
        for fname in ("n_sm", "l_threads", "warp_size", "max_warps_per_sm",
                      "shared_mem_per_sm", "mem_bandwidth"):
            if not getattr(self, fname) > 0:
                raise ValueError(f"GpuSpec.{fname} must be positive")
        if self.l_threads % self.warp_size:
            raise ValueError("l_threads must be a multiple of warp_size")

    def warps(self, threads: int) -> int:
        return -(-threads // self.warp_size)


PRESETS: dict[str, GpuSpec] = {
    # Turing TU106: 34 SMs, 1024 threads / 32 warps per SM
    "rtx2060-like": GpuSpec("rtx2060-like", n_sm=34, l_threads=1024, warp_size=32,
                            max_warps_per_sm=32, shared_mem_per_sm=65536,
                            mem_bandwidth=1.0e10),
    # Xavier-class: 8 SMs; thread/warp limits are conventional assumptions and
    # bandwidth is scaled from the rtx preset by 137/336 GB/s
    "xavier-like": GpuSpec("xavier-like", n_sm=8, l_threads=2048, warp_size=32,
                           max_warps_per_sm=64, shared_mem_per_sm=98304,
                           mem_bandwidth=4.0e9),
}


def get_preset(name: str) -> GpuSpec:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown GPU preset {name!r}; known: {', '.join(sorted(PRESETS))}") from None


@dataclass
class SmState:
    """Residency of one SM.

    ``resident_blocks`` holds ``(kernel_id, block_id, threads, shmem)`` tuples.
    The free counters are kept in sync with the residency list by
    :meth:`add` / :meth:`remove`; :meth:`check` recomputes them from scratch.
    """

    l_threads: int
    shared_mem: int
    max_warps: int = 1 << 30
    warp_size: int = 32
    resident_blocks: list = field(default_factory=list)
    free_threads: int = -1
    free_shared_mem: int = -1
    free_warps: int = -1

    def __post_init__(self):
        if self.free_threads < 0:
            self.free_threads = self.l_threads - sum(b[2] for b in self.resident_blocks)
        if self.free_shared_mem < 0:
            self.free_shared_mem = self.shared_mem - sum(b[3] for b in self.resident_blocks)
        if self.free_warps < 0:
            self.free_warps = self.max_warps - sum(self._w(b[2]) for b in self.resident_blocks)

    @classmethod
    def empty(cls, gpu: GpuSpec) -> "SmState":
        return cls(gpu.l_threads, gpu.shared_mem_per_sm, gpu.max_warps_per_sm, gpu.warp_size)

    def _w(self, threads):
        return -(-threads // self.warp_size)

    @property
    def resident_threads(self) -> int:
        return self.l_threads - self.free_threads

    def add(self, kernel_id, block_id, threads: int, shmem: int = 0):
        if threads > self.free_threads or shmem > self.free_shared_mem \
                or self._w(threads) > self.free_warps:
            raise ValueError("block does not fit on this SM")
        self.resident_blocks.append((kernel_id, block_id, threads, shmem))
        self.free_threads -= threads
        self.free_shared_mem -= shmem
        self.free_warps -= self._w(threads)

    def remove(self, kernel_id, block_id):
        for i, b in enumerate(self.resident_blocks):
            if b[0] == kernel_id and b[1] == block_id:
                del self.resident_blocks[i]
                self.free_threads += b[2]
                self.free_shared_mem += b[3]
                self.free_warps += self._w(b[2])
                return
        raise KeyError((kernel_id, block_id))

    def check(self):
        threads = sum(b[2] for b in self.resident_blocks)
        shmem = sum(b[3] for b in self.resident_blocks)
        assert threads <= self.l_threads, "thread slots oversubscribed"
        assert shmem <= self.shared_mem, "shared memory oversubscribed"
        assert self.free_threads == self.l_threads - threads
        assert self.free_shared_mem == self.shared_mem - shmem
        assert self.free_warps == self.max_warps - sum(self._w(b[2]) for b in self.resident_blocks)


def can_accommodate(sm: SmState, threads: int, shmem: int, gpu: GpuSpec | None = None) -> bool:
    """True iff ``sm`` has enough free thread slots and shared memory for the block.

    Warp slots are enforced as an independent cap; with the shipped presets
    ``max_warps_per_sm * warp_size == l_threads`` so it never binds first.
    """
    if threads < 1:
        raise ValueError("threads must be >= 1")
    if gpu is not None:
        warps_needed = gpu.warps(threads)
    else:
        warps_needed = -(-threads // sm.warp_size)
    return (sm.free_threads >= threads and sm.free_shared_mem >= shmem
            and sm.free_warps >= warps_needed)


def select_sm(sms: list[SmState], threads: int, shmem: int, gpu: GpuSpec | None = None) -> int:
    """Index of the accommodating SM with the most free threads.

    Ties go to the lowest index. Raises :class:`NoCapacity` if nothing fits.
    """
    best = -1
    best_free = -1
    for i, sm in enumerate(sms):
        if sm.free_threads > best_free and can_accommodate(sm, threads, shmem, gpu):
            best, best_free = i, sm.free_threads
    if best < 0:
        raise NoCapacity(threads)
    return best


def with_overrides(gpu: GpuSpec, **kw) -> GpuSpec:
    return replace(gpu, **{k: v for k, v in kw.items() if v is not None})
