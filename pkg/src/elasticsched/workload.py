"""Kernels, tasks, arrival processes, MDTB workloads and trace ingestion."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

import numpy as np


class Criticality(str, Enum):
    CRITICAL = "critical"
    NORMAL = "normal"


@dataclass(frozen=True)
class KernelSpec:
    id: str
    grid_size: int
    block_size: int
    work_per_thread: float
    mem_intensity: float = 0.0
    shmem_per_block: int = 0

    def __post_init__(self):
        if self.grid_size < 1:
            raise ValueError(f"kernel {self.id}: grid_size must be >= 1")
        if self.block_size < 1:
            raise ValueError(f"kernel {self.id}: block_size must be >= 1")
        if not 0.0 <= self.mem_intensity <= 1.0:
            raise ValueError(f"kernel {self.id}: mem_intensity must lie in [0, 1]")
        if self.work_per_thread <= 0:
            raise ValueError(f"kernel {self.id}: work_per_thread must be positive")

    @property
    def M(self) -> int:
        return self.grid_size

    def scaled(self, grid_factor: int) -> "KernelSpec":
        return KernelSpec(self.id, self.grid_size * grid_factor, self.block_size,
                          self.work_per_thread, self.mem_intensity, self.shmem_per_block)


@dataclass(frozen=True)
class TaskSpec:
    name: str
    kernels: tuple[KernelSpec, ...]
    criticality: Criticality

    def __post_init__(self):
        if not self.kernels:
            raise ValueError(f"task {self.name}: kernel sequence must be non-empty")
        object.__setattr__(self, "criticality", Criticality(self.criticality))

    @property
    def critical(self) -> bool:
        return self.criticality is Criticality.CRITICAL


@dataclass(frozen=True)
class ArrivalPattern:
    kind: str
    rate: float | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "poisson", "closed_loop"):
            raise ValueError(f"unknown arrival pattern {self.kind!r}")
        if self.kind == "closed_loop":
            if self.rate is not None:
                raise ValueError("closed_loop pattern takes no rate")
        elif self.rate is None or not self.rate > 0:
            raise ValueError(f"{self.kind} pattern needs rate > 0, got {self.rate}")

    @property
    def closed_loop(self) -> bool:
        return self.kind == "closed_loop"

    def describe(self) -> str:
        return "closed-loop" if self.closed_loop else f"{self.kind}({self.rate:g}/s)"


@dataclass(frozen=True)
class Workload:
    name: str
    critical: TaskSpec
    critical_pattern: ArrivalPattern
    normal: TaskSpec
    normal_pattern: ArrivalPattern
    duration: float = 10.0
    seed: int = 0
    # explicit timestamps (trace workloads) override the patterns
    critical_arrivals: tuple[float, ...] | None = None
    normal_arrivals: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("workload duration must be positive")

    def arrivals(self, criticality) -> tuple[list[float], bool]:
        """Arrival times for one side plus a closed-loop flag."""
        crit = Criticality(criticality) is Criticality.CRITICAL
        explicit = self.critical_arrivals if crit else self.normal_arrivals
        if explicit is not None:
            return [t for t in explicit if t < self.duration], False
        pattern = self.critical_pattern if crit else self.normal_pattern
        # distinct streams per side so one side's draws never shift the other
        seed = self.seed * 2 + (0 if crit else 1)
        return generate_arrivals(pattern, self.duration, seed), pattern.closed_loop


def generate_arrivals(pattern: ArrivalPattern, duration: float, seed: int = 0) -> list[float]:
    """Arrival timestamps in ``[0, duration)``.

    Closed-loop patterns return an empty list; the simulator re-issues those
    requests on completion.
    """
    if pattern.closed_loop:
        return []
    rate = pattern.rate
    if rate is None or rate <= 0:
        raise ValueError("rate must be positive")
    if pattern.kind == "uniform":
        n = math.floor(duration * rate * (1 + 1e-12))
        return [k / rate for k in range(n)]
    rng = np.random.default_rng(seed)
    out: list[float] = []
    t = 0.0
    chunk = max(16, int(duration * rate * 1.2) + 16)
    while True:
        for gap in rng.exponential(1.0 / rate, size=chunk):
            t += float(gap)
            if t >= duration:
                return out
            out.append(t)


# -- kernel profiles ---------------------------------------------------------

PROFILE_FIELDS = ("grid", "block", "work", "mem_intensity", "shmem")


class ProfileError(ValueError):
    pass


def parse_profile(text: str, name: str = "profile") -> tuple[KernelSpec, ...]:
    """Parse a kernel-sequence profile: one ``[kernel-id]`` section per kernel."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), strict=True)
    try:
        cp.read_string(text, source=name)
    except configparser.Error as exc:
        raise ProfileError(f"{name}: {exc}") from exc
    kernels = []
    for sec in cp.sections():
        s = cp[sec]
        unknown = set(s) - set(PROFILE_FIELDS)
        if unknown:
            raise ProfileError(f"{name}: [{sec}] unknown keys {sorted(unknown)}")
        try:
            kernels.append(KernelSpec(
                id=sec,
                grid_size=s.getint("grid"),
                block_size=s.getint("block"),
                work_per_thread=s.getfloat("work"),
                mem_intensity=s.getfloat("mem_intensity", 0.0),
                shmem_per_block=s.getint("shmem", 0),
            ))
        except (TypeError, ValueError) as exc:
            raise ProfileError(f"{name}: [{sec}] {exc}") from exc
    if not kernels:
        raise ProfileError(f"{name}: no kernels defined")
    return tuple(kernels)


def load_profile(path_or_name: str | Path) -> tuple[KernelSpec, ...]:
    """Load a profile by file path or by shipped model name (e.g. ``alexnet-like``)."""
    p = Path(path_or_name)
    if p.suffix == ".prof" or p.exists():
        return parse_profile(p.read_text(), str(p))
    name = str(path_or_name)
    res = resources.files("elasticsched") / "profiles" / f"{name}.prof"
    if not res.is_file():
        raise ProfileError(f"no such profile: {name}")
    return parse_profile(res.read_text(), name)


def shipped_models() -> list[str]:
    d = resources.files("elasticsched") / "profiles"
    return sorted(f.name[:-5] for f in d.iterdir() if f.name.endswith(".prof"))


def make_task(model: str, criticality, grid_factor: int = 1) -> TaskSpec:
    kernels = load_profile(model)
    if grid_factor != 1:
        kernels = tuple(k.scaled(grid_factor) for k in kernels)
    return TaskSpec(model, kernels, Criticality(criticality))


# -- MDTB --------------------------------------------------------------------

MDTB_TABLE = {
    "A": ("alexnet-like", ArrivalPattern("closed_loop"), "cifarnet-like"),
    "B": ("squeezenet-like", ArrivalPattern("uniform", 10.0), "alexnet-like"),
    "C": ("gru-like", ArrivalPattern("poisson", 10.0), "resnet-like"),
    "D": ("lstm-like", ArrivalPattern("uniform", 10.0), "squeezenet-like"),
}


def build_mdtb(mdtb_id: str, duration: float = 10.0, seed: int = 0) -> Workload:
    key = str(mdtb_id).upper()
    if key not in MDTB_TABLE:
        raise ValueError(f"unknown MDTB workload {mdtb_id!r}; expected one of A, B, C, D")
    crit_model, crit_pattern, normal_model = MDTB_TABLE[key]
    return Workload(
        name=f"MDTB-{key}",
        critical=make_task(crit_model, Criticality.CRITICAL),
        critical_pattern=crit_pattern,
        normal=make_task(normal_model, Criticality.NORMAL),
        normal_pattern=ArrivalPattern("closed_loop"),
        duration=duration,
        seed=seed,
    )


# -- traces ------------------------------------------------------------------

class TraceError(ValueError):
    def __init__(self, path, lineno, msg):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = path
        self.lineno = lineno


def parse_trace(text: str, path: str = "<trace>") -> list[tuple[float, Criticality]]:
    requests: list[tuple[float, Criticality]] = []
    last = -math.inf
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise TraceError(path, lineno, f"expected '<arrival_seconds> <critical|normal>', got {raw!r}")
        try:
            t = float(parts[0])
        except ValueError:
            raise TraceError(path, lineno, f"bad timestamp {parts[0]!r}") from None
        if not math.isfinite(t) or t < 0:
            raise TraceError(path, lineno, f"timestamp must be finite and >= 0, got {parts[0]}")
        try:
            crit = Criticality(parts[1])
        except ValueError:
            raise TraceError(path, lineno, f"bad criticality {parts[1]!r}") from None
        if t < last:
            raise TraceError(path, lineno, f"timestamps must be non-decreasing ({t} after {last})")
        last = t
        requests.append((t, crit))
    if not requests:
        raise TraceError(path, 0, "trace contains no requests")
    return requests


def load_trace(path, critical_model: str = "resnet-like", normal_model: str = "squeezenet-like",
               duration: float | None = None, seed: int = 0, grid_factor: int = 1) -> Workload:
    """Workload with explicit per-request timestamps read from a trace file.

    ``grid_factor`` multiplies every kernel's grid, modelling larger sensor
    inputs than the profiles' default resolution.
    """
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read trace {p}: {exc.strerror}") from exc
    reqs = parse_trace(text, str(p))
    crit = tuple(t for t, c in reqs if c is Criticality.CRITICAL)
    norm = tuple(t for t, c in reqs if c is Criticality.NORMAL)
    if duration is None:
        last = reqs[-1][0]
        duration = float(math.floor(last) + 1)
    return Workload(
        name=p.stem,
        critical=make_task(critical_model, Criticality.CRITICAL, grid_factor),
        critical_pattern=ArrivalPattern("uniform", max(len(crit), 1) / duration),
        normal=make_task(normal_model, Criticality.NORMAL, grid_factor),
        normal_pattern=ArrivalPattern("uniform", max(len(norm), 1) / duration),
        duration=duration,
        seed=seed,
        critical_arrivals=crit,
        normal_arrivals=norm,
    )


def lgsvl_style_trace(duration: float = 10.0, critical_hz: float = 10.0,
                      normal_hz: float = 12.5) -> str:
    """Trace text for a camera (critical) + lidar (normal) perception mix."""
    events = [(t, "critical") for t in generate_arrivals(ArrivalPattern("uniform", critical_hz), duration)]
    events += [(t, "normal") for t in generate_arrivals(ArrivalPattern("uniform", normal_hz), duration)]
    events.sort(key=lambda e: (e[0], e[1] != "critical"))
    lines = [f"# lgsvl-style perception trace: critical {critical_hz:g} Hz, normal {normal_hz:g} Hz",
             f"# duration {duration:g} s"]
    lines += [f"{t:.6f} {c}" for t, c in events]
    return "\n".join(lines) + "\n"
