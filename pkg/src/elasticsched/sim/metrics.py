"""Run metrics, occupancy from traces and text exports."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..gpu import GpuSpec
from .engine import CRITICAL, NORMAL, SimTrace


@dataclass
class Metrics:
    policy: str
    workload: str
    duration: float
    critical_latencies: tuple = ()
    normal_latencies: tuple = ()
    critical_arrived: int = 0
    normal_arrived: int = 0
    critical_queue_delay: float = 0.0
    throughput: float = 0.0
    occupancy: float = 0.0
    blocks_dispatched: int = 0
    blocks_retired: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def critical_completed(self) -> int:
        return len(self.critical_latencies)

    @property
    def normal_completed(self) -> int:
        return len(self.normal_latencies)

    def _stat(self, fn):
        lat = self.critical_latencies
        return float(fn(np.asarray(lat))) if lat else float("nan")

    @property
    def critical_mean(self) -> float:
        return self._stat(np.mean)

    @property
    def critical_p50(self) -> float:
        return self._stat(lambda a: np.percentile(a, 50))

    @property
    def critical_p99(self) -> float:
        return self._stat(lambda a: np.percentile(a, 99))

    def to_text(self) -> str:
        rows = [
            ("policy", self.policy),
            ("workload", self.workload),
            ("duration", f"{self.duration:.6f}"),
            ("critical_completed", self.critical_completed),
            ("critical_arrived", self.critical_arrived),
            ("normal_completed", self.normal_completed),
            ("normal_arrived", self.normal_arrived),
            ("critical_latency_mean", f"{self.critical_mean:.9f}"),
            ("critical_latency_p50", f"{self.critical_p50:.9f}"),
            ("critical_latency_p99", f"{self.critical_p99:.9f}"),
            ("critical_queue_delay_mean", f"{self.critical_queue_delay:.9f}"),
            ("normal_latency_mean",
             f"{float(np.mean(self.normal_latencies)) if self.normal_latencies else float('nan'):.9f}"),
            ("throughput", f"{self.throughput:.6f}"),
            ("occupancy", f"{self.occupancy:.9f}"),
            ("blocks_dispatched", self.blocks_dispatched),
            ("blocks_retired", self.blocks_retired),
        ]
        rows += sorted(self.extra.items())
        return "".join(f"{k} = {v}\n" for k, v in rows)

    def export(self, path):
        with open(path, "w") as f:
            f.write(self.to_text())


def collect(policy: str, workload: str, duration: float, requests, occupancy: float,
            dispatched: int = 0, retired: int = 0) -> Metrics:
    crit = [r for r in requests if r.criticality == CRITICAL]
    norm = [r for r in requests if r.criticality == NORMAL]
    crit_lat = tuple(r.latency for r in crit if r.completion is not None)
    norm_lat = tuple(r.latency for r in norm if r.completion is not None)
    delays = [r.start - r.arrival for r in crit if r.start is not None]
    return Metrics(
        policy=policy,
        workload=workload,
        duration=duration,
        critical_latencies=crit_lat,
        normal_latencies=norm_lat,
        critical_arrived=len(crit),
        normal_arrived=len(norm),
        critical_queue_delay=float(np.mean(delays)) if delays else 0.0,
        throughput=(len(crit_lat) + len(norm_lat)) / duration,
        occupancy=occupancy,
        blocks_dispatched=dispatched,
        blocks_retired=retired,
    )


def _block_warps(threads: int, warp_size: int) -> int:
    return -(-threads // warp_size)


def achieved_occupancy(trace: SimTrace, gpu: GpuSpec | None = None) -> float:
    """Time-weighted active warps per active SM over the maximum warps per SM.

    Sweeps the dispatch/retire events of ``trace``; blocks still resident at
    the horizon count until the horizon.
    """
    max_warps = gpu.max_warps_per_sm if gpu else trace.max_warps_per_sm
    warp = gpu.warp_size if gpu else trace.warp_size
    n_sm = gpu.n_sm if gpu else trace.n_sm
    warps = [0] * n_sm
    warp_time = 0.0
    active_time = 0.0
    last = None
    any_disp = False
    for t, kind, _task, _kernel, b0, b1, sm, thr in trace.events:
        if kind not in ("disp", "ret"):
            continue
        if last is not None and t > last:
            dt = t - last
            warp_time += dt * sum(warps)
            active_time += dt * sum(1 for w in warps if w)
        last = t
        n = (b1 - b0 + 1) * _block_warps(thr, warp)
        if kind == "disp":
            any_disp = True
            warps[sm] += n
        else:
            warps[sm] -= n
    if not any_disp:
        return 0.0
    if last is not None and trace.horizon > last:
        dt = trace.horizon - last
        warp_time += dt * sum(warps)
        active_time += dt * sum(1 for w in warps if w)
    if active_time <= 0:
        return 0.0
    return warp_time / (active_time * max_warps)


def export_latency_cdf(metrics: Metrics, path):
    lat = sorted(metrics.critical_latencies)
    if not lat:
        raise ValueError("no completed critical requests to build a CDF from")
    n = len(lat)
    text = [f"{v:.9f}" for v in lat]
    lines = []
    for i, v in enumerate(text):
        # collapse ties (at printed precision) so both columns are monotone
        if i + 1 < n and text[i + 1] == v:
            continue
        lines.append(f"{v} {(i + 1) / n:.6f}\n")
    try:
        with open(path, "w") as f:
            f.writelines(lines)
    except OSError as exc:
        raise OSError(f"cannot write CDF to {path}: {exc.strerror}") from exc
