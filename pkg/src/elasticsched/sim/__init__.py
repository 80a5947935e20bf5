"""Discrete-event simulation of mixed-criticality kernel scheduling."""

from __future__ import annotations

import dataclasses

from ..gpu import GpuSpec
from ..workload import Workload
from .engine import ContentionModel, Engine, RequestRecord, SimTrace, block_service_time
from .metrics import Metrics, achieved_occupancy, collect, export_latency_cdf
from .policies import DRIVERS, POLICIES, ConfigError, candidate_sets

__all__ = [
    "ConfigError", "ContentionModel", "Metrics", "POLICIES", "RequestRecord", "SimTrace",
    "achieved_occupancy", "block_service_time", "candidate_sets", "export_latency_cdf", "run",
]


def run(workload: Workload, policy: str, gpu: GpuSpec, model: ContentionModel | None = None,
        seed: int | None = None, record: bool = True, candidates=None, decision_log: bool = False):
    """Simulate ``workload`` under ``policy`` for ``workload.duration`` seconds.

    ``seed`` overrides the workload's arrival seed. Returns ``(trace, metrics)``.
    """
    if policy not in DRIVERS:
        raise ConfigError(f"unknown policy {policy!r}; expected one of {', '.join(POLICIES)}")
    model = model or ContentionModel()
    if seed is not None:
        workload = dataclasses.replace(workload, seed=seed)
    eng = Engine(gpu, model, workload.duration, record=record)
    if policy == "elastic":
        drv = DRIVERS[policy](eng, workload, workload.seed, candidates, decision_log)
    else:
        drv = DRIVERS[policy](eng, workload, workload.seed)
    drv.start()
    eng.run()
    eng.trace.requests = drv.requests
    metrics = collect(policy, workload.name, workload.duration, drv.requests, eng.occupancy,
                      eng.blocks_dispatched, eng.blocks_retired)
    if policy == "elastic":
        eng.trace.decisions = drv.coord.log
    return eng.trace, metrics
