"""Experiment configuration files.

Line-oriented ``key = value`` text with ``[section]`` headers::

    [experiment]
    seed = 1
    policies = sequential, elastic
    gpu = rtx2060-like

    [workload]
    mdtb = A            # or: trace = path/to/file.trace
    duration = 2

    [model]             # optional ContentionModel overrides
    launch_overhead = 15e-6

    [gpu]               # optional GpuSpec overrides
    n_sm = 16
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .gpu import GpuSpec, get_preset, with_overrides
from .sim import POLICIES, ContentionModel
from .workload import ArrivalPattern, Criticality, Workload, build_mdtb, load_trace, make_task


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    seed: int
    policies: list[str]
    gpu: GpuSpec
    model: ContentionModel
    workloads: list[Workload]
    out_dir: Path | None = None
    write_trace: bool = True
    decision_log: bool = False
    source: str = ""
    extra: dict = field(default_factory=dict)


def _pattern(text: str) -> ArrivalPattern:
    """``closed_loop``, ``uniform:10`` or ``poisson:10``."""
    kind, _, rate = text.strip().partition(":")
    try:
        return ArrivalPattern(kind.strip(), float(rate) if rate else None)
    except ValueError as exc:
        raise ConfigError(f"bad arrival pattern {text!r}: {exc}") from None


def _number(section, key, conv, default=None):
    if key not in section:
        return default
    try:
        return conv(section[key])
    except ValueError:
        raise ConfigError(f"[{section.name}] {key}: cannot parse {section[key]!r}") from None


def _workloads(sec, base: Path, seed: int) -> list[Workload]:
    duration = _number(sec, "duration", float, 10.0)
    if duration is not None and duration <= 0:
        raise ConfigError("[workload] duration must be positive")
    out = []
    if "mdtb" in sec:
        for wid in sec["mdtb"].replace(",", " ").split():
            try:
                out.append(build_mdtb(wid, duration=duration, seed=seed))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
    if "trace" in sec:
        path = Path(sec["trace"])
        if not path.is_absolute():
            path = base / path
        if not path.exists():
            raise ConfigError(f"trace file not found: {path}")
        kw = {}
        if "critical_model" in sec:
            kw["critical_model"] = sec["critical_model"]
        if "normal_model" in sec:
            kw["normal_model"] = sec["normal_model"]
        kw["grid_factor"] = _number(sec, "grid_factor", int, 1)
        out.append(load_trace(path, duration=_number(sec, "duration", float), seed=seed, **kw))
    if "critical_model" in sec and "trace" not in sec:
        try:
            out.append(Workload(
                name=sec.get("name", "inline"),
                critical=make_task(sec["critical_model"], Criticality.CRITICAL),
                critical_pattern=_pattern(sec.get("critical_pattern", "closed_loop")),
                normal=make_task(sec["normal_model"], Criticality.NORMAL),
                normal_pattern=_pattern(sec.get("normal_pattern", "closed_loop")),
                duration=duration,
                seed=seed,
            ))
        except KeyError as exc:
            raise ConfigError(f"[workload] missing key {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"[workload] {exc}") from None
    if not out:
        raise ConfigError("[workload] needs one of: mdtb, trace, critical_model/normal_model")
    return out


def parse_config(text: str, base: Path | str = ".", seed_override: int | None = None,
                 gpu_override: str | None = None, name: str = "<config>") -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(text, source=name)
    except configparser.Error as exc:
        raise ConfigError(f"{name}: {exc}") from None
    if "experiment" not in cp:
        raise ConfigError(f"{name}: missing [experiment] section")
    exp = cp["experiment"]
    seed = seed_override if seed_override is not None else _number(exp, "seed", int)
    if seed is None:
        raise ConfigError(f"{name}: a seed is required ([experiment] seed = N or --seed)")
    policies = [p.strip() for p in exp.get("policies", "").replace(",", " ").split()]
    if not policies:
        raise ConfigError(f"{name}: at least one policy is required")
    unknown = [p for p in policies if p not in POLICIES]
    if unknown:
        raise ConfigError(f"{name}: unknown policies {unknown}; expected {', '.join(POLICIES)}")
    try:
        gpu = get_preset(gpu_override or exp.get("gpu", "rtx2060-like"))
        if "gpu" in cp:
            gpu = with_overrides(gpu, **{k: float(v) if k == "mem_bandwidth" else int(v)
                                         for k, v in cp["gpu"].items()})
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{name}: {exc}") from None
    model_kw = {}
    if "model" in cp:
        fields = {f.name: f.type for f in dataclasses.fields(ContentionModel)}
        for k, v in cp["model"].items():
            if k not in fields:
                raise ConfigError(f"{name}: unknown [model] key {k!r}")
            try:
                model_kw[k] = int(v) if k == "ib_group_size" else float(v)
            except ValueError:
                raise ConfigError(f"{name}: [model] {k}: cannot parse {v!r}") from None
    try:
        model = ContentionModel(**model_kw)
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from None
    if "workload" not in cp:
        raise ConfigError(f"{name}: missing [workload] section")
    workloads = _workloads(cp["workload"], Path(base), seed)
    out = cp["output"] if "output" in cp else {}
    out_dir = exp.get("out")
    return ExperimentConfig(
        seed=seed,
        policies=policies,
        gpu=gpu,
        model=model,
        workloads=workloads,
        out_dir=Path(out_dir) if out_dir else None,
        write_trace=str(out.get("trace", "yes")).lower() in ("1", "yes", "true", "on"),
        decision_log=str(out.get("decision_log", "no")).lower() in ("1", "yes", "true", "on"),
        source=name,
    )


def load_config(path, seed_override: int | None = None, gpu_override: str | None = None) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config(text, p.parent, seed_override, gpu_override, str(p))
