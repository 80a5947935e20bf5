"""Miniature CUDA-like kernel language: parser, interpreter and elasticizing transformer."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources

from .ast import Kernel
from .interp import KernelRuntimeError, LaunchConfig, OutOfBounds, interpret
from .parser import DslError, DslSyntaxError, UnboundedLoop, UnknownIdentifier, parse_kernel
from .printer import print_kernel
from .transform import (ElasticizeError, EquivalenceReport, ShardPlan, elasticize, naive_resize,
                        verify_equivalence)

__all__ = [
    "CorpusKernel", "DslError", "DslSyntaxError", "ElasticizeError", "EquivalenceReport", "Kernel",
    "KernelRuntimeError", "LaunchConfig", "OutOfBounds", "ShardPlan", "UnboundedLoop",
    "UnknownIdentifier", "elasticize", "interpret", "load_corpus", "naive_resize", "parse_kernel",
    "print_kernel", "read_directives", "verify_equivalence",
]

_DIRECTIVE = re.compile(r"^\s*//\s*@(launch|set)\s+(.*)$")


def read_directives(source: str) -> tuple[dict, dict]:
    """``// @launch grid=.. block=..`` and ``// @set name=value`` comment directives."""
    launch, sets = {}, {}
    for line in source.splitlines():
        m = _DIRECTIVE.match(line)
        if not m:
            continue
        target = launch if m.group(1) == "launch" else sets
        for tok in m.group(2).split():
            k, _, v = tok.partition("=")
            target[k] = int(v)
    return launch, sets


@dataclass(frozen=True)
class CorpusKernel:
    name: str
    source: str
    ast: Kernel
    grid: int
    block: int
    scalars: dict = field(default_factory=dict)


def load_corpus() -> list[CorpusKernel]:
    out = []
    root = resources.files("elasticsched") / "dsl" / "corpus"
    for f in sorted(root.iterdir(), key=lambda p: p.name):
        if not f.name.endswith(".knl"):
            continue
        src = f.read_text()
        launch, sets = read_directives(src)
        out.append(CorpusKernel(f.name[:-4], src, parse_kernel(src),
                                launch.get("grid", 16), launch.get("block", 64), sets))
    return out
