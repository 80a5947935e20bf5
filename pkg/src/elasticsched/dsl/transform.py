"""Source-to-source elasticization and the equivalence checker.

An elastic kernel decouples its launch shape from its logical shape: a
prologue derives the logical block id from ``blockIdx.x + shardStart``, and
a persistent-thread loop lets each physical thread serve every
``blockDim.x``-th logical thread of that block. All physical identifiers in
the original body are rewritten to their logical equivalents.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import ast as A
from .interp import MODES, CompiledKernel, LaunchConfig, allocate, array_size


class ElasticizeError(Exception):
    pass


def _fresh(base: str, used: set[str]) -> str:
    name, k = base, 1
    while name in used:
        k += 1
        name = f"{base}{k}"
    used.add(name)
    return name


class _Rewriter:
    def __init__(self, mapping: dict):
        self.mapping = mapping

    def expr(self, e):
        if isinstance(e, A.Builtin):
            return self.mapping.get(e.name, e)
        if isinstance(e, A.Index):
            return replace(e, index=self.expr(e.index))
        if isinstance(e, A.Unary):
            return replace(e, operand=self.expr(e.operand))
        if isinstance(e, A.Binary):
            return replace(e, left=self.expr(e.left), right=self.expr(e.right))
        return e

    def stmts(self, ss):
        return tuple(self.stmt(s) for s in ss)

    def stmt(self, s):
        if isinstance(s, (A.Let, A.Assign)):
            return replace(s, value=self.expr(s.value))
        if isinstance(s, A.Store):
            return replace(s, index=self.expr(s.index), value=self.expr(s.value))
        if isinstance(s, A.If):
            return replace(s, cond=self.expr(s.cond), then=self.stmts(s.then), orelse=self.stmts(s.orelse))
        if isinstance(s, A.For):
            return replace(s, start=self.expr(s.start), bound=self.expr(s.bound),
                           step=self.expr(s.step), body=self.stmts(s.body))
        raise TypeError(s)


def default_substitutions(lt: str, lb: str) -> dict:
    return {
        A.THREAD_IDX: A.Var(lt),
        A.BLOCK_IDX: A.Var(lb),
        A.BLOCK_DIM: A.Builtin(A.LOGICAL_BLOCK),
        A.GRID_DIM: A.Builtin(A.LOGICAL_GRID),
    }


def elasticize(kernel: A.Kernel, mode: str = "computation", substitutions=None) -> A.Kernel:
    """Rewrite ``kernel`` into its elastic form.

    ``substitutions`` optionally overrides the physical-to-logical mapping
    (a callable ``(lt, lb) -> dict``); it exists for mutation testing.
    """
    if mode not in MODES:
        raise ElasticizeError(f"unknown index mode {mode!r}")
    clash = A.builtins_used(kernel) & (set(A.ELASTIC_BUILTINS) | {A.INDEX_TABLE})
    if clash:
        raise ElasticizeError(f"kernel {kernel.name} already uses elastic builtins: {sorted(clash)}")
    used = A.names_used(kernel)
    lt = _fresh("lt", used)
    lb = _fresh("logicalBlock", used)
    mapping = (substitutions or default_substitutions)(lt, lb)
    body = _Rewriter(mapping).stmts(kernel.body)

    logical_block_dim = A.Builtin(A.LOGICAL_BLOCK)
    if mode == "computation":
        prologue = (A.Let(lb, A.Binary("+", A.Builtin(A.BLOCK_IDX), A.Builtin(A.SHARD_START))),)
        loop = A.For(lt, A.Builtin(A.THREAD_IDX), logical_block_dim, False,
                     A.Builtin(A.BLOCK_DIM), body)
    else:
        slot = _fresh("slot", used)
        gid = _fresh("gid", used)
        lookup = (
            A.Let(gid, A.Index(A.INDEX_TABLE, A.Binary(
                "+", A.Binary("*", A.Builtin(A.BLOCK_IDX), logical_block_dim), A.Var(slot)))),
            A.Let(lb, A.Binary("/", A.Var(gid), logical_block_dim)),
            A.Let(lt, A.Binary("%", A.Var(gid), logical_block_dim)),
        )
        prologue = ()
        loop = A.For(slot, A.Builtin(A.THREAD_IDX), logical_block_dim, False,
                     A.Builtin(A.BLOCK_DIM), lookup + body)
    return A.Kernel(f"{kernel.name}_elastic", kernel.params, prologue + (loop,))


def physical_refs_outside_prologue(elastic: A.Kernel) -> list[str]:
    """Physical identifiers used by the rewritten original body (should be empty)."""
    loop = elastic.body[-1]
    body = loop.body
    if body and isinstance(body[0], A.Let) and isinstance(body[0].value, A.Index) \
            and body[0].value.array == A.INDEX_TABLE:
        body = body[3:]
    return sorted({n.name for s in body for n in A.walk(s)
                   if isinstance(n, A.Builtin) and n.name in A.PHYSICAL})


# -- equivalence -------------------------------------------------------------

@dataclass(frozen=True)
class ShardPlan:
    shards: tuple[tuple[int, int], ...]  # (logical start, block count)
    block_size: int
    mode: str = "computation"

    @classmethod
    def uniform(cls, M: int, shard_size: int, block_size: int, mode: str = "computation"):
        if shard_size < 1 or M % shard_size:
            raise ValueError(f"shard size {shard_size} does not divide M={M}")
        return cls(tuple((s, shard_size) for s in range(0, M, shard_size)), block_size, mode)

    def check_partition(self, M: int):
        if not self.shards:
            raise ValueError("empty shard plan")
        pos = 0
        for start, count in sorted(self.shards):
            if start != pos or count < 1:
                raise ValueError(f"shard plan does not partition [0, {M}): {self.shards}")
            pos += count
        if pos != M:
            raise ValueError(f"shard plan does not partition [0, {M}): {self.shards}")

    def describe(self) -> str:
        sizes = sorted({c for _, c in self.shards})
        return f"shards={len(self.shards)}x{'/'.join(map(str, sizes))} block={self.block_size} mode={self.mode}"


@dataclass
class PlanResult:
    plan: ShardPlan
    passed: bool
    detail: str = ""


@dataclass
class EquivalenceReport:
    kernel: str
    results: list[PlanResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.results) and all(r.passed for r in self.results)

    def lines(self) -> list[str]:
        return [f"{'PASS' if r.passed else 'FAIL'} {self.kernel} {r.plan.describe()}"
                + (f" ({r.detail})" if r.detail else "") for r in self.results]


def default_scalars(kernel: A.Kernel, M: int, B: int, overrides: dict | None = None) -> dict:
    """Scalar arguments: explicit overrides, otherwise the logical thread count ``M*B``."""
    overrides = overrides or {}
    return {p.name: int(overrides.get(p.name, M * B)) for p in kernel.scalars}


def random_inputs(kernel: A.Kernel, scalars: dict, seed: int, lo: int = -50, hi: int = 50) -> dict:
    """Seeded random integer contents for every ``in``/``inout`` array."""
    rng = np.random.default_rng(seed)
    out = {}
    for p in kernel.arrays:
        if p.kind in ("in", "inout"):
            n = array_size(p, scalars)
            out[p.name] = [int(x) for x in rng.integers(lo, hi + 1, size=n)]
    return out


def _first_diff(ref: dict, got: dict) -> str:
    for name in ref:
        a, b = ref[name], got[name]
        for i, (x, y) in enumerate(zip(a, b)):
            if x != y:
                return f"{name}[{i}]: expected {x}, got {y}"
    return ""


def run_original(original: A.Kernel, M: int, B: int, inputs: dict, scalars: dict) -> dict:
    arrays = allocate(original, scalars, inputs)
    CompiledKernel(original).launch(LaunchConfig(M, B), arrays, scalars)
    return arrays


def run_elastic(elastic: A.Kernel, M: int, B: int, plan: ShardPlan, inputs: dict, scalars: dict,
                compiled: CompiledKernel | None = None) -> dict:
    arrays = allocate(elastic, scalars, inputs)
    ck = compiled or CompiledKernel(elastic)
    for start, count in plan.shards:
        cfg = LaunchConfig.elastic(count, plan.block_size, start, M, B, plan.mode)
        ck.launch(cfg, arrays, scalars)
    return arrays


def verify_equivalence(original: A.Kernel, elastic: A.Kernel, M: int, B: int, plans,
                       inputs: dict | None = None, seed: int = 0,
                       scalars: dict | None = None) -> EquivalenceReport:
    """Compare every shard plan of ``elastic`` bit-exactly against one full launch of ``original``."""
    plans = list(plans)
    if not plans:
        raise ValueError("at least one shard plan is required")
    for plan in plans:
        plan.check_partition(M)
    sc = default_scalars(original, M, B, scalars)
    if inputs is None:
        inputs = random_inputs(original, sc, seed)
    reference = run_original(original, M, B, inputs, sc)
    report = EquivalenceReport(original.name)
    ck = CompiledKernel(elastic)
    for plan in plans:
        try:
            got = run_elastic(elastic, M, B, plan, inputs, sc, ck)
        except Exception as exc:  # runtime faults count as failures
            report.results.append(PlanResult(plan, False, f"{type(exc).__name__}: {exc}"))
            continue
        diff = _first_diff(reference, got)
        report.results.append(PlanResult(plan, not diff, diff))
    return report


def naive_resize(original: A.Kernel, M: int, B: int, grid: int, block: int, inputs: dict | None = None,
                 seed: int = 0, scalars: dict | None = None) -> tuple[bool, str]:
    """Launch the untransformed kernel with a different (grid, block); True if outputs still match."""
    sc = default_scalars(original, M, B, scalars)
    if inputs is None:
        inputs = random_inputs(original, sc, seed)
    reference = run_original(original, M, B, inputs, sc)
    arrays = allocate(original, sc, inputs)
    try:
        CompiledKernel(original).launch(LaunchConfig(grid, block), arrays, sc)
    except Exception as exc:
        return False, f"{type(exc).__name__}: {exc}"
    diff = _first_diff(reference, arrays)
    return not diff, diff
