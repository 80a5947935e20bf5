"""Reference interpreter for kernel ASTs.

Every (block, thread) pair runs to completion sequentially in row-major
order, so results are deterministic. The AST is compiled once into nested
Python closures; per-thread state is a flat dict (the parser forbids
shadowing, so no scope stack is needed at run time).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

from . import ast as A

MODES = ("computation", "memory")


class KernelRuntimeError(Exception):
    pass


class OutOfBounds(KernelRuntimeError):
    def __init__(self, array, index, size):
        super().__init__(f"out-of-bounds access {array}[{index}] (size {size})")
        self.array = array
        self.index = index
        self.size = size


class WriteConflictWarning(UserWarning):
    pass


def host_index_table(grid_size: int, shard_start: int, logical_block_size: int) -> tuple[int, ...]:
    """Flat table: shard-local slot ``b * logical_block_size + s`` -> global logical thread id."""
    lb = logical_block_size
    return tuple((shard_start + b) * lb + s for b in range(grid_size) for s in range(lb))


@dataclass(frozen=True)
class LaunchConfig:
    grid_size: int
    block_size: int
    shard_start: int = 0
    logical_grid_size: int | None = None
    logical_block_size: int | None = None
    index_mode: str = "computation"
    index_table: tuple[int, ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.grid_size < 1 or self.block_size < 1:
            raise ValueError("grid_size and block_size must be >= 1")
        if self.logical_grid_size is None:
            object.__setattr__(self, "logical_grid_size", self.grid_size)
        if self.logical_block_size is None:
            object.__setattr__(self, "logical_block_size", self.block_size)
        if self.shard_start < 0 or self.shard_start + self.grid_size > self.logical_grid_size:
            raise ValueError(f"shard [{self.shard_start}, {self.shard_start + self.grid_size}) "
                             f"exceeds logical grid {self.logical_grid_size}")
        if self.index_mode not in MODES:
            raise ValueError(f"index_mode must be one of {MODES}")
        if self.index_mode == "memory" and self.index_table is None:
            raise ValueError("index_mode='memory' requires a precomputed index table")

    @classmethod
    def elastic(cls, grid_size, block_size, shard_start, logical_grid_size, logical_block_size,
                index_mode="computation"):
        table = None
        if index_mode == "memory":
            table = host_index_table(grid_size, shard_start, logical_block_size)
        return cls(grid_size, block_size, shard_start, logical_grid_size, logical_block_size,
                   index_mode, table)


def _cdiv(a, b):
    if b == 0:
        raise KernelRuntimeError("integer division by zero")
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def _cmod(a, b):
    return a - b * _cdiv(a, b)


_BINOPS = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": _cdiv,
    "%": _cmod,
    "<": lambda a, b: int(a < b),
    "<=": lambda a, b: int(a <= b),
    ">": lambda a, b: int(a > b),
    ">=": lambda a, b: int(a >= b),
    "==": lambda a, b: int(a == b),
    "!=": lambda a, b: int(a != b),
}


class _Compiler:
    def __init__(self, track_writes: bool):
        self.track_writes = track_writes

    def expr(self, e):
        if isinstance(e, A.Num):
            v = e.value
            return lambda env: v
        if isinstance(e, (A.Var, A.Builtin)):
            n = e.name
            return lambda env: env[n]
        if isinstance(e, A.Index):
            name, idx = e.array, self.expr(e.index)

            def read(env):
                arr = env[name]
                i = idx(env)
                if i < 0 or i >= len(arr):
                    raise OutOfBounds(name, i, len(arr))
                return arr[i]
            return read
        if isinstance(e, A.Unary):
            f = self.expr(e.operand)
            if e.op == "-":
                return lambda env: -f(env)
            return lambda env: int(not f(env))
        if isinstance(e, A.Binary):
            lf, rf = self.expr(e.left), self.expr(e.right)
            if e.op == "&&":
                return lambda env: int(bool(lf(env)) and bool(rf(env)))
            if e.op == "||":
                return lambda env: int(bool(lf(env)) or bool(rf(env)))
            op = _BINOPS[e.op]
            return lambda env: op(lf(env), rf(env))
        raise TypeError(e)

    def block(self, stmts):
        fs = [self.stmt(s) for s in stmts]
        if len(fs) == 1:
            return fs[0]

        def run(env):
            for f in fs:
                f(env)
        return run

    def stmt(self, s):
        if isinstance(s, (A.Let, A.Assign)):
            n, v = s.name, self.expr(s.value)

            def assign(env):
                env[n] = v(env)
            return assign
        if isinstance(s, A.Store):
            name, idx, val = s.array, self.expr(s.index), self.expr(s.value)
            track = self.track_writes

            def store(env):
                arr = env[name]
                i = idx(env)
                if i < 0 or i >= len(arr):
                    raise OutOfBounds(name, i, len(arr))
                arr[i] = val(env)
                if track:
                    who = env["__who__"]
                    owner = env["__writers__"].setdefault((name, i), who)
                    if owner != who:
                        env["__conflicts__"].add((name, i))
            return store
        if isinstance(s, A.If):
            c, t = self.expr(s.cond), self.block(s.then)
            o = self.block(s.orelse) if s.orelse else None

            def branch(env):
                if c(env):
                    t(env)
                elif o is not None:
                    o(env)
            return branch
        if isinstance(s, A.For):
            var, start, bound, step = s.var, self.expr(s.start), self.expr(s.bound), self.expr(s.step)
            body, inclusive = self.block(s.body), s.inclusive

            def loop(env):
                i, hi, st = start(env), bound(env), step(env)
                if st < 1:
                    raise KernelRuntimeError(f"loop step for {var!r} must be >= 1, got {st}")
                if inclusive:
                    hi += 1
                while i < hi:
                    env[var] = i
                    body(env)
                    i += st
            return loop
        raise TypeError(s)


def array_size(p: A.Param, scalars: dict) -> int:
    return _Compiler(False).expr(p.size)(dict(scalars))


def allocate(kernel: A.Kernel, scalars: dict, inputs: dict | None = None) -> dict[str, list]:
    """Fresh argument arrays: inputs copied, missing arrays zero-filled."""
    inputs = inputs or {}
    arrays = {}
    for p in kernel.arrays:
        n = array_size(p, scalars)
        if n < 0:
            raise KernelRuntimeError(f"array {p.name} has negative size {n}")
        if p.name in inputs:
            data = [int(x) for x in inputs[p.name]]
            if len(data) != n:
                raise ValueError(f"input {p.name} has {len(data)} elements, declared {n}")
            arrays[p.name] = data
        elif p.kind == "in":
            raise ValueError(f"missing input array {p.name!r}")
        else:
            arrays[p.name] = [0] * n
    return arrays


class CompiledKernel:
    def __init__(self, kernel: A.Kernel, track_writes: bool = False):
        self.kernel = kernel
        self.track_writes = track_writes
        self._body = _Compiler(track_writes).block(kernel.body)

    def launch(self, cfg: LaunchConfig, arrays: dict[str, list], scalars: dict) -> set:
        """Run one launch in place over ``arrays``; returns conflicting cells if tracking."""
        base = dict(scalars)
        base.update(arrays)
        base[A.BLOCK_DIM] = cfg.block_size
        base[A.GRID_DIM] = cfg.grid_size
        base[A.SHARD_START] = cfg.shard_start
        base[A.LOGICAL_GRID] = cfg.logical_grid_size
        base[A.LOGICAL_BLOCK] = cfg.logical_block_size
        if cfg.index_table is not None:
            base[A.INDEX_TABLE] = cfg.index_table
        conflicts: set = set()
        if self.track_writes:
            base["__writers__"] = {}
            base["__conflicts__"] = conflicts
        body = self._body
        for b in range(cfg.grid_size):
            for t in range(cfg.block_size):
                env = dict(base)
                env[A.BLOCK_IDX] = b
                env[A.THREAD_IDX] = t
                if self.track_writes:
                    env["__who__"] = (b, t)
                body(env)
        return conflicts


def interpret(kernel: A.Kernel, cfg: LaunchConfig, inputs: dict | None = None,
              scalars: dict | None = None, check_conflicts: bool = False) -> dict[str, list]:
    """Run ``kernel`` under ``cfg`` and return every array argument after the launch."""
    scalars = dict(scalars or {})
    missing = [p.name for p in kernel.scalars if p.name not in scalars]
    if missing:
        raise ValueError(f"missing scalar parameters: {', '.join(missing)}")
    arrays = allocate(kernel, scalars, inputs)
    conflicts = CompiledKernel(kernel, check_conflicts).launch(cfg, arrays, scalars)
    if conflicts:
        cells = ", ".join(f"{a}[{i}]" for a, i in sorted(conflicts)[:5])
        warnings.warn(f"{kernel.name}: {len(conflicts)} cells written by more than one thread ({cells})",
                      WriteConflictWarning, stacklevel=2)
    return arrays
