"""AST for the miniature 1-D kernel language.

Nodes are frozen dataclasses; source positions are carried for error
reporting but excluded from equality so that ``parse(print(ast)) == ast``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

# physical launch identifiers
THREAD_IDX = "threadIdx.x"
BLOCK_IDX = "blockIdx.x"
BLOCK_DIM = "blockDim.x"
GRID_DIM = "gridDim.x"
PHYSICAL = (THREAD_IDX, BLOCK_IDX, BLOCK_DIM, GRID_DIM)

# launch-time values injected for elastic kernels
SHARD_START = "shardStart"
LOGICAL_GRID = "logicalGridDim"
LOGICAL_BLOCK = "logicalBlockDim"
INDEX_TABLE = "indexTable"
ELASTIC_BUILTINS = (SHARD_START, LOGICAL_GRID, LOGICAL_BLOCK)

BUILTINS = PHYSICAL + ELASTIC_BUILTINS

Pos = tuple[int, int]


def _pos():
    return field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Num:
    value: int
    pos: Pos = _pos()


@dataclass(frozen=True)
class Var:
    name: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class Builtin:
    name: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class Index:
    array: str
    index: "Expr"
    pos: Pos = _pos()


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Expr"
    pos: Pos = _pos()


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"
    pos: Pos = _pos()


Expr = Num | Var | Builtin | Index | Unary | Binary


@dataclass(frozen=True)
class Let:
    name: str
    value: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class Assign:
    name: str
    value: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class Store:
    array: str
    index: Expr
    value: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class If:
    cond: Expr
    then: tuple
    orelse: tuple = ()
    pos: Pos = _pos()


@dataclass(frozen=True)
class For:
    var: str
    start: Expr
    bound: Expr
    inclusive: bool
    step: Expr
    body: tuple
    pos: Pos = _pos()


Stmt = Let | Assign | Store | If | For


@dataclass(frozen=True)
class Param:
    kind: str  # "int" | "in" | "out" | "inout"
    name: str
    size: Expr | None = None
    pos: Pos = _pos()

    @property
    def is_array(self) -> bool:
        return self.kind != "int"


@dataclass(frozen=True)
class Kernel:
    name: str
    params: tuple[Param, ...]
    body: tuple
    pos: Pos = _pos()

    def param(self, name: str) -> Param:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    @property
    def arrays(self) -> tuple[Param, ...]:
        return tuple(p for p in self.params if p.is_array)

    @property
    def scalars(self) -> tuple[Param, ...]:
        return tuple(p for p in self.params if not p.is_array)


def walk(node):
    """Yield every node below (and including) ``node`` in source order."""
    yield node
    if isinstance(node, Kernel):
        for p in node.params:
            yield from walk(p)
        for s in node.body:
            yield from walk(s)
    elif isinstance(node, Param):
        if node.size is not None:
            yield from walk(node.size)
    elif isinstance(node, (Let, Assign)):
        yield from walk(node.value)
    elif isinstance(node, Store):
        yield from walk(node.index)
        yield from walk(node.value)
    elif isinstance(node, If):
        yield from walk(node.cond)
        for s in node.then + node.orelse:
            yield from walk(s)
    elif isinstance(node, For):
        for e in (node.start, node.bound, node.step):
            yield from walk(e)
        for s in node.body:
            yield from walk(s)
    elif isinstance(node, Index):
        yield from walk(node.index)
    elif isinstance(node, Unary):
        yield from walk(node.operand)
    elif isinstance(node, Binary):
        yield from walk(node.left)
        yield from walk(node.right)


def builtins_used(node) -> set[str]:
    names = {n.name for n in walk(node) if isinstance(n, Builtin)}
    if any(isinstance(n, Index) and n.array == INDEX_TABLE for n in walk(node)):
        names.add(INDEX_TABLE)
    return names


def names_used(node) -> set[str]:
    out = set()
    for n in walk(node):
        if isinstance(n, (Var, Let, Assign)):
            out.add(n.name)
        elif isinstance(n, For):
            out.add(n.var)
        elif isinstance(n, (Index, Store)):
            out.add(n.array)
        elif isinstance(n, (Param, Kernel)):
            out.add(n.name)
    return out
