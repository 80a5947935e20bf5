"""Tokenizer and recursive-descent parser for kernel sources.

Grammar (1-D, integer-only)::

    kernel  := "kernel" NAME "(" [param ("," param)*] ")" block
    param   := "int" NAME | ("in" | "out" | "inout") NAME "[" expr "]"
    block   := "{" stmt* "}"
    stmt    := "let" NAME "=" expr ";"
             | NAME "=" expr ";"
             | NAME "[" expr "]" "=" expr ";"
             | "if" "(" expr ")" block ["else" (block | if-stmt)]
             | "for" "(" NAME "=" expr ";" NAME ("<" | "<=") expr ";" NAME "+=" expr ")" block
    expr    := C-style precedence over || && == != < <= > >= + - * / % unary(- !)
    primary := INT | NAME | NAME "[" expr "]" | "(" expr ")"
             | threadIdx.x | blockIdx.x | blockDim.x | gridDim.x
             | shardStart | logicalGridDim | logicalBlockDim | indexTable "[" expr "]"

Comments run from ``//`` to end of line. Loop bounds and steps may not read
arrays and the loop variable may not be assigned in the body, so every loop
has a data-independent trip count.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from . import ast as A


class DslError(Exception):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        self.msg = msg
        self.line = line
        self.col = col
        super().__init__(f"{line}:{col}: {msg}" if line else msg)


class DslSyntaxError(DslError):
    pass


class UnknownIdentifier(DslError):
    pass


class UnboundedLoop(DslError):
    pass


KEYWORDS = {"kernel", "int", "in", "out", "inout", "let", "if", "else", "for"}
DIM_OBJECTS = {"threadIdx", "blockIdx", "blockDim", "gridDim"}

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<num>\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\+=|<=|>=|==|!=|&&|\|\||[-+*/%<>=!(){}\[\];,.])
""", re.VERBOSE)


@dataclass
class Tok:
    kind: str
    text: str
    line: int
    col: int


def tokenize(src: str) -> list[Tok]:
    toks = []
    line, line_start, i = 1, 0, 0
    while i < len(src):
        m = _TOKEN.match(src, i)
        if not m:
            raise DslSyntaxError(f"unexpected character {src[i]!r}", line, i - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            toks.append(Tok(kind, m.group(), line, i - line_start + 1))
        i = m.end()
    toks.append(Tok("eof", "", line, i - line_start + 1))
    return toks


_BINARY_LEVELS = [
    ("||",),
    ("&&",),
    ("==", "!="),
    ("<", "<=", ">", ">="),
    ("+", "-"),
    ("*", "/", "%"),
]


class _Scope:
    def __init__(self, parent=None):
        self.parent = parent
        self.names: dict[str, str] = {}

    def lookup(self, name):
        s = self
        while s is not None:
            if name in s.names:
                return s.names[name]
            s = s.parent
        return None


class Parser:
    def __init__(self, src: str):
        self.toks = tokenize(src)
        self.i = 0
        self.scope = _Scope()
        self.loop_vars: list[str] = []

    # -- token helpers
    @property
    def tok(self) -> Tok:
        return self.toks[self.i]

    def _err(self, msg, tok=None, cls=DslSyntaxError):
        t = tok or self.tok
        return cls(msg, t.line, t.col)

    def at(self, text) -> bool:
        return self.tok.text == text and self.tok.kind in ("op", "name")

    def accept(self, text) -> Tok | None:
        if self.at(text):
            t = self.tok
            self.i += 1
            return t
        return None

    def expect(self, text) -> Tok:
        t = self.accept(text)
        if t is None:
            found = self.tok.text or "end of input"
            raise self._err(f"expected {text!r}, found {found!r}")
        return t

    def name(self) -> Tok:
        t = self.tok
        if t.kind != "name" or t.text in KEYWORDS:
            raise self._err(f"expected identifier, found {t.text or 'end of input'!r}")
        self.i += 1
        return t

    # -- declarations
    def declare(self, tok: Tok, kind: str):
        if tok.text in A.BUILTINS or tok.text in DIM_OBJECTS or tok.text == A.INDEX_TABLE:
            raise self._err(f"{tok.text!r} is reserved", tok)
        if self.scope.lookup(tok.text) is not None:
            raise self._err(f"{tok.text!r} is already declared", tok)
        self.scope.names[tok.text] = kind

    def kernel(self) -> A.Kernel:
        kw = self.expect("kernel")
        name = self.name()
        self.expect("(")
        params = []
        if not self.at(")"):
            params.append(self.param())
            while self.accept(","):
                params.append(self.param())
        self.expect(")")
        body = self.block()
        if self.tok.kind != "eof":
            raise self._err("trailing input after kernel body")
        return A.Kernel(name.text, tuple(params), body, pos=(kw.line, kw.col))

    def param(self) -> A.Param:
        t = self.tok
        if t.text == "int":
            self.i += 1
            n = self.name()
            self.declare(n, "scalar")
            return A.Param("int", n.text, None, pos=(t.line, t.col))
        if t.text in ("in", "out", "inout"):
            self.i += 1
            n = self.name()
            self.expect("[")
            size = self.expr(size_context=True)
            self.expect("]")
            self.declare(n, t.text)
            return A.Param(t.text, n.text, size, pos=(t.line, t.col))
        raise self._err(f"expected parameter ('int', 'in', 'out' or 'inout'), found {t.text!r}")

    # -- statements
    def block(self) -> tuple:
        self.expect("{")
        self.scope = _Scope(self.scope)
        stmts = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                raise self._err("unterminated block")
            stmts.append(self.stmt())
        self.expect("}")
        self.scope = self.scope.parent
        return tuple(stmts)

    def stmt(self):
        t = self.tok
        pos = (t.line, t.col)
        if self.accept("let"):
            n = self.name()
            self.expect("=")
            value = self.expr()
            self.expect(";")
            self.declare(n, "local")
            return A.Let(n.text, value, pos=pos)
        if self.accept("if"):
            return self.if_rest(pos)
        if self.accept("for"):
            return self.for_rest(pos)
        if t.text == "while":
            raise self._err("'while' loops are not supported; use a bounded for loop", t, UnboundedLoop)
        n = self.name()
        kind = self.scope.lookup(n.text)
        if self.accept("["):
            if kind is None and n.text != A.INDEX_TABLE:
                raise self._err(f"unknown array {n.text!r}", n, UnknownIdentifier)
            if kind not in ("out", "inout"):
                raise self._err(f"cannot write to {n.text!r}", n)
            idx = self.expr()
            self.expect("]")
            self.expect("=")
            value = self.expr()
            self.expect(";")
            return A.Store(n.text, idx, value, pos=pos)
        if kind is None:
            raise self._err(f"unknown identifier {n.text!r}", n, UnknownIdentifier)
        if kind != "local":
            raise self._err(f"cannot assign to {n.text!r}", n)
        if n.text in self.loop_vars:
            raise self._err(f"loop variable {n.text!r} assigned inside its loop", n, UnboundedLoop)
        self.expect("=")
        value = self.expr()
        self.expect(";")
        return A.Assign(n.text, value, pos=pos)

    def if_rest(self, pos):
        self.expect("(")
        cond = self.expr()
        self.expect(")")
        then = self.block()
        orelse = ()
        if self.accept("else"):
            if self.at("if"):
                t = self.tok
                self.i += 1
                orelse = (self.if_rest((t.line, t.col)),)
            else:
                orelse = self.block()
        return A.If(cond, then, orelse, pos=pos)

    def for_rest(self, pos):
        self.expect("(")
        v = self.name()
        self.expect("=")
        start = self.expr()
        self.expect(";")
        v2 = self.name()
        if v2.text != v.text:
            raise self._err("loop condition must test the loop variable", v2, UnboundedLoop)
        if self.accept("<"):
            inclusive = False
        elif self.accept("<="):
            inclusive = True
        else:
            raise self._err("loop condition must be '<' or '<='", cls=UnboundedLoop)
        # the loop variable is not visible in its own bound or step
        bound = self.expr(static=True)
        self.expect(";")
        v3 = self.name()
        if v3.text != v.text:
            raise self._err("loop increment must update the loop variable", v3, UnboundedLoop)
        self.expect("+=")
        step = self.expr(static=True)
        self.expect(")")
        self.scope = _Scope(self.scope)
        self.declare(v, "local")
        self.loop_vars.append(v.text)
        body = self.block()
        self.loop_vars.pop()
        self.scope = self.scope.parent
        return A.For(v.text, start, bound, inclusive, step, body, pos=pos)

    # -- expressions
    def expr(self, size_context=False, static=False):
        self._ctx = (size_context, static)
        return self.binary(0)

    def binary(self, level):
        if level == len(_BINARY_LEVELS):
            return self.unary()
        ops = _BINARY_LEVELS[level]
        left = self.binary(level + 1)
        while self.tok.kind == "op" and self.tok.text in ops:
            t = self.tok
            self.i += 1
            right = self.binary(level + 1)
            left = A.Binary(t.text, left, right, pos=(t.line, t.col))
            if level in (2, 3) and self.tok.kind == "op" and self.tok.text in ops:
                raise self._err("chained comparisons are not allowed; parenthesize")
        return left

    def unary(self):
        t = self.tok
        if t.kind == "op" and t.text in ("-", "!"):
            self.i += 1
            return A.Unary(t.text, self.unary(), pos=(t.line, t.col))
        return self.primary()

    def primary(self):
        t = self.tok
        pos = (t.line, t.col)
        size_context, static = self._ctx
        if t.kind == "num":
            self.i += 1
            return A.Num(int(t.text), pos=pos)
        if self.accept("("):
            e = self.binary(0)
            self.expect(")")
            return e
        if t.kind == "name" and t.text in DIM_OBJECTS:
            self.i += 1
            self.expect(".")
            comp = self.name()
            if comp.text != "x":
                raise self._err(f"only 1-D launches are supported ({t.text}.{comp.text})", comp)
            if size_context:
                raise self._err("array sizes may only use integer parameters and literals", t)
            return A.Builtin(f"{t.text}.x", pos=pos)
        if t.kind == "name" and t.text in A.ELASTIC_BUILTINS:
            self.i += 1
            if size_context:
                raise self._err("array sizes may only use integer parameters and literals", t)
            return A.Builtin(t.text, pos=pos)
        n = self.name()
        if n.text == A.INDEX_TABLE:
            if size_context or static:
                raise self._err("index table reads are not allowed here", n)
            self.expect("[")
            idx = self.binary(0)
            self.expect("]")
            return A.Index(n.text, idx, pos=pos)
        kind = self.scope.lookup(n.text)
        if kind is None:
            raise self._err(f"unknown identifier {n.text!r}", n, UnknownIdentifier)
        if self.accept("["):
            if kind not in ("in", "out", "inout"):
                raise self._err(f"{n.text!r} is not an array", n)
            if size_context:
                raise self._err("array sizes may only use integer parameters and literals", n)
            if static:
                raise self._err("loop bounds may not read arrays", n, UnboundedLoop)
            idx = self.binary(0)
            self._ctx = (size_context, static)
            self.expect("]")
            return A.Index(n.text, idx, pos=pos)
        if kind in ("in", "out", "inout"):
            raise self._err(f"array {n.text!r} used without an index", n)
        if size_context and kind != "scalar":
            raise self._err("array sizes may only use integer parameters and literals", n)
        return A.Var(n.text, pos=pos)


def parse_kernel(source: str) -> A.Kernel:
    """Parse one kernel; raises :class:`DslError` subclasses with line/column."""
    return Parser(source).kernel()
