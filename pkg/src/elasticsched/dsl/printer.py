"""Canonical source printer; output re-parses to an equal AST."""

from __future__ import annotations

from . import ast as A

_PREC = {"||": 1, "&&": 2, "==": 3, "!=": 3, "<": 4, "<=": 4, ">": 4, ">=": 4,
         "+": 5, "-": 5, "*": 6, "/": 6, "%": 6}
_UNARY_PREC = 7


def expr_str(e, parent_prec: int = 0, right: bool = False) -> str:
    if isinstance(e, A.Num):
        s = str(e.value)
        # a negative literal cannot come out of the parser; keep it explicit
        return f"({s})" if e.value < 0 else s
    if isinstance(e, (A.Var, A.Builtin)):
        return e.name
    if isinstance(e, A.Index):
        return f"{e.array}[{expr_str(e.index)}]"
    if isinstance(e, A.Unary):
        s = f"{e.op}{expr_str(e.operand, _UNARY_PREC)}"
        return f"({s})" if parent_prec > _UNARY_PREC else s
    if isinstance(e, A.Binary):
        p = _PREC[e.op]
        # left-associative: a right operand at equal precedence needs parens,
        # and comparisons never chain
        s = f"{expr_str(e.left, p + (p in (3, 4)))} {e.op} {expr_str(e.right, p + 1)}"
        return f"({s})" if p < parent_prec else s
    raise TypeError(f"not an expression: {e!r}")


def _stmts(stmts, indent, out):
    for s in stmts:
        _stmt(s, indent, out)


def _stmt(s, indent, out):
    pad = "  " * indent
    if isinstance(s, A.Let):
        out.append(f"{pad}let {s.name} = {expr_str(s.value)};")
    elif isinstance(s, A.Assign):
        out.append(f"{pad}{s.name} = {expr_str(s.value)};")
    elif isinstance(s, A.Store):
        out.append(f"{pad}{s.array}[{expr_str(s.index)}] = {expr_str(s.value)};")
    elif isinstance(s, A.If):
        out.append(f"{pad}if ({expr_str(s.cond)}) {{")
        _stmts(s.then, indent + 1, out)
        node = s
        while node.orelse:
            if len(node.orelse) == 1 and isinstance(node.orelse[0], A.If):
                node = node.orelse[0]
                out.append(f"{pad}}} else if ({expr_str(node.cond)}) {{")
                _stmts(node.then, indent + 1, out)
            else:
                out.append(f"{pad}}} else {{")
                _stmts(node.orelse, indent + 1, out)
                break
        out.append(f"{pad}}}")
    elif isinstance(s, A.For):
        cmp = "<=" if s.inclusive else "<"
        out.append(f"{pad}for ({s.var} = {expr_str(s.start)}; {s.var} {cmp} {expr_str(s.bound)}; "
                   f"{s.var} += {expr_str(s.step)}) {{")
        _stmts(s.body, indent + 1, out)
        out.append(f"{pad}}}")
    else:
        raise TypeError(f"not a statement: {s!r}")


def _param(p: A.Param) -> str:
    if p.kind == "int":
        return f"int {p.name}"
    return f"{p.kind} {p.name}[{expr_str(p.size)}]"


def print_kernel(k: A.Kernel) -> str:
    out = [f"kernel {k.name}({', '.join(_param(p) for p in k.params)}) {{"]
    _stmts(k.body, 1, out)
    out.append("}")
    return "\n".join(out) + "\n"
