"""A miniature loop-program language used to generate traces and expected results.

Programs have a ``main`` with declarations, straight-line statements before
the loop, one counted loop, and statements after it.  Helper functions take
scalars by value or arrays by reference and may declare locals.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional, Union

INTRINSICS = frozenset({"sqrt", "fabs", "exp", "pow", "printf"})
BIN_OPS = ("Add", "FAdd", "Sub", "FSub", "Mul", "FMul", "UDiv", "SDiv", "FDiv")
STORAGE = ("stack", "heap", "opaque", "pointer")
FILL_INDEX = "k"


class InvalidProgram(ValueError):
    pass


@dataclass(frozen=True)
class Const:
    value: Union[int, float]


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Elem:
    name: str
    index: Union[int, str]  # constant, or FILL_INDEX inside a Fill


@dataclass(frozen=True)
class ArrayArg:
    """An array (or pointer) passed by reference to a helper function."""

    name: str


@dataclass(frozen=True)
class Bin:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class CallExpr:
    func: str
    args: tuple = ()


Expr = Union[Const, Var, Elem, ArrayArg, Bin, CallExpr]


@dataclass(frozen=True)
class Assign:
    target: Union[Var, Elem]
    expr: Expr
    line: Optional[int] = None


@dataclass(frozen=True)
class Fill:
    """``array[k] = expr`` for every element k; ``Elem(x, "k")`` reads x[k % len(x)]."""

    array: str
    expr: Expr
    line: Optional[int] = None


@dataclass(frozen=True)
class CallStmt:
    call: CallExpr
    line: Optional[int] = None


@dataclass(frozen=True)
class PtrAssign:
    pointer: str
    source: str
    line: Optional[int] = None


Stmt = Union[Assign, Fill, CallStmt, PtrAssign]


@dataclass(frozen=True)
class Decl:
    """A variable.  ``length`` None means scalar.

    ``storage``: ``stack`` (sized allocation), ``heap`` (allocated by a call
    with a constant size), ``opaque`` (heap block whose size never appears
    as a constant) or ``pointer`` (holds the address of another array).
    """

    name: str
    length: Optional[int] = None
    storage: str = "stack"
    line: Optional[int] = None


@dataclass(frozen=True)
class Param:
    name: str
    array: bool = False


@dataclass(frozen=True)
class Function:
    name: str
    params: tuple = ()
    locals: tuple = ()
    body: tuple = ()
    ret: Optional[Expr] = None
    line: Optional[int] = None
    ret_line: Optional[int] = None


@dataclass(frozen=True)
class Loop:
    induction: str = "it"
    iterations: int = 1
    body: tuple = ()
    start_line: Optional[int] = None
    end_line: Optional[int] = None


@dataclass(frozen=True)
class MiniProgram:
    decls: tuple = ()
    pre: tuple = ()
    loop: Loop = field(default_factory=Loop)
    post: tuple = ()
    functions: tuple = ()
    main_line: Optional[int] = None
    exit_line: Optional[int] = None

    def function(self, name: str) -> Function:
        for f in self.functions:
            if f.name == name:
                return f
        raise InvalidProgram(f"unknown function {name!r}")

    def decl(self, name: str) -> Optional[Decl]:
        for d in self.decls:
            if d.name == name:
                return d
        return None

    def statement_count(self) -> int:
        return (len(self.pre) + len(self.loop.body) + len(self.post)
                + sum(len(f.body) for f in self.functions))


def with_induction(p: MiniProgram) -> MiniProgram:
    """Declare the induction variable if the program does not."""
    if p.decl(p.loop.induction) is not None:
        return p
    return dataclasses.replace(p, decls=p.decls + (Decl(p.loop.induction),))


def layout(p: MiniProgram) -> MiniProgram:
    """Fill in missing line numbers: helpers first, then main top to bottom."""
    line = 0

    def nxt(current):
        nonlocal line
        if current is None:
            line += 1
            return line
        line = max(line, current)
        return current

    functions = []
    for f in p.functions:
        head = nxt(f.line)
        body = tuple(dataclasses.replace(s, line=nxt(s.line)) for s in f.body)
        functions.append(dataclasses.replace(f, line=head, body=body, ret_line=nxt(f.ret_line)))
    p = with_induction(p)
    main_line = nxt(p.main_line)
    decls = tuple(dataclasses.replace(d, line=nxt(d.line)) for d in p.decls)
    pre = tuple(dataclasses.replace(s, line=nxt(s.line)) for s in p.pre)
    start = nxt(p.loop.start_line)
    body = tuple(dataclasses.replace(s, line=nxt(s.line)) for s in p.loop.body)
    end = p.loop.end_line if p.loop.end_line is not None else line
    line = max(line, end)
    loop = dataclasses.replace(p.loop, start_line=start, end_line=end, body=body)
    post = tuple(dataclasses.replace(s, line=nxt(s.line)) for s in p.post)
    exit_line = nxt(p.exit_line)
    return dataclasses.replace(p, functions=tuple(functions), main_line=main_line, decls=decls,
                               pre=pre, loop=loop, post=post, exit_line=exit_line)


# -- JSON fixture format -------------------------------------------------------

def expr_to_json(e: Expr):
    if isinstance(e, Const):
        return ["const", e.value]
    if isinstance(e, Var):
        return ["var", e.name]
    if isinstance(e, Elem):
        return ["elem", e.name, e.index]
    if isinstance(e, ArrayArg):
        return ["array", e.name]
    if isinstance(e, Bin):
        return ["bin", e.op, expr_to_json(e.left), expr_to_json(e.right)]
    if isinstance(e, CallExpr):
        return ["call", e.func, [expr_to_json(a) for a in e.args]]
    raise InvalidProgram(f"not an expression: {e!r}")


def expr_from_json(j) -> Expr:
    tag = j[0]
    if tag == "const":
        return Const(j[1])
    if tag == "var":
        return Var(j[1])
    if tag == "elem":
        return Elem(j[1], j[2])
    if tag == "array":
        return ArrayArg(j[1])
    if tag == "bin":
        return Bin(j[1], expr_from_json(j[2]), expr_from_json(j[3]))
    if tag == "call":
        return CallExpr(j[1], tuple(expr_from_json(a) for a in j[2]))
    raise InvalidProgram(f"unknown expression tag {tag!r}")


def stmt_to_json(s: Stmt) -> dict:
    if isinstance(s, Assign):
        d = {"assign": expr_to_json(s.target), "expr": expr_to_json(s.expr)}
    elif isinstance(s, Fill):
        d = {"fill": s.array, "expr": expr_to_json(s.expr)}
    elif isinstance(s, CallStmt):
        d = {"call": expr_to_json(s.call)}
    elif isinstance(s, PtrAssign):
        d = {"pointer": s.pointer, "source": s.source}
    else:
        raise InvalidProgram(f"not a statement: {s!r}")
    if s.line is not None:
        d["line"] = s.line
    return d


def stmt_from_json(d: dict) -> Stmt:
    line = d.get("line")
    if "assign" in d:
        return Assign(expr_from_json(d["assign"]), expr_from_json(d["expr"]), line)
    if "fill" in d:
        return Fill(d["fill"], expr_from_json(d["expr"]), line)
    if "call" in d:
        return CallStmt(expr_from_json(d["call"]), line)
    if "pointer" in d:
        return PtrAssign(d["pointer"], d["source"], line)
    raise InvalidProgram(f"unknown statement {d!r}")


def _decl_json(d: Decl) -> dict:
    out = {"name": d.name}
    if d.length is not None:
        out["length"] = d.length
    if d.storage != "stack":
        out["storage"] = d.storage
    if d.line is not None:
        out["line"] = d.line
    return out


def to_json(p: MiniProgram) -> dict:
    return {
        "functions": [
            {
                "name": f.name,
                "params": [{"name": q.name, "array": q.array} for q in f.params],
                "locals": [_decl_json(d) for d in f.locals],
                "body": [stmt_to_json(s) for s in f.body],
                "ret": None if f.ret is None else expr_to_json(f.ret),
                "line": f.line,
                "ret_line": f.ret_line,
            }
            for f in p.functions
        ],
        "main_line": p.main_line,
        "decls": [_decl_json(d) for d in p.decls],
        "pre": [stmt_to_json(s) for s in p.pre],
        "loop": {
            "induction": p.loop.induction,
            "iterations": p.loop.iterations,
            "start_line": p.loop.start_line,
            "end_line": p.loop.end_line,
            "body": [stmt_to_json(s) for s in p.loop.body],
        },
        "post": [stmt_to_json(s) for s in p.post],
        "exit_line": p.exit_line,
    }


def from_json(d: dict) -> MiniProgram:
    def decl(x):
        return Decl(x["name"], x.get("length"), x.get("storage", "stack"), x.get("line"))

    functions = tuple(
        Function(
            f["name"],
            tuple(Param(q["name"], q.get("array", False)) for q in f.get("params", [])),
            tuple(decl(x) for x in f.get("locals", [])),
            tuple(stmt_from_json(s) for s in f.get("body", [])),
            None if f.get("ret") is None else expr_from_json(f["ret"]),
            f.get("line"),
            f.get("ret_line"),
        )
        for f in d.get("functions", [])
    )
    lp = d["loop"]
    loop = Loop(lp.get("induction", "it"), lp.get("iterations", 1),
                tuple(stmt_from_json(s) for s in lp.get("body", [])),
                lp.get("start_line"), lp.get("end_line"))
    return MiniProgram(
        tuple(decl(x) for x in d.get("decls", [])),
        tuple(stmt_from_json(s) for s in d.get("pre", [])),
        loop,
        tuple(stmt_from_json(s) for s in d.get("post", [])),
        functions,
        d.get("main_line"),
        d.get("exit_line"),
    )


def dumps(p: MiniProgram) -> str:
    return json.dumps(to_json(p), indent=1) + "\n"


def loads(text: str) -> MiniProgram:
    return from_json(json.loads(text))


def load(path) -> MiniProgram:
    with open(path) as fh:
        return loads(fh.read())
