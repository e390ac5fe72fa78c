"""Reference interpreter: walks a mini program directly, without any trace.

It records which of main's variables each region references and the
element-level Read/Write log of the loop, then classifies with the same
definitions the analyzer uses.  Callee locals are tracked only as far as
needed to know that they are not main variables.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .model import (
    FILL_INDEX, INTRINSICS, ArrayArg, Assign, Bin, CallExpr, CallStmt, Const, Elem, Fill,
    InvalidProgram, MiniProgram, PtrAssign, Var, layout,
)

MAX_DEPTH = 4

# A reference to an array is ("main", name) or ("local", id); elements are
# addressed by index.  Scalars are arrays of length one.


@dataclass
class OracleResult:
    mli: list                                  # main names, first-use order inside the loop
    patterns: dict                             # name -> pattern string (includes the induction var)
    events: list = field(default_factory=list)  # loop log: (kind, name, index, line)
    touched_before: set = field(default_factory=set)
    touched_inside: set = field(default_factory=set)


class _Interp:
    def __init__(self, p: MiniProgram):
        self.p = p
        self.main_kind: dict[str, str] = {}
        self.lengths: dict = {}
        self.pointers: dict[str, Optional[tuple]] = {}
        self.events: Optional[list] = None
        self.touched: Optional[dict] = None
        self.depth = 0
        self.next_local = 0
        for d in p.decls:
            if d.name in self.main_kind:
                raise InvalidProgram(f"{d.name!r} declared twice")
            if d.storage == "pointer":
                self.main_kind[d.name] = "pointer"
                self.pointers[d.name] = None
            else:
                self.main_kind[d.name] = "scalar" if d.length is None else "array"
                self.lengths[("main", d.name)] = 1 if d.length is None else d.length

    # scope: name -> ("main", kind) | ("local", ref, kind) | ("pscalar", ref|None) | ("parray", ref)
    def main_scope(self) -> dict:
        return {name: ("main", kind) for name, kind in self.main_kind.items()}

    def touch(self, ref) -> None:
        if self.touched is not None and ref is not None and ref[0] == "main":
            self.touched.setdefault(ref[1], None)

    def scalar_ref(self, scope, name):
        entry = scope.get(name)
        if entry is None:
            raise InvalidProgram(f"{name!r} not visible")
        if entry[0] == "main":
            if entry[1] != "scalar":
                raise InvalidProgram(f"{name!r} used as a scalar")
            return ("main", name)
        if entry[0] == "local":
            if entry[2] != "scalar":
                raise InvalidProgram(f"{name!r} used as a scalar")
            return entry[1]
        if entry[0] == "pscalar":
            return entry[1]
        raise InvalidProgram(f"{name!r} used as a scalar")

    def array_ref(self, scope, name):
        entry = scope.get(name)
        if entry is None:
            raise InvalidProgram(f"{name!r} not visible")
        if entry[0] == "main":
            if entry[1] == "array":
                return ("main", name)
            if entry[1] == "pointer":
                target = self.pointers[name]
                if target is None:
                    raise InvalidProgram(f"pointer {name!r} used before assignment")
                return target
        elif entry[0] == "local" and entry[2] == "array":
            return entry[1]
        elif entry[0] == "parray":
            return entry[1]
        raise InvalidProgram(f"{name!r} is not an array")

    def check(self, ref, index: int) -> None:
        if not isinstance(index, int) or not 0 <= index < self.lengths[ref]:
            raise InvalidProgram(f"index {index!r} out of range")

    def log(self, kind: str, ref, index: int, line: int) -> None:
        if self.events is not None and ref is not None and ref[0] == "main":
            self.events.append((kind, ref[1], index, line))

    # -- evaluation: returns the (ref, index) elements whose values are read

    def eval(self, scope, e, k=None) -> list:
        if isinstance(e, Const):
            return []
        if isinstance(e, Var):
            ref = self.scalar_ref(scope, e.name)
            self.touch(ref)
            return [] if ref is None else [(ref, 0)]
        if isinstance(e, Elem):
            ref = self.array_ref(scope, e.name)
            index = e.index
            if index == FILL_INDEX:
                if k is None:
                    raise InvalidProgram("fill index outside a fill")
                index = k % self.lengths[ref]
            self.check(ref, index)
            self.touch(ref)
            return [(ref, index)]
        if isinstance(e, Bin):
            return self.eval(scope, e.left, k) + self.eval(scope, e.right, k)
        if isinstance(e, CallExpr):
            return self.call(scope, e, k, need_value=True)
        raise InvalidProgram(f"bad expression {e!r}")

    def call(self, scope, c: CallExpr, k=None, need_value=False) -> list:
        if c.func in INTRINSICS:
            out = []
            for a in c.args:
                out += self.eval(scope, a, k)
            return out
        f = self.p.function(c.func)
        if len(f.params) != len(c.args):
            raise InvalidProgram(f"{c.func} expects {len(f.params)} arguments")
        if need_value and f.ret is None:
            raise InvalidProgram(f"{c.func} returns nothing")
        if self.depth + 1 > MAX_DEPTH:
            raise InvalidProgram("call depth exceeds limit")
        callee: dict = {}
        for param, a in zip(f.params, c.args):
            if param.array:
                if not isinstance(a, ArrayArg):
                    raise InvalidProgram(f"{c.func}.{param.name} takes an array")
                ref = self.array_ref(scope, a.name)
                self.touch(ref)
                callee[param.name] = ("parray", ref)
            elif isinstance(a, Var):
                ref = self.scalar_ref(scope, a.name)
                self.touch(ref)
                callee[param.name] = ("pscalar", ref)
            elif isinstance(a, Const):
                callee[param.name] = ("pscalar", None)
            else:
                raise InvalidProgram(f"{c.func}.{param.name} takes a variable or constant")
        for d in f.locals:
            if d.name in callee:
                raise InvalidProgram(f"{d.name!r} declared twice")
            self.next_local += 1
            ref = ("local", self.next_local)
            self.lengths[ref] = 1 if d.length is None else d.length
            callee[d.name] = ("local", ref, "scalar" if d.length is None else "array")
        self.depth += 1
        saved, self.touched = self.touched, None  # helpers' bodies are not loop references
        try:
            for s in f.body:
                if isinstance(s, Assign) and isinstance(s.target, Var):
                    if callee.get(s.target.name, ("",))[0] == "pscalar":
                        raise InvalidProgram("assignment to a by-value parameter")
                self.stmt(callee, s)
            reads = self.eval(callee, f.ret) if f.ret is not None else []
        finally:
            self.touched = saved
            self.depth -= 1
        return reads

    def assign(self, scope, target, reads: list, line: int, k=None) -> None:
        if isinstance(target, Var):
            entry = scope.get(target.name)
            if entry is None or entry[0] == "pscalar":
                raise InvalidProgram(f"cannot assign to {target.name!r}")
            ref = self.scalar_ref(scope, target.name)
            index = 0
        elif isinstance(target, Elem):
            ref = self.array_ref(scope, target.name)
            index = k if target.index == FILL_INDEX else target.index
            self.check(ref, index)
        else:
            raise InvalidProgram(f"bad target {target!r}")
        self.touch(ref)
        seen = sorted({(r[1], i) for r, i in reads if r is not None and r[0] == "main"})
        for name, i in seen:
            self.log("Read", ("main", name), i, line)
        self.log("Write", ref, index, line)

    def stmt(self, scope, s) -> None:
        if isinstance(s, Assign):
            reads = self.eval(scope, s.expr)
            self.assign(scope, s.target, reads, s.line)
        elif isinstance(s, Fill):
            ref = self.array_ref(scope, s.array)
            for k in range(self.lengths[ref]):
                reads = self.eval(scope, s.expr, k)
                self.assign(scope, Elem(s.array, k), reads, s.line, k)
        elif isinstance(s, CallStmt):
            self.call(scope, s.call)
        elif isinstance(s, PtrAssign):
            if self.main_kind.get(s.pointer) != "pointer" or s.pointer not in scope:
                raise InvalidProgram(f"{s.pointer!r} is not a pointer")
            ref = self.array_ref(scope, s.source)
            self.touch(ref)
            self.pointers[s.pointer] = ref
        else:
            raise InvalidProgram(f"bad statement {s!r}")


def _classify(accesses: dict, length: Optional[int]) -> str:
    """Same decision procedure as the analyzer, on element indices."""
    has_read = has_write = False
    first_read = None
    for index, lst in accesses.items():
        if lst[0][1] == "Read" and any(kind == "Write" for _, kind in lst[1:]):
            return "WAR"
        for seq, kind in lst:
            if kind == "Read":
                has_read = True
                first_read = seq if first_read is None else min(first_read, seq)
            else:
                has_write = True
    if has_write and not has_read:
        return "Outcome"
    if not has_write:
        return "NotCritical"
    if length is None:
        return "RAPO"
    written = {i for i, lst in accesses.items() for seq, kind in lst
               if kind == "Write" and seq < first_read}
    return "NotCritical" if written >= set(range(length)) else "RAPO"


def oracle(p: MiniProgram) -> OracleResult:
    p = layout(p)
    it = _Interp(p)
    scope = it.main_scope()
    before: dict = {}
    it.touched = before
    for s in p.pre:
        it.stmt(scope, s)
    inside: dict = {}
    it.touched = inside
    events: list = []
    it.events = events
    loop = p.loop
    if loop.iterations < 1:
        raise InvalidProgram("loop needs at least one iteration")
    if it.main_kind.get(loop.induction) != "scalar":
        raise InvalidProgram("induction variable must be a main scalar")
    inside.setdefault(loop.induction, None)
    counter = ("main", loop.induction)
    it.log("Write", counter, 0, loop.start_line)
    for _ in range(loop.iterations):
        for s in loop.body:
            if isinstance(s, Assign) and s.target == Var(loop.induction):
                raise InvalidProgram("loop body writes the induction variable")
            it.stmt(scope, s)
        it.log("Read", counter, 0, loop.start_line)
        it.log("Write", counter, 0, loop.start_line)
    it.events = None
    it.touched = None
    for s in p.post:
        it.stmt(scope, s)

    mli = [name for name in inside if name in before]
    opaque = {d.name for d in p.decls if d.storage == "opaque"}
    accesses: dict = {}
    for seq, (kind, name, index, _) in enumerate(events):
        accesses.setdefault(name, {}).setdefault(index, []).append((seq, kind))
    patterns = {}
    for name in mli:
        if name == loop.induction:
            patterns[name] = "Index"
        elif name in accesses:
            length = None if name in opaque else it.lengths[("main", name)]
            patterns[name] = _classify(accesses[name], length)
        else:
            patterns[name] = "NotCritical"
    patterns[loop.induction] = "Index"
    return OracleResult(mli, patterns, events, set(before), set(inside))
