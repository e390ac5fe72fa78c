"""Trace emitter for mini programs.

The code shape follows unoptimized compiler output: every variable lives in
memory, each use reloads it into a fresh register, arrays are addressed with
GetElementPtr and every statement ends in a Store.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .model import (
    FILL_INDEX, INTRINSICS, ArrayArg, Assign, Bin, CallExpr, CallStmt, Const, Decl, Elem, Fill,
    InvalidProgram, MiniProgram, PtrAssign, Var, layout,
)

MAIN_FRAME = 0x7FFE_0000_0000
FRAME_STRIDE = 0x10000
HEAP_BASE = 0x1000_0000
WORD = 8
MAX_DEPTH = 4


@dataclass
class Sym:
    kind: str  # scalar, array, heap, opaque, pointer, pscalar, parray
    slot: int
    length: Optional[int] = None
    base: Optional[int] = None   # element base address (arrays / heap blocks)
    target: Optional["Sym"] = None  # pointer / array parameter: the array it refers to


@dataclass
class Layout:
    """Where main's variables ended up; lets tests map events back to names."""

    slots: dict = field(default_factory=dict)  # name -> slot address (the VarKey address)
    bases: dict = field(default_factory=dict)  # name -> element base address
    lengths: dict = field(default_factory=dict)


class _Frame:
    def __init__(self, function: str, depth: int):
        self.function = function
        self.depth = depth
        self.syms: dict[str, Sym] = {}
        self.counter = 0
        self.next_slot = MAIN_FRAME - depth * FRAME_STRIDE

    def reg(self) -> str:
        self.counter += 1
        return str(self.counter)

    def alloc(self, size: int) -> int:
        addr = self.next_slot
        self.next_slot += (size + 15) // 16 * 16
        return addr


def _hex(v: int) -> str:
    return f"{v:#x}"


class _Emitter:
    def __init__(self, program: MiniProgram):
        self.p = program
        self.out: list[str] = []
        self.dyn = 0
        self.heap = HEAP_BASE
        self.value = 0
        self.layout = Layout()

    # -- low level -------------------------------------------------------

    def block(self, frame: _Frame, line: int, opcode: str, operands) -> None:
        self.dyn += 1
        lines = [f"I|{self.dyn}|{frame.function}|{line}:1|{line}|{opcode}"]
        for slot, size, is_reg, name, value in operands:
            lines.append(f"O|{slot}|{size}|{int(is_reg)}|{name}|{value}")
        self.out.append("\n".join(lines) + "\n")

    def data(self) -> str:
        self.value += 1
        return str(self.value)

    @staticmethod
    def opnd(slot, v) -> tuple:
        """Operand tuple from an evaluated value ``("reg", name, value)`` / ``("const", value)``."""
        if v[0] == "reg":
            return (slot, 64, 1, v[1], v[2])
        return (slot, 64, 0, "", v[1])

    # -- symbols ---------------------------------------------------------

    def sym(self, frame: _Frame, name: str) -> Sym:
        s = frame.syms.get(name)
        if s is None:
            raise InvalidProgram(f"{name!r} is not visible in {frame.function}")
        return s

    def array_sym(self, frame: _Frame, name: str) -> Sym:
        s = self.sym(frame, name)
        if s.kind in ("array", "heap", "opaque"):
            return s
        if s.kind in ("pointer", "parray"):
            if s.target is None:
                raise InvalidProgram(f"pointer {name!r} used before assignment")
            return s.target
        raise InvalidProgram(f"{name!r} is not an array")

    def base_reg(self, frame: _Frame, name: str, line: int) -> tuple:
        """Register holding the element base of array ``name``: (reg, base, length)."""
        s = self.sym(frame, name)
        target = self.array_sym(frame, name)
        if s.kind == "array":
            return None, s.base, s.length
        r = frame.reg()
        self.block(frame, line, "Load", [(1, 64, 1, name, _hex(s.slot)),
                                         ("r", 64, 1, r, _hex(target.base))])
        return r, target.base, target.length

    def element_addr(self, frame: _Frame, name: str, index: int, line: int) -> tuple:
        base_r, base, length = self.base_reg(frame, name, line)
        if not isinstance(index, int) or not 0 <= index < length:
            raise InvalidProgram(f"index {index!r} out of range for {name!r}")
        addr = base + WORD * index
        r = frame.reg()
        if base_r is None:
            first = (1, 64, 1, name, _hex(self.sym(frame, name).slot))
        else:
            first = (1, 64, 1, base_r, _hex(base))
        self.block(frame, line, "GetElementPtr", [first, (2, 64, 0, "", str(index)),
                                                  ("r", 64, 1, r, _hex(addr))])
        return r, addr

    def array_address(self, frame: _Frame, name: str, line: int) -> tuple:
        """Register holding the address of array ``name`` (for calls and pointers)."""
        s = self.sym(frame, name)
        target = self.array_sym(frame, name)
        if s.kind == "array":
            r = frame.reg()
            self.block(frame, line, "GetElementPtr", [(1, 64, 1, name, _hex(s.slot)),
                                                      (2, 64, 0, "", "0"),
                                                      ("r", 64, 1, r, _hex(s.base))])
            return ("reg", r, _hex(s.base)), target
        r = frame.reg()
        self.block(frame, line, "Load", [(1, 64, 1, name, _hex(s.slot)),
                                         ("r", 64, 1, r, _hex(target.base))])
        return ("reg", r, _hex(target.base)), target

    # -- expressions -----------------------------------------------------

    def expr(self, frame: _Frame, e, line: int, k: Optional[int] = None) -> tuple:
        if isinstance(e, Const):
            return ("const", str(e.value))
        if isinstance(e, Var):
            s = self.sym(frame, e.name)
            if s.kind not in ("scalar", "pscalar"):
                raise InvalidProgram(f"{e.name!r} used as a scalar")
            r = frame.reg()
            v = self.data()
            self.block(frame, line, "Load", [(1, 64, 1, e.name, _hex(s.slot)), ("r", 64, 1, r, v)])
            return ("reg", r, v)
        if isinstance(e, Elem):
            index = e.index
            if index == FILL_INDEX:
                if k is None:
                    raise InvalidProgram("fill index outside a fill")
                index = k % self.array_sym(frame, e.name).length
            addr_r, addr = self.element_addr(frame, e.name, index, line)
            r = frame.reg()
            v = self.data()
            self.block(frame, line, "Load", [(1, 64, 1, addr_r, _hex(addr)), ("r", 64, 1, r, v)])
            return ("reg", r, v)
        if isinstance(e, Bin):
            left = self.expr(frame, e.left, line, k)
            right = self.expr(frame, e.right, line, k)
            r = frame.reg()
            v = self.data()
            self.block(frame, line, e.op, [self.opnd(1, left), self.opnd(2, right),
                                           ("r", 64, 1, r, v)])
            return ("reg", r, v)
        if isinstance(e, CallExpr):
            v = self.call(frame, e, line, k, need_value=True)
            return v
        if isinstance(e, ArrayArg):
            raise InvalidProgram("array reference outside a call")
        raise InvalidProgram(f"bad expression {e!r}")

    def call(self, frame: _Frame, c: CallExpr, line: int, k=None, need_value=False):
        if c.func in INTRINSICS:
            args = [self.expr(frame, a, line, k) for a in c.args]
            r = frame.reg()
            v = self.data()
            ops = [self.opnd(i + 1, a) for i, a in enumerate(args)]
            ops.append((len(args) + 1, 64, 1, c.func, "0x0"))
            ops.append(("r", 64, 1, r, v))
            self.block(frame, line, "Call", ops)
            return ("reg", r, v)
        f = self.p.function(c.func)
        if len(f.params) != len(c.args):
            raise InvalidProgram(f"{c.func} expects {len(f.params)} arguments")
        if need_value and f.ret is None:
            raise InvalidProgram(f"{c.func} returns nothing")
        if frame.depth + 1 > MAX_DEPTH:
            raise InvalidProgram("call depth exceeds limit")
        args, bound = [], []
        for param, a in zip(f.params, c.args):
            if param.array:
                if not isinstance(a, ArrayArg):
                    raise InvalidProgram(f"{c.func}.{param.name} takes an array")
                v, target = self.array_address(frame, a.name, line)
                args.append(v)
                bound.append(target)
            else:
                if not isinstance(a, (Var, Const)):
                    raise InvalidProgram(f"{c.func}.{param.name} takes a variable or constant")
                args.append(self.expr(frame, a, line, k))
                bound.append(None)
        ops = [self.opnd(i + 1, a) for i, a in enumerate(args)]
        ops.append((len(args) + 1, 64, 1, c.func, "0x0"))
        for param, a in zip(f.params, args):
            ops.append(("f", 64, 1, param.name, a[2] if a[0] == "reg" else a[1]))
        result = None
        if f.ret is not None:
            result = frame.reg()
            rv = self.data()
            ops.append(("r", 64, 1, result, rv))
        self.block(frame, line, "Call", ops)

        callee = _Frame(f.name, frame.depth + 1)
        for param, target in zip(f.params, bound):
            slot = callee.alloc(WORD)
            self.block(callee, f.line, "Alloca", [(1, 64, 0, "", str(WORD)),
                                                  ("r", 64, 1, param.name, _hex(slot))])
            if param.array:
                callee.syms[param.name] = Sym("parray", slot, target=target)
            else:
                callee.syms[param.name] = Sym("pscalar", slot)
        for d in f.locals:
            self.declare(callee, d, f.line)
        for s in f.body:
            if isinstance(s, Assign) and isinstance(s.target, Var):
                if callee.syms.get(s.target.name, Sym("", 0)).kind == "pscalar":
                    raise InvalidProgram("assignment to a by-value parameter")
            self.stmt(callee, s)
        if f.ret is not None:
            v = self.expr(callee, f.ret, f.ret_line)
            self.block(callee, f.ret_line, "Ret", [self.opnd(1, v)])
            return ("reg", result, rv)
        self.block(callee, f.ret_line, "Ret", [])
        return None

    # -- statements ------------------------------------------------------

    def declare(self, frame: _Frame, d: Decl, line: int) -> None:
        if d.name in frame.syms:
            raise InvalidProgram(f"{d.name!r} declared twice")
        if d.storage == "stack":
            size = WORD if d.length is None else WORD * d.length
            slot = frame.alloc(size)
            kind = "scalar" if d.length is None else "array"
            frame.syms[d.name] = Sym(kind, slot, d.length, None if d.length is None else slot)
        elif d.storage in ("heap", "opaque", "pointer"):
            if d.storage != "pointer" and not d.length:
                raise InvalidProgram(f"{d.name!r} needs a length")
            slot = frame.alloc(WORD)
            size = WORD
            frame.syms[d.name] = Sym(d.storage, slot, d.length)
        else:
            raise InvalidProgram(f"unknown storage {d.storage!r}")
        self.block(frame, line, "Alloca", [(1, 64, 0, "", str(size)),
                                           ("r", 64, 1, d.name, _hex(slot))])

    def allocate_heap(self, frame: _Frame, d: Decl, line: int) -> None:
        s = frame.syms[d.name]
        base = self.heap
        nbytes = WORD * d.length
        self.heap += (nbytes + 63) // 64 * 64 + 64
        s.base = base
        r = frame.reg()
        if d.storage == "heap":
            size_op = (1, 64, 0, "", str(nbytes))
        else:
            n = frame.reg()
            self.block(frame, line, "SExt", [(1, 32, 0, "", str(d.length)),
                                             ("r", 64, 1, n, str(nbytes))])
            size_op = (1, 64, 1, n, str(nbytes))
        self.block(frame, line, "Call", [size_op, (2, 64, 1, "malloc", "0x0"),
                                         ("r", 64, 1, r, _hex(base))])
        r2 = frame.reg()
        self.block(frame, line, "BitCast", [(1, 64, 1, r, _hex(base)),
                                            ("r", 64, 1, r2, _hex(base))])
        self.block(frame, line, "Store", [(1, 64, 1, r2, _hex(base)),
                                          (2, 64, 1, d.name, _hex(s.slot))])

    def store(self, frame: _Frame, target, value: tuple, line: int, k=None) -> None:
        if isinstance(target, Var):
            s = self.sym(frame, target.name)
            if s.kind != "scalar":
                raise InvalidProgram(f"cannot assign to {target.name!r}")
            dest = (2, 64, 1, target.name, _hex(s.slot))
        elif isinstance(target, Elem):
            index = target.index
            if index == FILL_INDEX:
                index = k
            r, addr = self.element_addr(frame, target.name, index, line)
            dest = (2, 64, 1, r, _hex(addr))
        else:
            raise InvalidProgram(f"bad assignment target {target!r}")
        self.block(frame, line, "Store", [self.opnd(1, value), dest])

    def stmt(self, frame: _Frame, s) -> None:
        line = s.line
        if isinstance(s, Assign):
            v = self.expr(frame, s.expr, line)
            self.store(frame, s.target, v, line)
        elif isinstance(s, Fill):
            target = self.array_sym(frame, s.array)
            for k in range(target.length):
                self.block(frame, line, "Br", [(1, 1, 0, "", "1")])
                v = self.expr(frame, s.expr, line, k)
                self.store(frame, Elem(s.array, k), v, line)
        elif isinstance(s, CallStmt):
            self.call(frame, s.call, line)
        elif isinstance(s, PtrAssign):
            ptr = self.sym(frame, s.pointer)
            if ptr.kind != "pointer":
                raise InvalidProgram(f"{s.pointer!r} is not a pointer")
            v, target = self.array_address(frame, s.source, line)
            if target.kind in ("heap", "opaque"):
                r = frame.reg()
                self.block(frame, line, "BitCast", [(1, 64, 1, v[1], v[2]),
                                                    ("r", 64, 1, r, v[2])])
                v = ("reg", r, v[2])
            self.block(frame, line, "Store", [self.opnd(1, v),
                                              (2, 64, 1, s.pointer, _hex(ptr.slot))])
            ptr.target = target
        else:
            raise InvalidProgram(f"bad statement {s!r}")

    def loop_test(self, frame: _Frame, ind: Sym, name: str, i: int, n: int, line: int) -> None:
        r = frame.reg()
        self.block(frame, line, "Load", [(1, 64, 1, name, _hex(ind.slot)), ("r", 64, 1, r, str(i))])
        c = frame.reg()
        self.block(frame, line, "ICmp", [(1, 64, 1, r, str(i)), (2, 64, 0, "", str(n)),
                                         ("r", 1, 1, c, str(int(i < n)))])
        self.block(frame, line, "Br", [(1, 1, 1, c, str(int(i < n)))])

    def program(self) -> str:
        p = self.p
        main = _Frame("main", 0)
        for d in p.decls:
            self.declare(main, d, d.line)
        for d in p.decls:
            if d.storage in ("heap", "opaque"):
                self.allocate_heap(main, d, d.line)
        for s in p.pre:
            self.stmt(main, s)
        loop = p.loop
        if loop.iterations < 1:
            raise InvalidProgram("loop needs at least one iteration")
        ind = self.sym(main, loop.induction)
        start = loop.start_line
        self.block(main, start, "Store", [(1, 64, 0, "", "0"),
                                          (2, 64, 1, loop.induction, _hex(ind.slot))])
        for i in range(loop.iterations):
            self.loop_test(main, ind, loop.induction, i, loop.iterations, start)
            for s in loop.body:
                self.stmt(main, s)
            r = main.reg()
            self.block(main, start, "Load", [(1, 64, 1, loop.induction, _hex(ind.slot)),
                                             ("r", 64, 1, r, str(i))])
            r2 = main.reg()
            self.block(main, start, "Add", [(1, 64, 1, r, str(i)), (2, 64, 0, "", "1"),
                                            ("r", 64, 1, r2, str(i + 1))])
            self.block(main, start, "Store", [(1, 64, 1, r2, str(i + 1)),
                                              (2, 64, 1, loop.induction, _hex(ind.slot))])
        self.loop_test(main, ind, loop.induction, loop.iterations, loop.iterations, start)
        for s in p.post:
            self.stmt(main, s)
        self.block(main, p.exit_line, "Ret", [(1, 32, 0, "", "0")])
        for name, s in main.syms.items():
            self.layout.slots[name] = s.slot
            if s.base is not None:
                self.layout.bases[name] = s.base
                self.layout.lengths[name] = s.length
        return "\n".join(self.out)


def emit_program(p: MiniProgram) -> tuple[str, Layout]:
    """Trace text plus the address layout of main's variables."""
    em = _Emitter(layout(p))
    text = em.program()
    return text, em.layout


def emit_trace(p: MiniProgram) -> bytes:
    return emit_program(p)[0].encode("utf-8")
