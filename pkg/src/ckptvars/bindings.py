"""Register/variable bindings, call frames and pointer state.

:class:`Tracker` replays instructions in execution order and keeps, per call
frame, which variable every temporary register currently holds.  Both the
collection pass (``preprocess``) and the dependency-graph builder (``ddg``)
drive a tracker; the builder also routes the edges it reports into its graph.

Registers are identified by ``(function, name, dyn_id)`` so that a name reused
later (SSA reload, a second activation of the same function) never aliases an
earlier value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Union

from .trace import ARITHMETIC, Opcode, Operand, TraceInstruction

ALLOC_FUNCTIONS = frozenset({"malloc", "calloc", "realloc", "aligned_alloc"})


class VarKey(NamedTuple):
    """A program variable: its memory address plus source-level name."""

    address: int
    name: str

    def __str__(self) -> str:
        return f"{self.name}@{self.address:#x}"


class Reg(NamedTuple):
    function: str
    name: str
    dyn_id: int

    def __str__(self) -> str:
        return f"%{self.name}#{self.dyn_id}"


class ParamSlot(NamedTuple):
    function: str
    name: str
    dyn_id: int
    tag: str = "param"  # keeps a slot from comparing equal to a same-named Reg

    def __str__(self) -> str:
        return f"{self.function}.{self.name}#{self.dyn_id}"


Vertex = Union[VarKey, Reg, ParamSlot]


class Temp:
    """Value held by one temporary register.

    ``var`` set and ``is_address`` false: the register holds the value of
    element ``elem`` of ``var`` (a reg-var entry).  ``is_address`` true: it
    holds an address into ``var``.  Otherwise the value was computed from
    ``inputs`` (a reg-reg entry).
    """

    __slots__ = ("vertex", "var", "elem", "width", "is_address", "inputs", "heap")

    def __init__(self, vertex, var=None, elem=None, width=8, is_address=False,
                 inputs=(), heap=None):
        self.vertex = vertex
        self.var = var
        self.elem = elem
        self.width = width
        self.is_address = is_address
        self.inputs = inputs
        self.heap = heap

    def __repr__(self) -> str:
        kind = "addr" if self.is_address else "val"
        return f"Temp({self.vertex}, {self.var}, {kind})"


@dataclass(slots=True)
class ParamBinding:
    arg: Optional[Temp]
    slot: ParamSlot


@dataclass(slots=True)
class Frame:
    function: str
    call: Optional[TraceInstruction] = None
    regs: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)


class RegVarBinding:
    """Stack of per-call binding tables; lookups hit the top frame only."""

    def __init__(self, function: str = ""):
        self.frames: list[Frame] = [Frame(function)]

    @property
    def top(self) -> Frame:
        return self.frames[-1]

    @property
    def depth(self) -> int:
        return len(self.frames) - 1

    def push(self, function: str, call: TraceInstruction) -> Frame:
        frame = Frame(function, call)
        self.frames.append(frame)
        return frame

    def pop(self) -> Frame:
        return self.frames.pop()

    def reset(self, function: str) -> None:
        self.frames = [Frame(function)]

    def lookup(self, name: str) -> Optional[Temp]:
        return self.frames[-1].regs.get(name)

    def bind(self, name: str, temp: Temp) -> None:
        self.frames[-1].regs[name] = temp

    def var_of(self, name: str) -> Optional[VarKey]:
        temp = self.lookup(name)
        if temp is None:
            return None
        if temp.var is None:
            binding = self.frames[-1].params.get(name)
            if binding is not None and binding.arg is not None:
                return binding.arg.var
        return temp.var

    def param_var(self, name: str) -> Optional[VarKey]:
        binding = self.frames[-1].params.get(name)
        if binding is None or binding.arg is None:
            return None
        return binding.arg.var

    def copy(self) -> "RegVarBinding":
        clone = RegVarBinding()
        clone.frames = [
            Frame(f.function, f.call, dict(f.regs), dict(f.params)) for f in self.frames
        ]
        return clone


@dataclass(slots=True)
class LocalEntry:
    name: str
    function: str
    size: Optional[int]
    line: int
    dyn_id: int


class LocalRegistry:
    """Variables allocated by ``Alloca``: address -> every allocation seen there."""

    def __init__(self):
        self.locals: dict[int, list[LocalEntry]] = {}

    def record(self, address: int, entry: LocalEntry) -> None:
        self.locals.setdefault(address, []).append(entry)

    def lookup(self, address: int) -> Optional[LocalEntry]:
        entries = self.locals.get(address)
        return entries[-1] if entries else None

    def first(self, key: VarKey) -> Optional[LocalEntry]:
        for entry in self.locals.get(key.address, ()):
            if entry.name == key.name:
                return entry
        return None

    def __contains__(self, address: int) -> bool:
        return address in self.locals

    def __len__(self) -> int:
        return sum(len(v) for v in self.locals.values())

    def copy(self) -> "LocalRegistry":
        clone = LocalRegistry()
        clone.locals = {k: list(v) for k, v in self.locals.items()}
        return clone


@dataclass
class MemoryState:
    """Pointer variables and allocation extents observed so far."""

    aliases: dict = field(default_factory=dict)      # pointer VarKey -> target VarKey
    heap_owners: dict = field(default_factory=dict)  # pointer VarKey -> (base, size | None)
    registry: LocalRegistry = field(default_factory=LocalRegistry)
    indexed: set = field(default_factory=set)        # variables addressed through GEP

    def resolve(self, key: VarKey) -> VarKey:
        return self.aliases.get(key, key)

    def forget(self, key: VarKey) -> None:
        self.aliases.pop(key, None)
        self.heap_owners.pop(key, None)

    def extent(self, key: VarKey) -> Optional[tuple[int, Optional[int]]]:
        """``(base, size_bytes)``; size ``None`` when the allocation size is unknown.

        Returns ``None`` when nothing is known about the variable's storage.
        """
        heap = self.heap_owners.get(key)
        if heap is not None:
            return heap
        entry = self.registry.first(key)
        if entry is not None and entry.size is not None:
            return key.address, entry.size
        return None

    def copy(self) -> "MemoryState":
        return MemoryState(dict(self.aliases), dict(self.heap_owners),
                           self.registry.copy(), set(self.indexed))


@dataclass(frozen=True, slots=True)
class StoreEffect:
    """A value store: ``dest`` element ``elem`` written from ``reads``."""

    dest: VarKey
    elem: int
    width: int
    reads: tuple  # ((VarKey, elem, width), ...)
    value: Optional[Temp]


def _is_temp_name(name: str) -> bool:
    return name.isdigit()


def _int(value) -> int:
    return value if type(value) is int else int(value)


class Tracker:
    """Replays instructions, maintaining bindings, frames and pointer state.

    ``on_access(var, ins)`` fires whenever an instruction reads, addresses or
    writes a variable (pointer assignments excluded).  Every dependency edge
    ``(source, target, dyn_id)`` is passed to ``edge_sink`` when one is set;
    ``record_edges`` installs a sink that appends to :attr:`edges`.
    """

    def __init__(self, function: str = "", memory: MemoryState | None = None,
                 record_edges: bool = False):
        self.binding = RegVarBinding(function)
        self.memory = memory if memory is not None else MemoryState()
        self.warnings: list[str] = []
        self.edges: list | None = [] if record_edges else None
        self.edge_sink: Callable | None = None
        if self.edges is not None:
            self.edge_sink = lambda u, v, t, out=self.edges: out.append((u, v, t))
        self.on_access: Callable[[VarKey, TraceInstruction], None] | None = None
        self._started = bool(function)
        self._dispatch = {
            Opcode.LOAD: self._load,
            Opcode.GEP: self._gep,
            Opcode.BITCAST: self._bitcast,
            Opcode.ALLOCA: self._alloca,
            Opcode.CALL: self._call,
            Opcode.RET: self._ret,
            Opcode.OTHER: self._other,
        }
        for op in ARITHMETIC:
            self._dispatch[op] = self._arith

    def copy(self, record_edges: bool | None = None) -> "Tracker":
        rec = self.edges is not None if record_edges is None else record_edges
        clone = Tracker(memory=self.memory.copy(), record_edges=rec)
        clone.binding = self.binding.copy()
        clone._started = self._started
        return clone

    # -- helpers ---------------------------------------------------------

    def _warn(self, msg: str) -> None:
        self.warnings.append(msg)

    def _edge(self, src, dst, t: int) -> None:
        sink = self.edge_sink
        if sink is not None:
            sink(src, dst, t)

    def _touch(self, var: VarKey, ins: TraceInstruction) -> None:
        if self.on_access is not None:
            self.on_access(var, ins)

    def _new(self, ins: TraceInstruction, res: Operand, **kw) -> Temp:
        temp = Temp(Reg(ins.function, res.name, ins.dyn_id), **kw)
        self.binding.bind(res.name, temp)
        return temp

    def operand_temp(self, op: Operand, ins: TraceInstruction) -> Optional[Temp]:
        """Temp for a consumed register operand, or ``None`` (with a warning)."""
        temp = self.binding.lookup(op.name)
        if temp is None:
            self._warn(f"UnboundRegister: %{op.name} in {ins.function} (dyn {ins.dyn_id})")
        return temp

    def _param_load(self, pb: ParamBinding, ins, res) -> Temp:
        arg = pb.arg
        if arg.var is not None:
            temp = self._new(ins, res, var=arg.var, elem=arg.elem, width=arg.width,
                             is_address=arg.is_address, heap=arg.heap)
            self._touch(arg.var, ins)
        else:
            temp = self._new(ins, res, is_address=arg.is_address, inputs=(arg,), heap=arg.heap)
        self._edge(pb.slot, temp.vertex, ins.dyn_id)
        return temp

    def _named(self, op: Operand) -> VarKey:
        return VarKey(_int(op.value), op.name)

    # -- dispatch --------------------------------------------------------

    def step(self, ins: TraceInstruction, nxt: TraceInstruction | None = None):
        """Apply one instruction; returns a :class:`StoreEffect` for value stores."""
        if not self._started:
            self.binding.top.function = ins.function
            self._started = True
        if ins.opcode is Opcode.STORE:
            return self._store(ins)
        handler = self._dispatch.get(ins.opcode)
        if ins.opcode is Opcode.CALL or ins.opcode is Opcode.RET:
            handler(ins, nxt)
        elif handler is not None:
            handler(ins)
        return None

    def _load(self, ins: TraceInstruction) -> None:
        src, res = ins.operand(1), ins.result
        if src is None or res is None:
            self._warn(f"malformed Load at dyn {ins.dyn_id}")
            return
        width = max(res.size_bits // 8, 1)
        if src.is_register:
            temp = self.binding.lookup(src.name)
            if temp is not None:
                if temp.var is not None:
                    t = self._new(ins, res, var=temp.var, elem=_int(src.value), width=width,
                                  inputs=(temp,))
                    self._touch(temp.var, ins)
                else:
                    t = self._new(ins, res, inputs=(temp,), width=width)
                self._edge(temp.vertex, t.vertex, ins.dyn_id)
                return
            pb = self.binding.top.params.get(src.name)
            if pb is not None and pb.arg is not None:
                self._param_load(pb, ins, res)
                return
            if _is_temp_name(src.name):
                self.operand_temp(src, ins)
                return
        elif not src.name:
            # load from a literal address: unknown memory
            self._new(ins, res, width=width)
            return
        key = self._named(src)
        mem = self.memory
        target = mem.aliases.get(key)
        if target is not None:
            t = self._new(ins, res, var=target, elem=_int(res.value), is_address=True,
                          heap=mem.heap_owners.get(target))
            self._touch(target, ins)
            self._edge(target, t.vertex, ins.dyn_id)
            return
        heap = mem.heap_owners.get(key)
        if heap is not None:
            t = self._new(ins, res, var=key, elem=_int(res.value), is_address=True, heap=heap)
        else:
            t = self._new(ins, res, var=key, elem=key.address, width=width)
        self._touch(key, ins)
        self._edge(key, t.vertex, ins.dyn_id)

    def _address_of(self, ins: TraceInstruction, index_ok: bool) -> None:
        base, res = ins.operand(1), ins.result
        if base is None or res is None:
            self._warn(f"malformed {ins.opcode_token} at dyn {ins.dyn_id}")
            return
        elem = _int(res.value)
        mem = self.memory
        temp = self.binding.lookup(base.name) if base.is_register else None
        if temp is not None:
            t = self._new(ins, res, var=temp.var, elem=elem, is_address=True,
                          inputs=(temp,), heap=temp.heap)
            if temp.var is not None:
                if index_ok:
                    mem.indexed.add(temp.var)
                self._touch(temp.var, ins)
            self._edge(temp.vertex, t.vertex, ins.dyn_id)
            return
        if base.is_register:
            pb = self.binding.top.params.get(base.name)
            if pb is not None and pb.arg is not None:
                t = self._param_load(pb, ins, res)
                t.is_address = True
                t.elem = elem
                if t.var is not None and index_ok:
                    mem.indexed.add(t.var)
                return
            if _is_temp_name(base.name):
                self.operand_temp(base, ins)
                return
        if not base.name:
            self._new(ins, res, elem=elem, is_address=True)
            return
        key = mem.resolve(self._named(base))
        t = self._new(ins, res, var=key, elem=elem, is_address=True, heap=mem.heap_owners.get(key))
        if index_ok:
            mem.indexed.add(key)
        self._touch(key, ins)
        self._edge(key, t.vertex, ins.dyn_id)

    def _gep(self, ins: TraceInstruction) -> None:
        self._address_of(ins, True)

    def _bitcast(self, ins: TraceInstruction) -> None:
        self._address_of(ins, False)

    def _alloca(self, ins: TraceInstruction) -> None:
        res = ins.result
        if res is None:
            self._warn(f"malformed Alloca at dyn {ins.dyn_id}")
            return
        size_op = ins.operand(1)
        size = None
        if size_op is not None and not size_op.is_register:
            size = _int(size_op.value)
        address = _int(res.value)
        self.memory.registry.record(
            address, LocalEntry(res.name, ins.function, size, ins.line, ins.dyn_id))
        if self.memory.aliases or self.memory.heap_owners:
            for key in [k for k in (*self.memory.aliases, *self.memory.heap_owners)
                        if k.address == address]:
                self.memory.forget(key)

    def _value_inputs(self, ins: TraceInstruction, ops) -> tuple:
        temps = []
        for op in ops:
            if not op.is_register:
                continue
            temp = self.binding.lookup(op.name)
            if temp is None:
                pb = self.binding.top.params.get(op.name)
                if pb is not None and pb.arg is not None:
                    temps.append(pb.arg)
                    continue
                self.operand_temp(op, ins)
                continue
            if not temp.is_address:
                temps.append(temp)
        return tuple(temps)

    def _arith(self, ins: TraceInstruction) -> None:
        res = ins.result
        inputs = self._value_inputs(ins, ins.inputs)
        if res is None:
            return
        t = self._new(ins, res, inputs=inputs, width=max(res.size_bits // 8, 1))
        for src in inputs:
            self._edge(src.vertex, t.vertex, ins.dyn_id)

    def _other(self, ins: TraceInstruction) -> None:
        res = ins.result
        if res is None or not res.is_register:
            return
        inputs = tuple(
            self.binding.lookup(op.name) for op in ins.inputs
            if op.is_register and self.binding.lookup(op.name) is not None
        )
        inputs = tuple(t for t in inputs if not t.is_address)
        t = self._new(ins, res, inputs=inputs, width=max(res.size_bits // 8, 1))
        for src in inputs:
            self._edge(src.vertex, t.vertex, ins.dyn_id)

    def _call(self, ins: TraceInstruction, nxt: TraceInstruction | None) -> None:
        operands = ins.inputs
        callee = operands[-1].name if operands else ""
        args = operands[:-1]
        res = ins.result
        if nxt is None or nxt.function == ins.function:
            # no body follows: behaves like an arithmetic instruction
            if res is None:
                return
            if callee in ALLOC_FUNCTIONS:
                size = 1
                for op in args:
                    if op.is_register:
                        size = None
                        break
                    size *= _int(op.value)
                if not args:
                    size = None
                self._new(ins, res, elem=_int(res.value), is_address=True,
                          heap=(_int(res.value), size))
                return
            inputs = self._value_inputs(ins, args)
            t = self._new(ins, res, inputs=inputs, width=max(res.size_bits // 8, 1))
            for src in inputs:
                self._edge(src.vertex, t.vertex, ins.dyn_id)
            return
        params = ins.params
        arg_temps = []
        for op in args:
            if op.is_register:
                temp = self.binding.lookup(op.name)
                if temp is None:
                    pb = self.binding.top.params.get(op.name)
                    if pb is not None:
                        temp = pb.arg
                    elif _is_temp_name(op.name):
                        self.operand_temp(op, ins)
                    else:
                        key = self.memory.resolve(self._named(op))
                        temp = Temp(key, var=key, elem=key.address, is_address=True,
                                    heap=self.memory.heap_owners.get(key))
                arg_temps.append(temp)
            else:
                arg_temps.append(None)
        frame = self.binding.push(nxt.function, ins)
        if len(params) != len(args):
            self._warn(
                f"ArityMismatch: call to {callee or nxt.function} at dyn {ins.dyn_id} "
                f"has {len(args)} arguments and {len(params)} parameters"
            )
            return
        for temp, param in zip(arg_temps, params):
            slot = ParamSlot(nxt.function, param.name, ins.dyn_id)
            frame.params[param.name] = ParamBinding(temp, slot)
            if temp is not None:
                self._edge(temp.vertex, slot, ins.dyn_id)

    def _ret(self, ins: TraceInstruction, nxt: TraceInstruction | None) -> None:
        frame = self.binding.top
        val = ins.operand(1)
        ret = None
        if val is not None and val.is_register:
            ret = self.binding.lookup(val.name)
            if ret is None:
                pb = frame.params.get(val.name)
                ret = pb.arg if pb is not None else None
        if self.binding.depth == 0:
            if nxt is not None and nxt.function != frame.function:
                self.binding.reset(nxt.function)
            return
        self.binding.pop()
        call = frame.call
        res = call.result if call is not None else None
        if res is None:
            return
        vertex = Reg(self.binding.top.function, res.name, call.dyn_id)
        if ret is None:
            temp = Temp(vertex)
        elif ret.is_address:
            temp = Temp(vertex, var=ret.var, elem=ret.elem, is_address=True,
                        inputs=(ret,), heap=ret.heap)
        else:
            temp = Temp(vertex, width=ret.width, inputs=(ret,))
        self.binding.bind(res.name, temp)
        if ret is not None:
            self._edge(ret.vertex, vertex, ins.dyn_id)

    def bind_opaque(self, call: TraceInstruction) -> None:
        """Bind a call's result as an untracked value (its body was skipped)."""
        res = call.result
        if res is not None:
            self.binding.bind(res.name, Temp(Reg(call.function, res.name, call.dyn_id)))

    def _store(self, ins: TraceInstruction) -> Optional[StoreEffect]:
        val, dst = ins.operand(1), ins.operand(2)
        if val is None or dst is None:
            self._warn(f"malformed Store at dyn {ins.dyn_id}")
            return None
        mem = self.memory
        named = None
        dtemp = self.binding.lookup(dst.name) if dst.is_register else None
        if dtemp is not None:
            if dtemp.var is None:
                return None
            dest, elem = dtemp.var, _int(dst.value)
        elif dst.is_register and _is_temp_name(dst.name):
            self.operand_temp(dst, ins)
            return None
        elif not dst.name:
            return None
        else:
            named = dest = self._named(dst)
            elem = dest.address
        width = max(val.size_bits // 8, 1)

        if not val.is_register:
            if named is not None and (named in mem.aliases or named in mem.heap_owners):
                mem.forget(named)
                return None
            self._touch(dest, ins)
            return StoreEffect(dest, elem, width, (), None)

        vtemp = self.binding.lookup(val.name)
        if vtemp is None:
            pb = self.binding.top.params.get(val.name)
            if pb is not None:
                vtemp = pb.arg
                if vtemp is None:
                    self._touch(dest, ins)
                    return StoreEffect(dest, elem, width, (), None)
            elif _is_temp_name(val.name):
                self.operand_temp(val, ins)
                return None
            else:
                # the address of a named variable is being stored
                target = mem.resolve(self._named(val))
                vtemp = Temp(target, var=target, elem=target.address, is_address=True,
                             heap=mem.heap_owners.get(target))

        if vtemp.is_address:
            if named is not None:
                if vtemp.var is not None:
                    mem.heap_owners.pop(named, None)
                    if vtemp.var != named:
                        mem.aliases[named] = vtemp.var
                elif vtemp.heap is not None:
                    mem.aliases.pop(named, None)
                    mem.heap_owners[named] = vtemp.heap
                else:
                    mem.forget(named)
            return None

        if named is not None and (named in mem.aliases or named in mem.heap_owners):
            mem.forget(named)
        reads = expand_reads(vtemp)
        self._touch(dest, ins)
        self._edge(vtemp.vertex, dest, ins.dyn_id)
        return StoreEffect(dest, elem, width, reads, vtemp)


def expand_reads(temp: Temp) -> tuple:
    """Variable elements whose values flow into ``temp``, sorted and deduplicated."""
    found = {}
    stack = [temp]
    seen = set()
    while stack:
        t = stack.pop()
        if id(t) in seen:
            continue
        seen.add(id(t))
        if t.var is not None:
            if not t.is_address:
                found[(t.var, t.elem)] = t.width
            continue
        stack.extend(t.inputs)
    return tuple(
        (var, elem, width)
        for (var, elem), width in sorted(found.items(), key=lambda kv: (kv[0][0].name, kv[0][0].address, kv[0][1]))
    )
