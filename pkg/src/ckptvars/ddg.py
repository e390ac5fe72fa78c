"""Complete dependency graph construction and contraction to MLI variables."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .bindings import (
    LocalEntry, LocalRegistry, ParamSlot, Reg, RegVarBinding, StoreEffect, Tracker, VarKey,
)
from .trace import ARITHMETIC, Opcode, TraceInstruction

__all__ = [
    "AccessKind", "AccessEvent", "DepGraph", "DDGBuilder", "RegRegMap", "RegVarBinding",
    "LocalRegistry", "is_mli", "build_complete", "contract", "to_dot",
    "step_load_store", "step_arith", "step_call", "step_alloca", "flush_store",
]


class AccessKind(enum.Enum):
    READ = "Read"
    WRITE = "Write"


@dataclass(frozen=True, slots=True)
class AccessEvent:
    t: int
    variable: VarKey
    element_addr: int
    kind: AccessKind
    sources: tuple = ()
    width: int = 8
    function: str = ""
    line: int = 0


class DepGraph:
    """Directed graph; an edge ``u -> v`` means v's value is computed from u."""

    def __init__(self):
        self._parents: dict = {}  # v -> {u: dyn_id of the first u -> v}

    def add_vertex(self, v) -> None:
        if v not in self._parents:
            self._parents[v] = {}

    def add_edge(self, u, v, t: int | None = None) -> None:
        parents = self._parents
        ps = parents.get(v)
        if ps is None:
            ps = parents[v] = {}
        if u not in ps:
            ps[u] = t
            if u not in parents:
                parents[u] = {}

    def parents(self, v):
        return self._parents.get(v, {}).keys()

    def children(self, u) -> set:
        return {v for v, ps in self._parents.items() if u in ps}

    def has_edge(self, u, v) -> bool:
        return u in self._parents.get(v, ())

    def edge_time(self, u, v) -> Optional[int]:
        return self._parents.get(v, {}).get(u)

    @property
    def vertices(self) -> set:
        return set(self._parents)

    def edges(self) -> set:
        return {(u, v) for v, ps in self._parents.items() for u in ps}

    def __contains__(self, v) -> bool:
        return v in self._parents

    def __len__(self) -> int:
        return len(self._parents)


class RegRegMap:
    """Read-only view of reg-reg links held by a binding stack's top frame."""

    def __init__(self, binding: RegVarBinding):
        self.binding = binding

    def inputs(self, name: str) -> set[str]:
        temp = self.binding.lookup(name)
        if temp is None:
            return set()
        return {t.vertex.name for t in temp.inputs if isinstance(t.vertex, Reg)}

    def __contains__(self, name: str) -> bool:
        temp = self.binding.lookup(name)
        return temp is not None and temp.var is None


def is_mli(key, mli: Iterable[VarKey], registry: LocalRegistry | None = None) -> bool:
    """True iff ``key`` is a variable living at the address of an MLI variable."""
    if not isinstance(key, VarKey):
        return False
    return key.address in {m.address for m in mli}


class DDGBuilder:
    """Single forward pass over Part B producing the complete graph and event log."""

    def __init__(self, mli: Sequence[VarKey], tracker: Tracker | None = None):
        self.mli = list(mli)
        self.tracker = tracker if tracker is not None else Tracker(record_edges=True)
        self.graph = DepGraph()
        self.tracker.edge_sink = self.graph.add_edge
        for v in self.mli:
            self.graph.add_vertex(v)
        self.events: list[AccessEvent] = []

    @property
    def binding(self) -> RegVarBinding:
        return self.tracker.binding

    @property
    def registry(self) -> LocalRegistry:
        return self.tracker.memory.registry

    @property
    def warnings(self) -> list[str]:
        return self.tracker.warnings

    def step(self, ins: TraceInstruction, nxt: TraceInstruction | None = None) -> None:
        if ins.opcode is Opcode.BR:
            return
        effect = self.tracker.step(ins, nxt)
        if effect is not None:
            self._emit(ins, effect)

    def _emit(self, ins: TraceInstruction, effect: StoreEffect) -> None:
        t, fn, line = ins.dyn_id, ins.function, ins.line
        events = self.events
        sources = []
        for var, elem, width in effect.reads:
            events.append(AccessEvent(t, var, elem, AccessKind.READ, (), width, fn, line))
            if var not in sources:
                sources.append(var)
        events.append(AccessEvent(t, effect.dest, effect.elem, AccessKind.WRITE,
                                  tuple(sources), effect.width, fn, line))


# Per-opcode entry points.  Each applies one instruction to a builder.

def step_load_store(builder: DDGBuilder, ins: TraceInstruction) -> None:
    if ins.opcode not in (Opcode.LOAD, Opcode.STORE, Opcode.GEP, Opcode.BITCAST):
        raise ValueError(f"not a memory instruction: {ins.opcode_token}")
    builder.step(ins)


def step_arith(builder: DDGBuilder, ins: TraceInstruction) -> None:
    if ins.opcode not in ARITHMETIC:
        raise ValueError(f"not an arithmetic instruction: {ins.opcode_token}")
    builder.step(ins)


def step_call(builder: DDGBuilder, ins: TraceInstruction, nxt: TraceInstruction | None) -> None:
    if ins.opcode not in (Opcode.CALL, Opcode.RET):
        raise ValueError(f"not a call instruction: {ins.opcode_token}")
    builder.step(ins, nxt)


def step_alloca(registry: LocalRegistry, ins: TraceInstruction) -> LocalRegistry:
    if ins.opcode is not Opcode.ALLOCA:
        raise ValueError(f"not an Alloca: {ins.opcode_token}")
    res = ins.result
    size_op = ins.operand(1)
    size = None if size_op is None or size_op.is_register else int(size_op.value)
    registry.record(int(res.value), LocalEntry(res.name, ins.function, size, ins.line, ins.dyn_id))
    return registry


def flush_store(builder: DDGBuilder, ins: TraceInstruction) -> None:
    if ins.opcode is not Opcode.STORE:
        raise ValueError(f"not a Store: {ins.opcode_token}")
    builder.step(ins)


def build_complete(
    seq: Sequence[TraceInstruction],
    rng: range,
    mli: Sequence[VarKey],
    tracker: Tracker | None = None,
) -> tuple[DepGraph, list[AccessEvent], list[str]]:
    """Replay ``seq[rng]``; returns the complete graph, the events and warnings.

    ``tracker`` supplies the binding and pointer state at the start of the
    range (normally the state left by Part A); it is advanced in place.
    """
    builder = DDGBuilder(mli, tracker)
    n = len(seq)
    step = builder.step
    for i in rng:
        step(seq[i], seq[i + 1] if i + 1 < n else None)
    return builder.graph, builder.events, builder.warnings


def contract(complete: DepGraph, mli: Iterable[VarKey]) -> DepGraph:
    """Remove every non-MLI vertex, reattaching MLI vertices to MLI ancestors.

    Each MLI vertex's non-MLI parents are repeatedly replaced by their own
    parents until only MLI parents remain; parentless non-MLI vertices drop
    out.  The search stops at MLI vertices, so u -> v survives exactly when a
    path from u to v exists whose interior avoids MLI vertices.
    """
    mli = list(mli)
    addresses = {m.address for m in mli}

    def member(v) -> bool:
        return isinstance(v, VarKey) and v.address in addresses

    out = DepGraph()
    for v in mli:
        out.add_vertex(v)
    for n in mli:
        found: dict = {}
        stack = [(p, t) for p, t in complete._parents.get(n, {}).items()]
        seen = set()
        while stack:
            p, t = stack.pop()
            if member(p):
                if p not in found or (t is not None and (found[p] is None or t < found[p])):
                    found[p] = t
                continue
            if p in seen:
                continue
            seen.add(p)
            stack.extend((g, t) for g in complete.parents(p))
        for p in sorted(found, key=_vertex_key):
            out.add_edge(p, n, found[p])
    return out


def _vertex_key(v) -> tuple:
    if isinstance(v, VarKey):
        return (0, v.name, v.address, 0)
    if isinstance(v, ParamSlot):
        return (1, v.function + "." + v.name, 0, v.dyn_id)
    return (2, v.function + "." + v.name, 0, v.dyn_id)


def _label(v) -> str:
    return str(v)


def to_dot(graph: DepGraph, name: str = "ddg", mli: Iterable[VarKey] = ()) -> str:
    """Graphviz rendering; MLI vertices are drawn as boxes."""
    mli = set(mli)
    ids = {v: f"n{i}" for i, v in enumerate(sorted(graph.vertices, key=_vertex_key))}
    lines = [f"digraph {name} {{"]
    for v, vid in ids.items():
        shape = "box" if v in mli else ("ellipse" if isinstance(v, VarKey) else "circle")
        label = _label(v).replace('"', '\\"')
        lines.append(f'  {vid} [label="{label}", shape={shape}];')
    for u, v in sorted(graph.edges(), key=lambda e: (_vertex_key(e[0]), _vertex_key(e[1]))):
        lines.append(f"  {ids[u]} -> {ids[v]};")
    lines.append("}")
    return "\n".join(lines) + "\n"
