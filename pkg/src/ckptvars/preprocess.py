"""Trace partitioning around the main loop and MLI variable identification."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from .bindings import Tracker, VarKey
from .trace import Opcode, TraceInstruction

__all__ = [
    "LoopSpec", "LoopNotFound", "TracePartition", "VarInfo", "VarTable",
    "VarKey", "partition", "collect_arithmetic_vars", "match_mli", "address_mismatches",
]


class LoopNotFound(LookupError):
    pass


@dataclass(frozen=True)
class LoopSpec:
    function: str
    start_line: int
    end_line: int
    induction_hint: Optional[str] = None

    def __post_init__(self):
        if self.start_line < 1 or self.start_line > self.end_line:
            raise ValueError(f"bad loop range {self.start_line}-{self.end_line}")

    def contains(self, line: int) -> bool:
        return self.start_line <= line <= self.end_line


@dataclass(frozen=True)
class TracePartition:
    part_a: range
    part_b: range
    part_c: range


@dataclass(frozen=True, slots=True)
class VarInfo:
    dyn_id: int
    function: str
    line: int


@dataclass
class VarTable:
    """Variables touched in a trace range, in first-occurrence order."""

    entries: dict = field(default_factory=dict)  # VarKey -> VarInfo
    call_only: set = field(default_factory=set)  # named operands seen only in skipped call bodies
    warnings: list = field(default_factory=list)

    def __contains__(self, key) -> bool:
        return key in self.entries

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def names(self) -> set[str]:
        return {k.name for k in self.entries}


def loop_membership(seq: Sequence[TraceInstruction], loop: LoopSpec) -> list[bool]:
    """For every instruction, whether its call-stack root lies inside the loop.

    The root is the outermost active frame of ``loop.function``; its current
    line is the line of the last instruction it executed (the call site while
    a callee runs).
    """
    out = [False] * len(seq)
    if not seq:
        return out
    stack = [[seq[0].function, 0]]
    loop_idx = 0 if seq[0].function == loop.function else -1
    n = len(seq)
    start, end = loop.start_line, loop.end_line
    for i, ins in enumerate(seq):
        top = stack[-1]
        if ins.function != top[0] and len(stack) == 1:
            # control left the base function (e.g. after its Ret); restart there
            stack[0] = top = [ins.function, 0]
            loop_idx = 0 if ins.function == loop.function else -1
        top[1] = ins.line
        if loop_idx >= 0:
            out[i] = start <= stack[loop_idx][1] <= end
        op = ins.opcode
        if op is Opcode.CALL:
            if i + 1 < n and seq[i + 1].function != ins.function:
                stack.append([seq[i + 1].function, 0])
                if loop_idx < 0 and seq[i + 1].function == loop.function:
                    loop_idx = len(stack) - 1
        elif op is Opcode.RET and len(stack) > 1:
            stack.pop()
            if loop_idx >= len(stack):
                loop_idx = -1
    return out


def partition(seq: Sequence[TraceInstruction], loop: LoopSpec) -> TracePartition:
    inside = loop_membership(seq, loop)
    try:
        first = inside.index(True)
    except ValueError:
        raise LoopNotFound(
            f"no instruction of {loop.function!r} within lines "
            f"{loop.start_line}-{loop.end_line}"
        ) from None
    last = len(inside) - 1 - inside[::-1].index(True)
    n = len(seq)
    return TracePartition(range(0, first), range(first, last + 1), range(last + 1, n))


def _is_variable_name(name: str) -> bool:
    return bool(name) and not name.isdigit() and not name.isspace()


def collect_arithmetic_vars(
    seq: Sequence[TraceInstruction],
    rng: range | None = None,
    bypass_calls: bool = False,
    tracker: Tracker | None = None,
) -> VarTable:
    """Variables read, addressed or written by the instructions in ``rng``.

    Pointer variables are resolved to the variable they point to and are not
    themselves collected.  With ``bypass_calls`` the bodies of calls entered
    from the range are skipped (their results become untracked values).
    ``tracker`` carries bindings and pointer state in and out.
    """
    if rng is None:
        rng = range(len(seq))
    if tracker is None:
        tracker = Tracker()
    table = VarTable()
    entries = table.entries
    registry = tracker.memory.registry

    def touch(var: VarKey, ins: TraceInstruction) -> None:
        if var not in entries and _is_variable_name(var.name):
            entry = registry.first(var)
            if entry is not None:
                entries[var] = VarInfo(ins.dyn_id, entry.function, entry.line)
            else:
                entries[var] = VarInfo(ins.dyn_id, ins.function, ins.line)

    previous = tracker.on_access
    tracker.on_access = touch
    n = len(seq)
    depth = 0
    outer_call = None
    skipped_locals: set[int] = set()
    skipped_names: dict = {}
    skipped_params: set[str] = set()
    try:
        for i in rng:
            ins = seq[i]
            nxt = seq[i + 1] if i + 1 < n else None
            op = ins.opcode
            if depth > 0:
                if op is Opcode.CALL and nxt is not None and nxt.function != ins.function:
                    depth += 1
                    skipped_params.update(o.name for o in ins.params)
                elif op is Opcode.RET:
                    depth -= 1
                    if depth == 0:
                        tracker.bind_opaque(outer_call)
                        outer_call = None
                elif op is Opcode.ALLOCA:
                    res = ins.result
                    if res is not None:
                        skipped_locals.add(int(res.value))
                else:
                    ops = ins.inputs[:-1] if op is Opcode.CALL else ins.operands
                    for o in ops:
                        if o.is_register and _is_variable_name(o.name) and not o.is_param:
                            try:
                                key = VarKey(int(o.value), o.name)
                            except (TypeError, ValueError):
                                continue
                            skipped_names.setdefault(key, ins)
                continue
            if (bypass_calls and op is Opcode.CALL and nxt is not None
                    and nxt.function != ins.function):
                depth = 1
                outer_call = ins
                skipped_params.update(o.name for o in ins.params)
                continue
            tracker.step(ins, nxt)
    finally:
        tracker.on_access = previous
    table.call_only = {
        k for k in skipped_names
        if k.address not in skipped_locals and k not in entries
        and k.name not in skipped_params
    }
    table.warnings = tracker.warnings
    return table


def match_mli(before: VarTable, inside: VarTable) -> list[VarKey]:
    """VarKeys present in both tables, in Part B first-occurrence order."""
    return [k for k in inside.entries if k in before.entries]


def address_mismatches(before: VarTable, inside: VarTable) -> list[str]:
    """Names present on both sides but only at differing addresses."""
    out = []
    names_before: dict[str, set[int]] = {}
    for k in before.entries:
        names_before.setdefault(k.name, set()).add(k.address)
    seen = set()
    for k in inside.entries:
        addrs = names_before.get(k.name)
        if addrs and k.address not in addrs and k.name not in seen:
            seen.add(k.name)
            listed = ", ".join(f"{a:#x}" for a in sorted(addrs))
            out.append(
                f"AddressMismatch: {k.name!r} used in the loop at {k.address:#x} "
                f"but before the loop at {listed}; not matched"
            )
    return out


def collect_regions(seq, loop: LoopSpec):
    """Partition, then collect Part A (no bypass) and Part B (bypass).

    Returns ``(partition, before, inside, tracker)`` where ``tracker`` holds
    the binding and pointer state at the start of Part B.
    """
    parts = partition(seq, loop)
    tracker = Tracker()
    before = collect_arithmetic_vars(seq, parts.part_a, False, tracker)
    seed = tracker.copy()
    seed.warnings = []
    inside = collect_arithmetic_vars(seq, parts.part_b, True, tracker.copy())
    return parts, before, inside, seed
