"""Element-level access histories and checkpoint pattern classification."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from .bindings import VarKey
from .ddg import AccessEvent, AccessKind
from .preprocess import LoopSpec
from .trace import Opcode, TraceInstruction, call_depths

__all__ = [
    "Pattern", "ElementHistory", "ReportEntry", "CheckpointReport",
    "build_histories", "classify", "find_index", "make_report", "event_summary",
]

READ, WRITE = AccessKind.READ, AccessKind.WRITE


class Pattern(enum.Enum):
    WAR = "WAR"
    OUTCOME = "Outcome"
    RAPO = "RAPO"
    INDEX = "Index"
    NOT_CRITICAL = "NotCritical"

    @property
    def critical(self) -> bool:
        return self is not Pattern.NOT_CRITICAL


@dataclass
class ElementHistory:
    variable: VarKey
    extent: Optional[tuple[int, int]]  # (base, size in bytes); None if unknown
    accesses: dict = field(default_factory=dict)  # element address -> [(seq, kind, width)]

    def add(self, seq: int, elem: int, kind: AccessKind, width: int) -> None:
        self.accesses.setdefault(elem, []).append((seq, kind, width))

    def events(self) -> list[tuple[int, int, AccessKind, int]]:
        """All accesses as ``(seq, elem, kind, width)`` in execution order."""
        flat = [(s, e, k, w) for e, lst in self.accesses.items() for s, k, w in lst]
        flat.sort(key=lambda x: x[0])
        return flat


ExtentLookup = Callable[[VarKey], Optional[tuple]]


def build_histories(
    events: Sequence[AccessEvent],
    mli: Iterable[VarKey],
    extent_of: ExtentLookup | None = None,
    indexed: Iterable[VarKey] = (),
) -> dict[VarKey, ElementHistory]:
    """One history per MLI variable that has at least one event.

    ``extent_of(var)`` returns ``(base, size)`` with ``size`` possibly
    ``None``.  A variable never addressed through element arithmetic (not in
    ``indexed``) and with no recorded extent is a scalar whose extent is its
    own access width.
    """
    by_addr = {m.address: m for m in mli}
    indexed = set(indexed)
    out: dict[VarKey, ElementHistory] = {}
    for seq, ev in enumerate(events):
        var = by_addr.get(ev.variable.address)
        if var is None:
            continue
        hist = out.get(var)
        if hist is None:
            hist = out[var] = ElementHistory(var, None)
        hist.add(seq, ev.element_addr, ev.kind, ev.width)
    for var, hist in out.items():
        ext = extent_of(var) if extent_of is not None else None
        if ext is not None:
            hist.extent = ext if ext[1] is not None else None
        elif var not in indexed:
            width = max((w for lst in hist.accesses.values() for _, _, w in lst), default=8)
            hist.extent = (var.address, width)
    return out


def _covers(writes: list[tuple[int, int]], base: int, size: int) -> bool:
    pos = base
    end = base + size
    for lo, width in sorted(writes):
        if lo > pos:
            return False
        pos = max(pos, lo + width)
        if pos >= end:
            return True
    return pos >= end


def classify(history: ElementHistory) -> Pattern:
    """WAR, Outcome, RAPO or NotCritical for one variable's loop accesses.

    WAR: some element's first access in the loop is a Read and the element
    is written afterwards.  Outcome: written but never read.  Read-only
    variables are not critical.  Otherwise the writes preceding the first
    Read must cover the whole extent for the variable to be NotCritical; an
    unknown extent counts as partial.
    """
    has_read = has_write = False
    first_read = None
    for elem, lst in history.accesses.items():
        first_kind = lst[0][1]
        if first_kind is READ and any(k is WRITE for _, k, _ in lst[1:]):
            return Pattern.WAR
        for s, k, _ in lst:
            if k is READ:
                has_read = True
                if first_read is None or s < first_read:
                    first_read = s
            else:
                has_write = True
    if has_write and not has_read:
        return Pattern.OUTCOME
    if not has_write:
        return Pattern.NOT_CRITICAL
    if history.extent is None:
        return Pattern.RAPO
    written = [
        (elem, w) for elem, lst in history.accesses.items()
        for s, k, w in lst if k is WRITE and s < first_read
    ]
    base, size = history.extent
    return Pattern.NOT_CRITICAL if _covers(written, base, size) else Pattern.RAPO


def _named_store_dest(ins: TraceInstruction) -> Optional[VarKey]:
    dst = ins.operand(2)
    if dst is None or not dst.name or dst.name.isdigit():
        return None
    try:
        return VarKey(int(dst.value), dst.name)
    except (TypeError, ValueError):
        return None


def find_index(
    seq: Sequence[TraceInstruction],
    rng: range,
    loop: LoopSpec,
    hint: str | None = None,
) -> tuple[list[VarKey], list[str]]:
    """Induction variables of the loop, plus any warnings.

    With a hint, the first named operand of that name in the loop region
    is returned.  Otherwise: variables stored at the loop header line, at
    top level of the loop function, at least once per iteration.  The
    iteration count is the number of header branches minus one (the final
    exit test).  If no header store qualifies, variables compared at the
    header and stored once per iteration anywhere in the loop are used.
    """
    part = [seq[i] for i in rng]
    depths = call_depths(part)
    top = [ins for ins, d in zip(part, depths) if d == 0 and ins.function == loop.function]
    if hint is not None:
        for ins in top:
            for op in ins.operands:
                if op.name == hint and op.is_register and not op.is_result:
                    try:
                        return [VarKey(int(op.value), hint)], []
                    except (TypeError, ValueError):
                        continue
        return [], [f"IndexNotFound: induction variable {hint!r} not referenced in the loop"]

    header = loop.start_line
    branches = sum(1 for ins in top if ins.opcode is Opcode.BR and ins.line == header)
    iterations = max(branches - 1, 1)

    header_stores: dict[VarKey, int] = {}
    all_stores: dict[VarKey, int] = {}
    header_loads: list[VarKey] = []
    for ins in top:
        if ins.opcode is Opcode.STORE:
            key = _named_store_dest(ins)
            if key is None:
                continue
            all_stores[key] = all_stores.get(key, 0) + 1
            if ins.line == header:
                header_stores[key] = header_stores.get(key, 0) + 1
        elif ins.opcode is Opcode.LOAD and ins.line == header:
            src = ins.operand(1)
            if src is not None and src.name and not src.name.isdigit():
                key = VarKey(int(src.value), src.name)
                if key not in header_loads:
                    header_loads.append(key)

    found = [k for k, c in header_stores.items() if c >= iterations]
    if not found:
        found = [k for k in header_loads if all_stores.get(k, 0) >= iterations]
    if not found:
        return [], ["IndexNotFound: no induction variable detected; pass --induction"]
    return found, []


@dataclass(frozen=True)
class ReportEntry:
    variable: VarKey
    pattern: Pattern
    function: str
    line: int

    @property
    def declared_at(self) -> str:
        return f"{self.function}:{self.line}" if self.function else ""


@dataclass
class CheckpointReport:
    loop: LoopSpec
    mli: list = field(default_factory=list)
    entries: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def critical(self) -> list[ReportEntry]:
        return [e for e in self.entries if e.pattern.critical]

    @property
    def not_critical(self) -> list[ReportEntry]:
        return [e for e in self.entries if not e.pattern.critical]

    def patterns(self) -> dict[str, str]:
        """``name -> pattern`` (names assumed unique among reported variables)."""
        return {e.variable.name: e.pattern.value for e in self.entries}

    def to_dict(self) -> dict:
        def entry(e: ReportEntry) -> dict:
            return {
                "name": e.variable.name,
                "address": f"{e.variable.address:#x}",
                "pattern": e.pattern.value,
                "declared_at": e.declared_at,
            }

        return {
            "loop": {
                "function": self.loop.function,
                "start_line": self.loop.start_line,
                "end_line": self.loop.end_line,
                "induction": self.loop.induction_hint,
            },
            "mli": [m.name for m in self.mli],
            "critical": [entry(e) for e in self.critical],
            "not_critical": [entry(e) for e in self.not_critical],
            "warnings": list(self.warnings),
        }


Declared = Callable[[VarKey], tuple[str, int]]


def make_report(
    mli: Sequence[VarKey],
    patterns: dict,
    index_vars: Sequence[VarKey],
    loop: LoopSpec,
    declared: Declared | None = None,
    warnings: Sequence[str] = (),
) -> CheckpointReport:
    """Assemble the report: MLI variables in order, then extra index variables.

    Variables without a pattern (no loop accesses) are NotCritical; an index
    variable that is also MLI is reported as Index.
    """
    index_set = set(index_vars)
    warnings = list(warnings)
    entries = []

    def where(v):
        return declared(v) if declared is not None else ("", 0)

    for v in mli:
        pattern = Pattern.INDEX if v in index_set else patterns.get(v, Pattern.NOT_CRITICAL)
        entries.append(ReportEntry(v, pattern, *where(v)))
    for v in index_vars:
        if v not in mli:
            entries.append(ReportEntry(v, Pattern.INDEX, *where(v)))
    if not mli:
        warnings.append("EmptyMLI: no variable is both defined before and used inside the loop")
    return CheckpointReport(loop, list(mli), entries, warnings)


def event_summary(
    events: Sequence[AccessEvent],
    keep: Iterable[VarKey],
) -> dict[int, dict[str, set[str]]]:
    """Per source line with a write to ``keep``: ``{"Read": names, "Write": names}``.

    Writes into variables outside ``keep`` (callee locals, scratch scalars)
    are followed forward: a later read of such an element stands for the
    ``keep`` variables that produced it, so every dependency is reported at
    the level of ``keep``.
    """
    keep_addr = {k.address for k in keep}
    derived: dict[tuple[int, int], set[str]] = {}
    out: dict[int, dict[str, set[str]]] = {}
    pending: set[str] = set()
    for ev in events:
        inside = ev.variable.address in keep_addr
        if ev.kind is READ:
            if inside:
                pending.add(ev.variable.name)
            else:
                pending |= derived.get((ev.variable.address, ev.element_addr), set())
            continue
        if inside:
            entry = out.setdefault(ev.line, {"Read": set(), "Write": set()})
            entry["Write"].add(ev.variable.name)
            entry["Read"] |= pending
        else:
            derived[(ev.variable.address, ev.element_addr)] = pending
        pending = set()
    return out
