"""End-to-end analysis: partition, MLI matching, dependency pass, classification."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

from ._gc import gc_paused
from .bindings import Tracker, VarKey
from .classify import (
    CheckpointReport, Pattern, build_histories, classify, find_index, make_report,
)
from .ddg import DepGraph, build_complete, contract
from .preprocess import (
    LoopSpec, TracePartition, VarTable, address_mismatches, collect_arithmetic_vars,
    match_mli, partition,
)
from .trace import TraceInstruction, parse_trace

MAX_REPEATED_WARNINGS = 20


@dataclass
class Analysis:
    report: CheckpointReport
    partition: TracePartition
    before: VarTable
    inside: VarTable
    mli: list
    complete: DepGraph
    contracted: DepGraph
    events: list = field(default_factory=list)
    histories: dict = field(default_factory=dict)
    tracker: Tracker | None = None


def _dedupe(warnings: Sequence[str]) -> list[str]:
    """Drop exact repeats and cap each warning kind."""
    out, seen, per_kind = [], set(), {}
    for w in warnings:
        if w in seen:
            continue
        seen.add(w)
        kind = w.split(":", 1)[0]
        per_kind[kind] = per_kind.get(kind, 0) + 1
        if per_kind[kind] <= MAX_REPEATED_WARNINGS:
            out.append(w)
    for kind, count in per_kind.items():
        if count > MAX_REPEATED_WARNINGS:
            out.append(f"{kind}: {count - MAX_REPEATED_WARNINGS} further warnings suppressed")
    return out


def _outcome_check(seq, rng: range, report: CheckpointReport, tracker: Tracker) -> list[str]:
    """Outcome variables that no instruction after the loop touches."""
    outcomes = [e.variable for e in report.entries if e.pattern is Pattern.OUTCOME]
    if not outcomes:
        return []
    touched: set = set()
    probe = tracker.copy(record_edges=False)
    probe.on_access = lambda var, ins: touched.add(var.address)
    n = len(seq)
    for i in rng:
        probe.step(seq[i], seq[i + 1] if i + 1 < n else None)
    return [
        f"OutcomeUnused: {v.name!r} is written in the loop but not used after it"
        for v in outcomes if v.address not in touched
    ]


def analyze(
    seq: Sequence[TraceInstruction],
    loop: LoopSpec,
    check_outcome_after_loop: bool = False,
) -> Analysis:
    """Run every stage on a parsed trace and return all intermediate results."""
    with gc_paused():
        return _analyze(seq, loop, check_outcome_after_loop)


def _analyze(seq, loop: LoopSpec, check_outcome_after_loop: bool) -> Analysis:
    parts = partition(seq, loop)
    tracker = Tracker()
    before = collect_arithmetic_vars(seq, parts.part_a, False, tracker)
    warnings = list(tracker.warnings)
    tracker.warnings = []
    inside = collect_arithmetic_vars(seq, parts.part_b, True, tracker.copy(record_edges=False))
    warnings.extend(inside.warnings)
    mli = match_mli(before, inside)
    warnings.extend(address_mismatches(before, inside))
    for key in sorted(inside.call_only):
        if key in before:
            warnings.append(
                f"CallOnlyVariable: {key.name!r} is used in the loop only inside called "
                f"functions and is not treated as a loop input"
            )

    ddg_tracker = tracker.copy(record_edges=False)
    ddg_tracker.warnings = []
    complete, events, ddg_warnings = build_complete(seq, parts.part_b, mli, ddg_tracker)
    warnings.extend(ddg_warnings)
    contracted = contract(complete, mli)

    memory = ddg_tracker.memory
    histories = build_histories(events, mli, memory.extent, memory.indexed)
    patterns = {v: classify(h) for v, h in histories.items()}
    index_vars, index_warnings = find_index(seq, parts.part_b, loop, loop.induction_hint)
    warnings.extend(index_warnings)

    registry = memory.registry

    def declared(v: VarKey) -> tuple[str, int]:
        entry = registry.first(v)
        if entry is not None:
            return entry.function, entry.line
        info = before.entries.get(v) or inside.entries.get(v)
        if info is not None:
            return info.function, info.line
        return "", 0

    report = make_report(mli, patterns, index_vars, loop, declared, [])
    if check_outcome_after_loop:
        warnings.extend(_outcome_check(seq, parts.part_c, report, ddg_tracker))
    report.warnings = _dedupe(warnings + report.warnings)
    return Analysis(report, parts, before, inside, mli, complete, contracted,
                    events, histories, ddg_tracker)


def analyze_trace(trace, loop: LoopSpec, workers: int = 1, **kw) -> Analysis:
    return analyze(parse_trace(trace, workers), loop, **kw)


def report_json(report: CheckpointReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"


def report_text(report: CheckpointReport) -> str:
    loop = report.loop
    lines = [f"main loop: {loop.function} lines {loop.start_line}-{loop.end_line}"]
    lines.append("MLI variables: " + (", ".join(m.name for m in report.mli) or "(none)"))
    lines.append("checkpoint:")
    for e in report.critical:
        lines.append(f"  {e.variable.name:<16} {e.pattern.value:<8} declared {e.declared_at}")
    if not report.critical:
        lines.append("  (nothing)")
    lines.append("not critical:")
    for e in report.not_critical:
        lines.append(f"  {e.variable.name:<16} declared {e.declared_at}")
    if not report.not_critical:
        lines.append("  (nothing)")
    for w in report.warnings:
        lines.append(f"warning: {w}")
    return "\n".join(lines) + "\n"
