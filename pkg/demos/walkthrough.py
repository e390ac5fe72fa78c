"""Run the analysis on the small kernel and print each stage."""

from __future__ import annotations

from ckptvars import analyze, parse_trace, report_text
from ckptvars.classify import event_summary
from ckptvars.preprocess import LoopSpec
from ckptvars.synth import emit_trace, oracle
from ckptvars.synth.model import layout
from ckptvars.synth.programs import example_program


def main() -> None:
    p = layout(example_program())
    seq = parse_trace(emit_trace(p))
    result = analyze(seq, LoopSpec("main", p.loop.start_line, p.loop.end_line))
    print(f"{len(seq)} trace blocks, loop body holds {len(result.partition.part_b)}")
    print("variables before the loop:", sorted(result.before.names()))
    print("variables inside the loop:", sorted(result.inside.names()))
    print("contracted dependencies:")
    for u, v in sorted(result.contracted.edges(), key=lambda e: (e[1].name, e[0].name)):
        print(f"  {u.name} -> {v.name}")
    print("reads/writes per line:")
    for line, d in event_summary(result.events, result.mli).items():
        print(f"  line {line}: writes {sorted(d['Write'])} reads {sorted(d['Read'])}")
    print()
    print(report_text(result.report), end="")
    agree = result.report.patterns() == oracle(p).patterns
    print("reference interpreter agrees:", agree)


if __name__ == "__main__":
    main()
