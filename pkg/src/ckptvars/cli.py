"""Command-line front end."""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass
from typing import Optional

from .ddg import to_dot
from .pipeline import analyze, report_json, report_text
from .preprocess import LoopNotFound, LoopSpec
from .trace import MalformedBlock, parse_trace

EXIT_OK = 0
EXIT_LOOP_NOT_FOUND = 2
EXIT_BAD_TRACE = 3


@dataclass
class RunConfig:
    trace_path: str
    loop: LoopSpec
    workers: int = 1
    output_format: str = "text"
    dump_ddg: Optional[str] = None
    verify_outcome_in_part_c: bool = False


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ckptvars",
        description="Identify the variables a loop needs checkpointed, from an execution trace.",
    )
    p.add_argument("--trace", required=True, metavar="PATH", help="instruction trace file")
    p.add_argument("--loop-function", required=True, metavar="NAME",
                   help="function containing the main loop")
    p.add_argument("--loop-start", required=True, type=int, metavar="N", help="first loop line")
    p.add_argument("--loop-end", required=True, type=int, metavar="N", help="last loop line")
    p.add_argument("--induction", metavar="NAME", help="name of the loop induction variable")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1, metavar="N",
                   help="parser threads (default: number of cores)")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--dump-ddg", metavar="PATH",
                   help="write complete and contracted graphs as DOT files PATH.complete.dot "
                        "and PATH.contracted.dot")
    p.add_argument("--check-outcome-after-loop", action="store_true",
                   help="warn about Outcome variables unused after the loop")
    return p


def config_from_args(argv=None) -> RunConfig:
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.workers < 1:
        parser.error("--workers must be >= 1")
    if ns.loop_start < 1 or ns.loop_start > ns.loop_end:
        parser.error("--loop-start must be >= 1 and <= --loop-end")
    loop = LoopSpec(ns.loop_function, ns.loop_start, ns.loop_end, ns.induction)
    return RunConfig(ns.trace, loop, ns.workers, ns.format, ns.dump_ddg,
                     ns.check_outcome_after_loop)


def run(config: RunConfig, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    if not os.path.isfile(config.trace_path):
        print(f"error: trace file not found: {config.trace_path}", file=err)
        return EXIT_BAD_TRACE
    try:
        seq = parse_trace(config.trace_path, config.workers)
        result = analyze(seq, config.loop, config.verify_outcome_in_part_c)
    except MalformedBlock as exc:
        print(f"error: malformed trace: {exc}", file=err)
        return EXIT_BAD_TRACE
    except LoopNotFound as exc:
        print(f"error: loop not found: {exc}; check --loop-function/--loop-start/--loop-end",
              file=err)
        return EXIT_LOOP_NOT_FOUND
    report = result.report
    if config.dump_ddg:
        with open(config.dump_ddg + ".complete.dot", "w") as fh:
            fh.write(to_dot(result.complete, "complete", result.mli))
        with open(config.dump_ddg + ".contracted.dot", "w") as fh:
            fh.write(to_dot(result.contracted, "contracted", result.mli))
    if config.output_format == "json":
        out.write(report_json(report))
    else:
        text = report_text(report)
        out.write("".join(l + "\n" for l in text.splitlines() if not l.startswith("warning: ")))
    for w in report.warnings:
        print(f"warning: {w}", file=err)
    return EXIT_OK


def main(argv=None) -> int:
    return run(config_from_args(argv))


if __name__ == "__main__":
    sys.exit(main())
