"""Write example traces for the command-line tool.

    python3 demos/make_traces.py /tmp/traces
    ckptvars --trace /tmp/traces/kernel.trace --loop-function main \
        --loop-start 13 --loop-end 21
"""

from __future__ import annotations

import argparse
from pathlib import Path

from ckptvars.synth import emit_trace
from ckptvars.synth.model import layout
from ckptvars.synth.programs import cg_program, example_program


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("outdir", type=Path)
    ap.add_argument("--cg-iterations", type=int, default=2)
    args = ap.parse_args(argv)
    args.outdir.mkdir(parents=True, exist_ok=True)
    for name, prog in (("kernel", example_program()),
                       ("cg", cg_program(iterations=args.cg_iterations))):
        p = layout(prog)
        path = args.outdir / f"{name}.trace"
        path.write_bytes(emit_trace(p))
        print(f"{path}: loop main:{p.loop.start_line}-{p.loop.end_line}")


if __name__ == "__main__":
    main()
