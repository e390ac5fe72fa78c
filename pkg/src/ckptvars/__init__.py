"""Find the variables a program's main loop must checkpoint, from an instruction trace.

Typical use::

    from ckptvars import LoopSpec, analyze_trace, report_json

    result = analyze_trace("run.trace", LoopSpec("main", 13, 21), workers=4)
    print(report_json(result.report))
"""

from .bindings import VarKey
from .classify import CheckpointReport, Pattern
from .pipeline import Analysis, analyze, analyze_trace, report_json, report_text
from .preprocess import LoopNotFound, LoopSpec
from .trace import MalformedBlock, Opcode, TraceInstruction, parse_trace

__version__ = "0.1.0"

__all__ = [
    "Analysis", "CheckpointReport", "LoopNotFound", "LoopSpec", "MalformedBlock", "Opcode",
    "Pattern", "TraceInstruction", "VarKey", "analyze", "analyze_trace", "parse_trace",
    "report_json", "report_text",
]
