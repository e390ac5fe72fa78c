"""Mini-program model, trace emitter and reference interpreter for testing."""

from .emit import Layout, emit_program, emit_trace
from .model import InvalidProgram, MiniProgram, dumps, load, loads
from .oracle import OracleResult, oracle

__all__ = [
    "InvalidProgram", "Layout", "MiniProgram", "OracleResult",
    "dumps", "emit_program", "emit_trace", "load", "loads", "oracle",
]
