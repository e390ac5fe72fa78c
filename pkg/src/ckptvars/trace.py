"""Dynamic instruction trace model and parser.

A trace is UTF-8 text made of instruction blocks::

    I|<dyn_id>|<function>|<line>:<col>|<bb_label>|<opcode>
    O|<slot>|<size_bits>|<is_register>|<name>|<value>
    ...
    <blank line>

``slot`` is a positive integer (input operand), ``r`` (result) or ``f``
(function parameter).  Values are decimal integers or ``0x`` hex; floats are
tolerated for data values.  Opcodes are mnemonics (``Load``, ``FMul`` ...);
the numeric LLVM 3.4 codes are accepted as aliases.

Large traces are split into byte ranges aligned on the ``I|`` sentinel and
parsed by a thread pool; chunk results are concatenated in file order.
"""

from __future__ import annotations

import enum
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence, Union

from ._gc import gc_paused

RESULT = "r"
PARAM = "f"

SENTINEL = b"\nI|"


class Opcode(enum.Enum):
    RET = "Ret"
    BR = "Br"
    ADD = "Add"
    FADD = "FAdd"
    SUB = "Sub"
    FSUB = "FSub"
    MUL = "Mul"
    FMUL = "FMul"
    UDIV = "UDiv"
    SDIV = "SDiv"
    FDIV = "FDiv"
    ALLOCA = "Alloca"
    LOAD = "Load"
    STORE = "Store"
    GEP = "GetElementPtr"
    BITCAST = "BitCast"
    CALL = "Call"
    OTHER = "Other"


ARITHMETIC = frozenset({
    Opcode.ADD, Opcode.FADD, Opcode.SUB, Opcode.FSUB, Opcode.MUL,
    Opcode.FMUL, Opcode.UDIV, Opcode.SDIV, Opcode.FDIV,
})

# LLVM 3.4 instruction numbering as printed by LLVM-Tracer.
LEGACY_CODES = {
    "1": Opcode.RET, "2": Opcode.BR,
    "8": Opcode.ADD, "9": Opcode.FADD, "10": Opcode.SUB, "11": Opcode.FSUB,
    "12": Opcode.MUL, "13": Opcode.FMUL, "14": Opcode.UDIV, "15": Opcode.SDIV,
    "16": Opcode.FDIV, "26": Opcode.ALLOCA, "27": Opcode.LOAD,
    "28": Opcode.STORE, "29": Opcode.GEP, "44": Opcode.BITCAST,
    "49": Opcode.CALL,
}

_MNEMONICS = {op.value.lower(): op for op in Opcode if op is not Opcode.OTHER}
_MNEMONICS["getelementptr"] = Opcode.GEP
_MNEMONICS["gep"] = Opcode.GEP


def lookup_opcode(token: str) -> Opcode:
    op = _MNEMONICS.get(token.lower())
    if op is None:
        op = LEGACY_CODES.get(token, Opcode.OTHER)
    return op


class MalformedBlock(ValueError):
    """Corrupt or truncated trace; ``offset`` is the byte offset of the block."""

    def __init__(self, reason: str, offset: int = 0):
        super().__init__(f"{reason} (byte offset {offset})")
        self.reason = reason
        self.offset = offset


class EmptyTrace(ValueError):
    pass


class Operand(NamedTuple):
    slot: Union[int, str]
    size_bits: int
    is_register: bool
    name: str
    value: Union[int, float]
    hex: bool = False

    @property
    def is_result(self) -> bool:
        return self.slot == RESULT

    @property
    def is_param(self) -> bool:
        return self.slot == PARAM

    def format_value(self) -> str:
        if self.hex:
            return f"{self.value:#x}"
        return repr(self.value) if isinstance(self.value, float) else str(self.value)


class TraceInstruction(NamedTuple):
    """One dynamic instruction block; immutable and hashable."""

    dyn_id: int
    function: str
    line: int
    column: int
    bb_label: str
    opcode: Opcode
    operands: tuple
    raw_opcode: str = ""

    @property
    def result(self) -> Operand | None:
        for op in self.operands:
            if op.slot == RESULT:
                return op
        return None

    @property
    def inputs(self) -> list[Operand]:
        return [op for op in self.operands if type(op.slot) is int]

    @property
    def params(self) -> list[Operand]:
        return [op for op in self.operands if op.slot == PARAM]

    def operand(self, slot: int) -> Operand | None:
        for op in self.operands:
            if op.slot == slot:
                return op
        return None

    @property
    def opcode_token(self) -> str:
        if self.opcode is Opcode.OTHER:
            return self.raw_opcode
        return self.opcode.value


@dataclass(frozen=True, slots=True)
class ChunkBoundary:
    byte_offset: int
    first_dyn_id: int


def _parse_value(text: str) -> tuple[Union[int, float], bool]:
    if text[:2] in ("0x", "0X"):
        return int(text, 16), True
    try:
        return int(text), False
    except ValueError:
        return float(text), False


_intern = sys.intern


_HEAD_CACHE: dict = {}
_OPERAND_CACHE: dict = {}
_CACHE_LIMIT = 1 << 16


def _parse_header(line: str) -> tuple:
    """``(dyn_id, rest)`` where ``rest`` is the cached decoded remainder."""
    fields = line.split("|", 2)
    if len(fields) != 3:
        raise ValueError("instruction line needs 6 fields")
    dyn = int(fields[1])
    rest = _HEAD_CACHE.get(fields[2])
    if rest is None:
        rest = _parse_head_rest(fields[2])
        if len(_HEAD_CACHE) >= _CACHE_LIMIT:
            _HEAD_CACHE.clear()
        _HEAD_CACHE[fields[2]] = rest
    return dyn, rest


def _parse_head_rest(text: str) -> tuple:
    fields = text.split("|")
    if len(fields) != 4:
        raise ValueError(f"instruction line needs 6 fields, got {len(fields) + 2}")
    function, loc, bb, token = fields
    line_no, _, col = loc.partition(":")
    token = token.strip()
    if not token:
        raise ValueError("missing opcode")
    line_no = int(line_no)
    if line_no < 1:
        raise ValueError("line number must be positive")
    col = int(col) if col else 0
    if col < 0:
        raise ValueError("column must be non-negative")
    return (_intern(function), line_no, col, _intern(bb), lookup_opcode(token), _intern(token))


def _parse_operand(line: str) -> Operand:
    fields = line.split("|")
    if len(fields) != 6:
        raise ValueError(f"operand line needs 6 fields, got {len(fields)}")
    _, slot, size, is_reg, name, value = fields
    if slot != RESULT and slot != PARAM:
        slot = int(slot)
        if slot < 1:
            raise ValueError("operand slot must be >= 1")
    size_bits = int(size)
    if size_bits < 1:
        raise ValueError("operand size must be positive")
    if is_reg not in ("0", "1"):
        raise ValueError(f"bad register flag {is_reg!r}")
    if is_reg == "0" and name:
        raise ValueError("constant operand carries a name")
    if not value:
        raise ValueError("missing operand value")
    val, is_hex = _parse_value(value)
    return Operand(slot, size_bits, is_reg == "1", _intern(name), val, is_hex)


def _operand(line: str) -> Operand:
    op = _OPERAND_CACHE.get(line)
    if op is None:
        op = _parse_operand(line)
        if len(_OPERAND_CACHE) >= _CACHE_LIMIT:
            _OPERAND_CACHE.clear()
        _OPERAND_CACHE[line] = op
    return op


def _finish(dyn: int, rest: tuple, operands: list) -> TraceInstruction:
    results = 0
    for op in operands:
        if op.slot == RESULT:
            results += 1
    if results > 1:
        raise ValueError("more than one result operand")
    function, line, col, bb, opcode, token = rest
    return TraceInstruction(dyn, function, line, col, bb, opcode, tuple(operands), token)


def _parse_text(text: str, base_offset: int = 0, last_dyn: int | None = None) -> list[TraceInstruction]:
    out: list[TraceInstruction] = []
    append = out.append
    lines = text.split("\n")
    if "\r" in text:
        lines = [l[:-1] if l.endswith("\r") else l for l in lines]
    dyn = None
    rest = None
    operands: list = []
    block_line = 0
    i = -1
    try:
        for i, line in enumerate(lines):
            if not line:
                if dyn is not None:
                    append(_finish(dyn, rest, operands))
                    dyn = None
                continue
            tag = line[:2]
            if tag == "O|":
                if dyn is None:
                    block_line = i
                    raise ValueError("operand line outside a block")
                operands.append(_operand(line))
            elif tag == "I|":
                if dyn is not None:
                    append(_finish(dyn, rest, operands))
                block_line = i
                dyn, rest = _parse_header(line)
                if last_dyn is not None and dyn <= last_dyn:
                    raise ValueError(f"dyn_id {dyn} does not increase")
                last_dyn = dyn
                operands = []
            else:
                block_line = i
                raise ValueError(f"unrecognized line {line[:40]!r}")
        if dyn is not None:
            append(_finish(dyn, rest, operands))
    except (ValueError, IndexError) as exc:
        prefix = "\n".join(text.split("\n")[:block_line])
        offset = base_offset + len(prefix.encode("utf-8")) + (1 if block_line else 0)
        raise MalformedBlock(str(exc), offset) from None
    return out


def parse_block(text: str) -> TraceInstruction:
    """Parse one instruction block (header line plus operand lines)."""
    instrs = _parse_text(text.strip("\n"))
    if len(instrs) != 1:
        raise MalformedBlock(f"expected one block, found {len(instrs)}", 0)
    return instrs[0]


def serialize_block(ins: TraceInstruction) -> str:
    lines = [
        f"I|{ins.dyn_id}|{ins.function}|{ins.line}:{ins.column}|{ins.bb_label}|{ins.opcode_token}"
    ]
    for op in ins.operands:
        lines.append(
            f"O|{op.slot}|{op.size_bits}|{int(op.is_register)}|{op.name}|{op.format_value()}"
        )
    return "\n".join(lines) + "\n"


def serialize_trace(instrs: Iterable[TraceInstruction]) -> str:
    return "\n".join(serialize_block(ins) for ins in instrs)


def canonical_block(text: str) -> str:
    """Normalized spelling of a block: mnemonic opcodes, lowercase hex, no trailing blanks."""
    return serialize_block(parse_block(text))


TraceSource = Union[bytes, bytearray, memoryview, str, "os.PathLike[str]"]


def _load(trace: TraceSource) -> bytes:
    if isinstance(trace, (bytes, bytearray, memoryview)):
        return bytes(trace)
    with open(trace, "rb") as fh:
        return fh.read()


def _dyn_id_at(data: bytes, offset: int) -> int:
    end = data.find(b"|", offset + 2)
    try:
        return int(data[offset + 2:end])
    except ValueError:
        raise MalformedBlock("bad block header", offset) from None


def partition_stream(trace: TraceSource, n_chunks: int) -> list[ChunkBoundary]:
    """Split the stream into at most ``n_chunks`` byte ranges starting on block boundaries."""
    if n_chunks < 1:
        raise ValueError("n_chunks must be >= 1")
    data = _load(trace)
    if not data.strip():
        raise EmptyTrace("trace is empty")
    if data.startswith(b"I|"):
        first = 0
    else:
        hit = data.find(SENTINEL)
        if hit < 0:
            raise MalformedBlock("no instruction block found", 0)
        first = hit + 1
    offsets = [0]
    first_ids = [_dyn_id_at(data, first)]
    floor = first
    size = len(data)
    for k in range(1, n_chunks):
        naive = k * size // n_chunks
        hit = data.find(SENTINEL, max(naive - 1, floor))
        if hit < 0:
            break
        boundary = hit + 1
        if boundary <= floor:
            continue
        floor = boundary
        offsets.append(boundary)
        first_ids.append(_dyn_id_at(data, boundary))
    return [ChunkBoundary(o, d) for o, d in zip(offsets, first_ids)]


def parse_trace(trace: TraceSource, workers: int = 1) -> list[TraceInstruction]:
    """Parse a whole trace; the result does not depend on ``workers``."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    data = _load(trace)
    with gc_paused():
        return _parse_all(data, workers)


def _parse_all(data: bytes, workers: int) -> list[TraceInstruction]:
    if not data.strip():
        return []
    if workers == 1:
        return _parse_text(data.decode("utf-8"))
    bounds = partition_stream(data, workers)
    spans = [
        (b.byte_offset, bounds[i + 1].byte_offset if i + 1 < len(bounds) else len(data))
        for i, b in enumerate(bounds)
    ]

    def work(span):
        lo, hi = span
        return _parse_text(data[lo:hi].decode("utf-8"), lo)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(work, spans))
    out: list[TraceInstruction] = []
    for (lo, _), part in zip(spans, parts):
        if out and part and part[0].dyn_id <= out[-1].dyn_id:
            raise MalformedBlock(f"dyn_id {part[0].dyn_id} does not increase", lo)
        out.extend(part)
    return out


def call_depths(seq: Sequence[TraceInstruction]) -> list[int]:
    """Dynamic call depth of every instruction relative to the first one.

    A ``Call`` followed by an instruction of another function opens a frame;
    ``Ret`` closes it.  Depth never drops below zero.
    """
    depths = [0] * len(seq)
    depth = 0
    n = len(seq)
    for i, ins in enumerate(seq):
        depths[i] = depth
        if ins.opcode is Opcode.CALL:
            if i + 1 < n and seq[i + 1].function != ins.function:
                depth += 1
        elif ins.opcode is Opcode.RET and depth > 0:
            depth -= 1
    return depths
