"""Bit-line computing instruction set, dependency-annotated traces and pair extraction."""

from __future__ import annotations

import gc
import json
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, NamedTuple, Optional

MAX_BLOCK_BITS = 512
MAX_COMPUTE_WIDTH = 32
MAX_MULT_INPUT_WIDTH = 16
LINE_BYTES = 64


class OpKind(str, Enum):
    AND = "AND"
    OR = "OR"
    NAND = "NAND"
    NOR = "NOR"
    XOR = "XOR"
    NOT = "NOT"
    ADD = "ADD"
    SUB = "SUB"
    MULT = "MULT"
    SHIFT = "SHIFT"
    ROTATE = "ROTATE"
    CMP_LT = "CMP_LT"
    CMP_GT = "CMP_GT"
    CMP_EQ = "CMP_EQ"
    MOVE = "MOVE"
    COPY = "COPY"
    INVALIDATE = "INVALIDATE"
    CPU_OP = "CPU_OP"

    def __str__(self) -> str:
        return self.value

    @property
    def is_compute(self) -> bool:
        return self in COMPUTE_KINDS

    @property
    def is_data_management(self) -> bool:
        return self in DATA_KINDS


LOGICAL_KINDS = frozenset({OpKind.AND, OpKind.OR, OpKind.NAND, OpKind.NOR, OpKind.XOR, OpKind.NOT})
COMPARE_KINDS = frozenset({OpKind.CMP_LT, OpKind.CMP_GT, OpKind.CMP_EQ})
SHIFT_KINDS = frozenset({OpKind.SHIFT, OpKind.ROTATE})
RIPPLE_KINDS = frozenset({OpKind.ADD, OpKind.SUB, OpKind.MULT})
COMPUTE_KINDS = LOGICAL_KINDS | COMPARE_KINDS | SHIFT_KINDS | RIPPLE_KINDS
DATA_KINDS = frozenset({OpKind.MOVE, OpKind.COPY, OpKind.INVALIDATE})
UNARY_KINDS = frozenset({OpKind.NOT}) | SHIFT_KINDS


class BlockAddr(NamedTuple):
    """A data block: byte ``address`` holding ``size_bits`` bits."""

    address: int
    size_bits: int = 32

    @property
    def line(self) -> int:
        return self.address // LINE_BYTES

    def __str__(self) -> str:
        return f"{self.address:#x}/{self.size_bits}"

    @classmethod
    def parse(cls, token: str) -> "BlockAddr":
        addr, _, size = token.partition("/")
        return cls(int(addr, 0), int(size) if size else 32)


# NamedTuple rather than a dataclass: kernels at desk scale build ~10^6 of these
class Instruction(NamedTuple):
    id: int
    kind: OpKind
    srcs: tuple = ()
    dest: Optional[BlockAddr] = None
    width_bits: int = 32
    # MOVE only: destination hierarchy level
    level: Optional[str] = None


class InstructionPair(NamedTuple):
    producer_kind: OpKind
    consumer_kind: OpKind

    def sort_key(self) -> tuple[str, str]:
        return (self.producer_kind.value, self.consumer_kind.value)


class Violation(NamedTuple):
    id: int
    rule: str


@dataclass(frozen=True)
class Trace:
    instructions: tuple[Instruction, ...]
    deps: frozenset[tuple[int, int]] = field(default_factory=frozenset)
    name: str = ""

    @classmethod
    def build(cls, instructions: Iterable[Instruction], name: str = "") -> "Trace":
        with paused_gc():
            instrs = tuple(instructions)
            return cls(instrs, frozenset(_edges(instrs)), name)

    def __len__(self) -> int:
        return len(self.instructions)


@contextmanager
def paused_gc():
    """Large traces are millions of acyclic tuples; cyclic GC passes only cost time."""
    was = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if was:
            gc.enable()


def _edges(instrs: tuple[Instruction, ...]) -> set[tuple[int, int]]:
    last_writer: dict[BlockAddr, int] = {}
    get = last_writer.get
    edges = set()
    add = edges.add
    for ins in instrs:
        i = ins[0]
        for s in ins[2]:
            p = get(s)
            if p is not None:
                add((p, i))
        if ins[3] is not None:
            last_writer[ins[3]] = i
    return edges


def dependence_edges(trace: Trace) -> set[tuple[int, int]]:
    """Def-use edges: each src links to the latest earlier instruction writing it."""
    return _edges(trace.instructions)


def extract_instruction_pairs(trace: Trace) -> Counter[InstructionPair]:
    kinds = [ins[1] for ins in trace.instructions]
    raw = Counter((kinds[p], kinds[c]) for p, c in trace.deps)
    pairs: Counter[InstructionPair] = Counter()
    for (pk, ck), n in raw.items():
        if pk.is_compute and ck.is_compute:
            pairs[InstructionPair(pk, ck)] += n
    return pairs


def concat(a: Trace, b: Trace, name: str = "") -> Trace:
    """Append ``b`` after ``a`` with ids renumbered; dependences are recomputed."""
    off = len(a.instructions)
    moved = [
        Instruction(ins.id + off, ins.kind, ins.srcs, ins.dest, ins.width_bits, ins.level)
        for ins in b.instructions
    ]
    return Trace.build(a.instructions + tuple(moved), name or a.name)


def _check_block(b: BlockAddr) -> Optional[str]:
    if not 1 <= b.size_bits <= MAX_BLOCK_BITS:
        return "block-size"
    nbytes = max(1, (b.size_bits + 7) // 8)
    if b.address < 0 or b.address % nbytes:
        return "alignment"
    if b.address // LINE_BYTES != (b.address + nbytes - 1) // LINE_BYTES:
        return "alignment"
    return None


def validate_trace(trace: Trace) -> list[Violation]:
    out: list[Violation] = []
    for pos, ins in enumerate(trace.instructions):
        if ins.id != pos:
            out.append(Violation(ins.id, "id-sequence"))
        for b in ins.srcs + ((ins.dest,) if ins.dest is not None else ()):
            rule = _check_block(b)
            if rule:
                out.append(Violation(ins.id, rule))
        k = ins.kind
        if k.is_compute:
            if not ins.srcs or ins.dest is None or len(ins.srcs) > 2:
                out.append(Violation(ins.id, "operands"))
            if not 1 <= ins.width_bits <= MAX_COMPUTE_WIDTH:
                out.append(Violation(ins.id, "width"))
            if k is OpKind.MULT:
                if ins.width_bits > MAX_MULT_INPUT_WIDTH or any(
                    s.size_bits > MAX_MULT_INPUT_WIDTH for s in ins.srcs
                ):
                    out.append(Violation(ins.id, "mult-width"))
                if ins.dest is not None and ins.dest.size_bits > 2 * MAX_MULT_INPUT_WIDTH:
                    out.append(Violation(ins.id, "mult-width"))
        elif k is OpKind.INVALIDATE:
            if len(ins.srcs) != 1 or ins.dest is not None:
                out.append(Violation(ins.id, "operands"))
        elif k is OpKind.MOVE:
            if len(ins.srcs) != 1 or ins.dest is not None or ins.level is None:
                out.append(Violation(ins.id, "operands"))
        elif k is OpKind.COPY:
            if len(ins.srcs) != 1 or ins.dest is None:
                out.append(Violation(ins.id, "operands"))
    actual = _edges(trace.instructions)
    for p, c in sorted(trace.deps):
        if p >= c:
            out.append(Violation(c, "dep-forward"))
        elif (p, c) not in actual:
            out.append(Violation(c, "dep-unjustified"))
    for p, c in sorted(actual - trace.deps):
        out.append(Violation(c, "dep-missing"))
    return out


# -- serialization -----------------------------------------------------------

def format_trace(trace: Trace) -> str:
    """Text form: ``id kind width dest src1 [src2]``; ``-`` marks no dest, ``@L2`` a MOVE target."""
    lines = [f"# trace {trace.name}".rstrip(), f"# {len(trace.instructions)} instructions"]
    for ins in trace.instructions:
        if ins.kind is OpKind.MOVE:
            dest = f"@{ins.level}"
        else:
            dest = str(ins.dest) if ins.dest is not None else "-"
        fields = [str(ins.id), ins.kind.value, str(ins.width_bits), dest]
        fields += [str(s) for s in ins.srcs]
        lines.append(" ".join(fields))
    return "\n".join(lines) + "\n"


def parse_trace(text: str, name: str = "") -> Trace:
    instrs = []
    for raw in text.splitlines():
        if raw.startswith("# trace ") and not name:
            name = raw[len("# trace "):].strip()
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if len(tok) < 4:
            raise ValueError(f"malformed trace line: {raw!r}")
        kind = OpKind(tok[1])
        dest: Optional[BlockAddr] = None
        level = None
        if tok[3].startswith("@"):
            level = tok[3][1:]
        elif tok[3] != "-":
            dest = BlockAddr.parse(tok[3])
        srcs = tuple(BlockAddr.parse(t) for t in tok[4:])
        instrs.append(Instruction(int(tok[0]), kind, srcs, dest, int(tok[2]), level))
    return Trace.build(instrs, name)


def _block_dict(b: Optional[BlockAddr]) -> Optional[dict]:
    return None if b is None else {"address": b.address, "size_bits": b.size_bits}


def trace_to_dict(trace: Trace) -> dict:
    return {
        "name": trace.name,
        "instructions": [
            {
                "id": ins.id,
                "kind": ins.kind.value,
                "srcs": [_block_dict(s) for s in ins.srcs],
                "dest": _block_dict(ins.dest),
                "width_bits": ins.width_bits,
                **({"level": ins.level} if ins.level else {}),
            }
            for ins in trace.instructions
        ],
        "deps": sorted([p, c] for p, c in trace.deps),
    }


def trace_from_dict(d: dict) -> Trace:
    def blk(x):
        return None if x is None else BlockAddr(x["address"], x["size_bits"])

    instrs = tuple(
        Instruction(
            i["id"], OpKind(i["kind"]), tuple(blk(s) for s in i["srcs"]), blk(i["dest"]),
            i["width_bits"], i.get("level"),
        )
        for i in d["instructions"]
    )
    return Trace(instrs, frozenset((p, c) for p, c in d["deps"]), d.get("name", ""))


def dumps_json(trace: Trace) -> str:
    return json.dumps(trace_to_dict(trace), indent=1)
