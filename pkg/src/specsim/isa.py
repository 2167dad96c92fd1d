"""Toy RISC ISA: 32 x 64-bit registers, flat addressing, a textual assembler,
and decode into micro-ops.

Dialect summary (the full grammar is in the README's ISA reference):

    ; comment to end of line
    .label name           (or the sugar  name:)
    .data ADDR PERM BYTE...   PERM in {rw, ro}; ADDR must be 8-byte aligned

    movi rD, imm|label        mov rD, rA
    add/sub/and/or/xor   rD, rA, rB
    addi/subi/andi/ori/xori rD, rA, imm
    shli/shri rD, rA, imm
    cmp rA, rB  /  cmpi rA, imm      (unsigned compare, sets the flag register)
    jb/jbe/jae/ja/je/jne label       (conditional on last cmp)
    jmp label                        (unconditional)
    csel.CC rD, rA, rB               rD = CC(flags) ? rA : rB; CC as for branches
    ld.N rD, [rB+off]   st.N rS, [rB+off]    N in {1,2,4,8}
    ld.N! / st.N!                    '!' marks the access forwardable
    call label / ret / jr rA / fence / halt / nop

Registers are r0..r31 (sp is an alias for r31). `call` pushes the return
address at [sp-8] and decrements sp; `ret` loads it back and jumps.
"""

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

MASK64 = (1 << 64) - 1

# internal register file indices beyond the 32 architectural registers
REG_FLAGS = 32   # written by cmp/cmpi, read by conditional branches and csel
REG_RETTMP = 33  # return-target temporary written by ret's load micro-op
NUM_REGS = 34

SP = 31

FL_BELOW = 1
FL_EQUAL = 2

CONDITIONS = ("b", "be", "ae", "a", "e", "ne")


def flags_for(a: int, b: int) -> int:
    fl = 0
    if a < b:
        fl |= FL_BELOW
    if a == b:
        fl |= FL_EQUAL
    return fl


def cond_holds(cond: str, fl: int) -> bool:
    if cond == "b":
        return bool(fl & FL_BELOW)
    if cond == "be":
        return fl != 0
    if cond == "ae":
        return not fl & FL_BELOW
    if cond == "a":
        return fl == 0
    if cond == "e":
        return bool(fl & FL_EQUAL)
    if cond == "ne":
        return not fl & FL_EQUAL
    if cond == "always":
        return True
    raise ValueError(f"unknown condition {cond!r}")


def alu_eval(mnemonic: str, a: int, b: int) -> int:
    """Shared ALU semantics (64-bit unsigned, wrapping)."""
    if mnemonic in ("add", "addi"):
        return (a + b) & MASK64
    if mnemonic in ("sub", "subi"):
        return (a - b) & MASK64
    if mnemonic in ("and", "andi"):
        return a & b
    if mnemonic in ("or", "ori"):
        return a | b
    if mnemonic in ("xor", "xori"):
        return a ^ b
    if mnemonic == "shli":
        return (a << (b & 63)) & MASK64
    if mnemonic == "shri":
        return a >> (b & 63)
    if mnemonic in ("mov", "movi"):
        return a & MASK64
    if mnemonic == "nop":
        return 0
    raise ValueError(f"no ALU semantics for {mnemonic!r}")


class UopKind(Enum):
    ALU = "alu"
    CMP = "cmp"
    BR_COND = "br_cond"
    JR_INDIRECT = "jr_indirect"
    LDA = "lda"            # load address+data
    STA = "sta"            # store address
    STD = "std"            # store data
    FENCE = "fence"
    CSEL = "csel"
    CALL = "call"
    RET_MARKER = "ret_marker"  # reserved; returns decode to [LDA, JR_INDIRECT]
    HALT = "halt"


@dataclass(frozen=True)
class Reg:
    n: int

    def __str__(self):
        return "sp" if self.n == SP else f"r{self.n}"


@dataclass(frozen=True)
class Imm:
    value: int

    def __str__(self):
        return hex(self.value) if abs(self.value) >= 16 else str(self.value)


@dataclass(frozen=True)
class Mem:
    base: int
    offset: int

    def __str__(self):
        reg = "sp" if self.base == SP else f"r{self.base}"
        if self.offset == 0:
            return f"[{reg}]"
        sign = "+" if self.offset >= 0 else "-"
        return f"[{reg}{sign}{abs(self.offset)}]"


@dataclass(frozen=True)
class Instruction:
    pc: int
    mnemonic: str
    operands: Tuple = ()
    annotations: frozenset = frozenset()

    @property
    def forwardable(self) -> bool:
        return "forwardable" in self.annotations


@dataclass(frozen=True)
class MicroOp:
    kind: UopKind
    parent_pc: int
    mnemonic: str = ""
    dst: Optional[int] = None
    dst2: Optional[int] = None
    srcs: Tuple[int, ...] = ()
    imm: int = 0
    size: int = 8
    cond: str = ""
    is_return: bool = False
    forwardable: bool = False
    last: bool = True        # last micro-op of its parent instruction


@dataclass
class DataSegment:
    addr: int
    perm: str                # "rw" or "ro"
    data: bytes


@dataclass
class Program:
    instructions: List[Instruction] = field(default_factory=list)
    labels: Dict[str, int] = field(default_factory=dict)
    data: List[DataSegment] = field(default_factory=list)

    def instr_at(self, pc: int) -> Optional[Instruction]:
        idx = pc >> 2
        if pc & 3 or idx < 0 or idx >= len(self.instructions):
            return None
        return self.instructions[idx]

    def label_at(self, pc: int) -> Optional[str]:
        for name, addr in self.labels.items():
            if addr == pc:
                return name
        return None


class AsmError(Exception):
    """Assembly failure with source location."""

    def __init__(self, msg: str, line: int, col: int = 0):
        super().__init__(f"line {line}, col {col}: {msg}")
        self.line = line
        self.col = col


# mnemonic -> operand signature; r=register, i=immediate-or-label, m=memory,
# l=label-or-immediate code target
_SIGNATURES = {
    "movi": "ri", "mov": "rr",
    "add": "rrr", "sub": "rrr", "and": "rrr", "or": "rrr", "xor": "rrr",
    "addi": "rri", "subi": "rri", "andi": "rri", "ori": "rri", "xori": "rri",
    "shli": "rri", "shri": "rri",
    "cmp": "rr", "cmpi": "ri",
    "jb": "l", "jbe": "l", "jae": "l", "ja": "l", "je": "l", "jne": "l",
    "jmp": "l", "call": "l",
    "jr": "r", "ret": "", "fence": "", "halt": "", "nop": "",
}
for _cc in CONDITIONS:
    _SIGNATURES[f"csel.{_cc}"] = "rrr"
for _sz in (1, 2, 4, 8):
    _SIGNATURES[f"ld.{_sz}"] = "rm"
    _SIGNATURES[f"st.{_sz}"] = "rm"

_BRANCH_CC = {"jb": "b", "jbe": "be", "jae": "ae", "ja": "a", "je": "e", "jne": "ne"}

_REG_RE = re.compile(r"^(r([0-9]|[12][0-9]|3[01])|sp)$")
_MEM_RE = re.compile(r"^\[\s*(r[0-9]+|sp)\s*(?:([+-])\s*([^\]\s]+)\s*)?\]$")
_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def _parse_reg(tok: str, lineno: int, col: int) -> int:
    m = _REG_RE.match(tok)
    if not m:
        raise AsmError(f"expected register, got {tok!r}", lineno, col)
    return SP if tok == "sp" else int(tok[1:])


def _parse_int(tok: str, lineno: int, col: int) -> int:
    try:
        return int(tok, 0)
    except ValueError:
        raise AsmError(f"expected integer, got {tok!r}", lineno, col) from None


def _split_operands(text: str) -> List[Tuple[str, int]]:
    """Split on commas outside brackets; returns (token, column) pairs."""
    out, depth, cur, start = [], 0, [], 0
    for i, ch in enumerate(text):
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == "," and depth == 0:
            tok = "".join(cur).strip()
            if tok:
                out.append((tok, start))
            cur, start = [], i + 1
        else:
            cur.append(ch)
    tok = "".join(cur).strip()
    if tok:
        out.append((tok, start))
    return out


def assemble(source: str) -> Program:
    """Assemble toy-dialect text into a Program. Deterministic; raises AsmError."""
    labels: Dict[str, int] = {}
    pending: List[Tuple] = []   # (lineno, col, mnemonic, annotations, raw_operands)
    segments: List[DataSegment] = []
    pc = 0

    def define_label(name: str, lineno: int, col: int):
        if not _IDENT_RE.match(name):
            raise AsmError(f"bad label name {name!r}", lineno, col)
        if name in labels:
            raise AsmError(f"duplicate label {name!r}", lineno, col)
        labels[name] = pc

    for lineno, raw in enumerate(source.splitlines(), 1):
        line = raw.split(";", 1)[0].rstrip()
        text = line.strip()
        if not text:
            continue
        col = len(line) - len(text)

        if text.startswith("."):
            parts = text.split()
            if parts[0] == ".label":
                if len(parts) != 2:
                    raise AsmError(".label takes one name", lineno, col)
                define_label(parts[1], lineno, col)
            elif parts[0] == ".data":
                if len(parts) < 3:
                    raise AsmError(".data needs ADDR PERM [BYTES...]", lineno, col)
                addr = _parse_int(parts[1], lineno, col)
                if addr % 8:
                    raise AsmError(f".data address {parts[1]} not 8-byte aligned",
                                   lineno, col)
                perm = parts[2]
                if perm not in ("rw", "ro"):
                    raise AsmError(f"permission must be rw or ro, got {perm!r}",
                                   lineno, col)
                try:
                    data = bytes(int(b, 16) for b in parts[3:])
                except ValueError:
                    raise AsmError("data bytes must be hex octets", lineno, col) from None
                segments.append(DataSegment(addr, perm, data))
            else:
                raise AsmError(f"unknown directive {parts[0]!r}", lineno, col)
            continue

        # label sugar: "name:" optionally followed by an instruction
        m = re.match(r"^([A-Za-z_][A-Za-z0-9_]*)\s*:\s*(.*)$", text)
        if m:
            define_label(m.group(1), lineno, col)
            text = m.group(2)
            if not text:
                continue

        parts = text.split(None, 1)
        mnem = parts[0]
        annotations = frozenset()
        if mnem.endswith("!"):
            base = mnem[:-1]
            if not (base.startswith("ld.") or base.startswith("st.")):
                raise AsmError("'!' mark is only valid on loads and stores",
                               lineno, col)
            mnem = base
            annotations = frozenset({"forwardable"})
        if mnem not in _SIGNATURES:
            raise AsmError(f"unknown mnemonic {mnem!r}", lineno, col)
        rest = parts[1] if len(parts) > 1 else ""
        pending.append((lineno, col, mnem, annotations, rest))
        pc += 4

    # second pass: operands, with labels now known
    instructions: List[Instruction] = []
    for idx, (lineno, col, mnem, annotations, rest) in enumerate(pending):
        sig = _SIGNATURES[mnem]
        toks = _split_operands(rest)
        if len(toks) != len(sig):
            raise AsmError(f"{mnem} expects {len(sig)} operand(s), got {len(toks)}",
                           lineno, col)
        operands = []
        for code, (tok, tcol) in zip(sig, toks):
            tcol += col
            if code == "r":
                operands.append(Reg(_parse_reg(tok, lineno, tcol)))
            elif code == "m":
                m = _MEM_RE.match(tok)
                if not m:
                    raise AsmError(f"expected [reg], [reg+off] or [reg-off], got {tok!r}",
                                   lineno, tcol)
                base = _parse_reg(m.group(1), lineno, tcol)
                off = 0
                if m.group(3) is not None:
                    off = _parse_int(m.group(3), lineno, tcol)
                    if m.group(2) == "-":
                        off = -off
                operands.append(Mem(base, off))
            else:  # immediate or label
                if _IDENT_RE.match(tok):
                    if tok not in labels:
                        raise AsmError(f"undefined label {tok!r}", lineno, tcol)
                    operands.append(Imm(labels[tok]))
                else:
                    if code == "l":
                        raise AsmError(f"expected label, got {tok!r}", lineno, tcol)
                    operands.append(Imm(_parse_int(tok, lineno, tcol)))
        instructions.append(Instruction(idx * 4, mnem, tuple(operands), annotations))

    # trailing labels point one past the last instruction; that is allowed only
    # if nothing jumps there, which label resolution above already guarantees.
    segs = sorted(segments, key=lambda s: s.addr)
    for a, b in zip(segs, segs[1:]):
        if a.addr + max(len(a.data), 1) > b.addr:
            raise AsmError(f"data segments at {hex(a.addr)} and {hex(b.addr)} overlap", 0)
    return Program(instructions, labels, segments)


def decode(instr: Instruction) -> List[MicroOp]:
    """Decode one instruction into 1-2 micro-ops. Pure and total."""
    pc = instr.pc
    mnem = instr.mnemonic
    ops = instr.operands

    if mnem in ("movi",):
        return [MicroOp(UopKind.ALU, pc, mnem, dst=ops[0].n, imm=ops[1].value)]
    if mnem == "mov":
        return [MicroOp(UopKind.ALU, pc, mnem, dst=ops[0].n, srcs=(ops[1].n,))]
    if mnem in ("add", "sub", "and", "or", "xor"):
        return [MicroOp(UopKind.ALU, pc, mnem, dst=ops[0].n,
                        srcs=(ops[1].n, ops[2].n))]
    if mnem in ("addi", "subi", "andi", "ori", "xori", "shli", "shri"):
        return [MicroOp(UopKind.ALU, pc, mnem, dst=ops[0].n, srcs=(ops[1].n,),
                        imm=ops[2].value)]
    if mnem == "cmp":
        return [MicroOp(UopKind.CMP, pc, mnem, dst=REG_FLAGS,
                        srcs=(ops[0].n, ops[1].n))]
    if mnem == "cmpi":
        return [MicroOp(UopKind.CMP, pc, mnem, dst=REG_FLAGS, srcs=(ops[0].n,),
                        imm=ops[1].value)]
    if mnem in _BRANCH_CC:
        return [MicroOp(UopKind.BR_COND, pc, mnem, srcs=(REG_FLAGS,),
                        imm=ops[0].value, cond=_BRANCH_CC[mnem])]
    if mnem == "jmp":
        return [MicroOp(UopKind.BR_COND, pc, mnem, imm=ops[0].value, cond="always")]
    if mnem.startswith("csel."):
        return [MicroOp(UopKind.CSEL, pc, mnem, dst=ops[0].n,
                        srcs=(ops[1].n, ops[2].n, REG_FLAGS),
                        cond=mnem.split(".", 1)[1])]
    if mnem.startswith("ld."):
        size = int(mnem.split(".", 1)[1])
        return [MicroOp(UopKind.LDA, pc, mnem, dst=ops[0].n, srcs=(ops[1].base,),
                        imm=ops[1].offset, size=size,
                        forwardable=instr.forwardable)]
    if mnem.startswith("st."):
        size = int(mnem.split(".", 1)[1])
        sta = MicroOp(UopKind.STA, pc, mnem, srcs=(ops[1].base,),
                      imm=ops[1].offset, size=size,
                      forwardable=instr.forwardable, last=False)
        std = MicroOp(UopKind.STD, pc, mnem, srcs=(ops[0].n,), size=size,
                      forwardable=instr.forwardable)
        return [sta, std]
    if mnem == "call":
        # one micro-op: sp -= 8, store return address at new sp, jump
        return [MicroOp(UopKind.CALL, pc, mnem, dst=SP, srcs=(SP,), size=8,
                        imm=ops[0].value)]
    if mnem == "ret":
        lda = MicroOp(UopKind.LDA, pc, mnem, dst=REG_RETTMP, dst2=SP, srcs=(SP,),
                      size=8, last=False)
        jr = MicroOp(UopKind.JR_INDIRECT, pc, mnem, srcs=(REG_RETTMP,),
                     is_return=True)
        return [lda, jr]
    if mnem == "jr":
        return [MicroOp(UopKind.JR_INDIRECT, pc, mnem, srcs=(ops[0].n,))]
    if mnem == "fence":
        return [MicroOp(UopKind.FENCE, pc, mnem)]
    if mnem == "halt":
        return [MicroOp(UopKind.HALT, pc, mnem)]
    if mnem == "nop":
        return [MicroOp(UopKind.ALU, pc, mnem)]
    raise ValueError(f"undecodable mnemonic {mnem!r}")


def disassemble(program: Program) -> str:
    """Pretty-print a Program; assemble(disassemble(p)) == p."""
    by_pc: Dict[int, List[str]] = {}
    for name, addr in program.labels.items():
        by_pc.setdefault(addr, []).append(name)
    lines = []
    for seg in program.data:
        body = " ".join(f"{b:02x}" for b in seg.data)
        lines.append(f".data {hex(seg.addr)} {seg.perm} {body}".rstrip())
    for instr in program.instructions:
        for name in by_pc.get(instr.pc, []):
            lines.append(f"{name}:")
        mnem = instr.mnemonic + ("!" if instr.forwardable else "")
        if instr.operands:
            rendered = []
            for code, op in zip(_SIGNATURES[instr.mnemonic], instr.operands):
                if code == "l" or (code == "i" and program.label_at(op.value)
                                   and instr.mnemonic == "movi"):
                    rendered.append(program.label_at(op.value) or str(op))
                else:
                    rendered.append(str(op))
            lines.append(f"    {mnem} " + ", ".join(rendered))
        else:
            lines.append(f"    {mnem}")
    end = len(program.instructions) * 4
    for name in by_pc.get(end, []):
        lines.append(f"{name}:")
    return "\n".join(lines) + "\n"
