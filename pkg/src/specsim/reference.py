"""In-order reference interpreter: the architectural oracle.

Executes a Program sequentially with no speculation and no timing. For any
fault-free program the out-of-order core's committed state (registers plus
memory) must match this interpreter exactly, under every forwarding policy.
"""

from dataclasses import dataclass
from typing import Dict, Optional

from .config import SimConfig
from .isa import (MASK64, NUM_REGS, REG_FLAGS, SP, Program, alu_eval,
                  cond_holds, flags_for)
from .memory import MemorySystem

_BRANCHES = {"jb": "b", "jbe": "be", "jae": "ae", "ja": "a", "je": "e", "jne": "ne"}


@dataclass
class RefResult:
    regs: list
    mem: MemorySystem
    fault: Optional[str] = None
    executed: int = 0


def run_reference(program: Program, cfg: SimConfig,
                  mem: Optional[MemorySystem] = None,
                  regs: Optional[Dict[int, int]] = None,
                  max_steps: int = 1_000_000) -> RefResult:
    if mem is None:
        mem = MemorySystem(cfg)
        mem.load_program_data(program)
    r = [0] * NUM_REGS
    if regs:
        for k, v in regs.items():
            r[k] = v & MASK64
    pc = 0
    executed = 0

    while executed < max_steps:
        instr = program.instr_at(pc)
        if instr is None:
            return RefResult(r, mem, f"fetch off map at {pc:#x}", executed)
        executed += 1
        m = instr.mnemonic
        ops = instr.operands
        next_pc = pc + 4

        if m == "movi":
            r[ops[0].n] = ops[1].value & MASK64
        elif m == "mov":
            r[ops[0].n] = r[ops[1].n]
        elif m in ("add", "sub", "and", "or", "xor"):
            r[ops[0].n] = alu_eval(m, r[ops[1].n], r[ops[2].n])
        elif m in ("addi", "subi", "andi", "ori", "xori", "shli", "shri"):
            r[ops[0].n] = alu_eval(m, r[ops[1].n], ops[2].value & MASK64)
        elif m == "cmp":
            r[REG_FLAGS] = flags_for(r[ops[0].n], r[ops[1].n])
        elif m == "cmpi":
            r[REG_FLAGS] = flags_for(r[ops[0].n], ops[1].value & MASK64)
        elif m in _BRANCHES:
            if cond_holds(_BRANCHES[m], r[REG_FLAGS]):
                next_pc = ops[0].value
        elif m == "jmp":
            next_pc = ops[0].value
        elif m.startswith("csel."):
            cc = m.split(".", 1)[1]
            r[ops[0].n] = r[ops[1].n] if cond_holds(cc, r[REG_FLAGS]) else r[ops[2].n]
        elif m.startswith("ld."):
            size = int(m.split(".", 1)[1])
            addr = (r[ops[1].base] + ops[1].offset) & MASK64
            if mem.tlb_check("read", addr) != "ok":
                return RefResult(r, mem, f"unmapped_load pc={pc:#x} addr={addr:#x}",
                                 executed)
            r[ops[0].n] = mem.read_int(addr, size)
        elif m.startswith("st."):
            size = int(m.split(".", 1)[1])
            addr = (r[ops[1].base] + ops[1].offset) & MASK64
            if mem.tlb_check("write", addr) != "ok":
                return RefResult(r, mem, f"write_fault pc={pc:#x} addr={addr:#x}",
                                 executed)
            mem.write_int(addr, size, r[ops[0].n])
        elif m == "call":
            sp_val = (r[SP] - 8) & MASK64
            if mem.tlb_check("write", sp_val) != "ok":
                return RefResult(r, mem, f"write_fault pc={pc:#x} addr={sp_val:#x}",
                                 executed)
            mem.write_int(sp_val, 8, pc + 4)
            r[SP] = sp_val
            next_pc = ops[0].value
        elif m == "ret":
            addr = r[SP]
            if mem.tlb_check("read", addr) != "ok":
                return RefResult(r, mem, f"unmapped_load pc={pc:#x} addr={addr:#x}",
                                 executed)
            next_pc = mem.read_int(addr, 8)
            r[SP] = (addr + 8) & MASK64
        elif m == "jr":
            next_pc = r[ops[0].n]
        elif m in ("fence", "nop"):
            pass
        elif m == "halt":
            return RefResult(r, mem, None, executed)
        else:
            raise ValueError(f"reference cannot execute {m!r}")
        pc = next_pc

    return RefResult(r, mem, "step limit exceeded", executed)


def arch_state(regs, mem: MemorySystem):
    """Canonical (registers, memory) pair for equality assertions."""
    return list(regs[:32]), mem.committed_pages()
