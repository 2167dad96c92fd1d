"""Out-of-order speculative core: fetch along the predicted path, dispatch to
a reorder buffer, superscalar issue, branch resolution with squash, in-order
retirement, and senior-store write-back.

Speculation is tracked by coloring: every micro-op carries the set of branch
tags (sequence numbers of unresolved branches) it was fetched under. A branch
resolving correctly erases its tag everywhere; a misprediction removes every
younger entry, rewinds the rename map and store buffer, and resteers fetch.
Colored entries never retire, so the architectural register file and committed
memory only ever reflect the correct path.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Set

from .config import RunReport, SimConfig, TraceEvent
from .isa import (MASK64, NUM_REGS, MicroOp, Program, UopKind,
                  alu_eval, cond_holds, decode, flags_for)
from .lsu import ForwardingPolicy, StoreBuffer, StoreBufferEntry, forward_decision
from .memory import MemorySystem
from .predictors import (NOT_TAKEN, TAKEN, PredictorState, predict_branch,
                         rsb_pop, rsb_push, train_branch)

DISPATCHED, WAITING, EXECUTING, DONE = 0, 1, 2, 3


@dataclass
class ROBEntry:
    seq: int
    instr_id: int
    uop: MicroOp
    spec_colors: Set[int]
    bindings: List[Optional[int]]
    status: int = DISPATCHED
    done_cycle: int = 0
    result: Optional[int] = None
    result2: Optional[int] = None
    addr: Optional[int] = None
    mem_pending: bool = False          # result read from memory at completion
    predicted: Optional[object] = None  # direction for BR_COND, target for JR
    actual: Optional[object] = None
    tag: Optional[int] = None
    forwarded_from: Optional[int] = None
    fault: Optional[str] = None
    squashed: bool = False


class Core:
    """One single-threaded, deterministic simulation instance."""

    def __init__(self, program: Program, cfg: SimConfig, mem: MemorySystem,
                 pred: PredictorState, policy: ForwardingPolicy,
                 trace: Optional[list] = None, start_cycle: int = 0):
        self.program = program
        self.cfg = cfg
        self.mem = mem
        self.pred = pred
        self.policy = policy
        self.trace = trace
        self.decoded = [decode(i) for i in program.instructions]

        self.rob: List[ROBEntry] = []
        self.by_seq: Dict[int, ROBEntry] = {}
        self.rename: Dict[int, int] = {}
        self.arch_regs: List[int] = [0] * NUM_REGS
        self.live_tags: Set[int] = set()
        self.sb = StoreBuffer(cfg.sb_capacity)
        self.fetch_pc: Optional[int] = 0
        self.start_cycle = start_cycle
        self.cycle = start_cycle
        self.halted = False
        self.fault: Optional[str] = None
        self.seq_counter = 0
        self.instr_counter = 0
        self.squash_count = 0
        self.forward_count = 0
        self.retired_instructions = 0
        self.forward_log: List[tuple] = []   # (load_seq, load_pc, store_seq, value)
        self.squashed_store_seqs: Set[int] = set()

    # -- tracing ---------------------------------------------------------------

    def _ev(self, kind: str, seq: int, pc: int, detail: str = ""):
        if self.trace is not None:
            self.trace.append(TraceEvent(self.cycle, kind, seq, pc, detail))

    @property
    def fence_active(self) -> bool:
        """An unfinished fence is in flight: nothing younger may issue."""
        return any(e.uop.kind == UopKind.FENCE and e.status != DONE
                   for e in self.rob)

    # -- operand handling --------------------------------------------------------

    def _src_value(self, entry: ROBEntry, i: int) -> Optional[int]:
        reg = entry.uop.srcs[i]
        bind = entry.bindings[i]
        if bind is None:
            return self.arch_regs[reg]
        producer = self.by_seq.get(bind)
        if producer is None:
            return self.arch_regs[reg]          # producer already retired
        if producer.status != DONE:
            return None
        if producer.uop.dst == reg:
            return producer.result
        return producer.result2

    def _srcs_ready(self, entry: ROBEntry) -> Optional[List[int]]:
        vals = []
        for i in range(len(entry.uop.srcs)):
            v = self._src_value(entry, i)
            if v is None:
                return None
            vals.append(v)
        return vals

    # -- speculation bookkeeping ---------------------------------------------------

    def _clear_tag(self, tag: int) -> None:
        self.live_tags.discard(tag)
        for e in self.rob:
            e.spec_colors.discard(tag)
        for s in self.sb.entries:
            s.spec_colors.discard(tag)

    def _squash_younger(self, seq: int) -> None:
        removed = [e for e in self.rob if e.seq > seq]
        if not removed:
            return
        self.rob = [e for e in self.rob if e.seq <= seq]
        for e in removed:
            e.squashed = True
            del self.by_seq[e.seq]
            if e.tag is not None:
                self.live_tags.discard(e.tag)
            if e.uop.kind in (UopKind.STA, UopKind.CALL):
                self.squashed_store_seqs.add(e.seq)
            self._ev("squash", e.seq, e.uop.parent_pc)
        self.sb.squash_younger(seq)
        self.rename = {}
        for e in self.rob:
            if e.uop.dst is not None:
                self.rename[e.uop.dst] = e.seq
            if e.uop.dst2 is not None:
                self.rename[e.uop.dst2] = e.seq

    def _resolve_branch(self, entry: ROBEntry) -> None:
        uop = entry.uop
        if uop.kind == UopKind.BR_COND:
            actual_dir = entry.actual
            if entry.predicted == actual_dir:
                if entry.tag is not None:
                    self._clear_tag(entry.tag)
                return
            self.squash_count += 1
            self._squash_younger(entry.seq)
            if entry.tag is not None:
                self.live_tags.discard(entry.tag)
            self.fetch_pc = uop.imm if actual_dir == TAKEN else uop.parent_pc + 4
        else:  # JR_INDIRECT
            target = entry.actual
            if entry.predicted == target:
                if entry.tag is not None:
                    self._clear_tag(entry.tag)
                return
            self.squash_count += 1
            self._squash_younger(entry.seq)
            if entry.tag is not None:
                self.live_tags.discard(entry.tag)
            self.fetch_pc = target
            self._ev("resteer", entry.seq, uop.parent_pc, f"target={target:#x}")

    # -- memory micro-ops ----------------------------------------------------------

    def _attempt_load(self, entry: ROBEntry) -> None:
        uop = entry.uop
        decision = forward_decision(entry.seq, entry.addr, uop.size,
                                    entry.spec_colors, uop.parent_pc,
                                    uop.forwardable, self.sb, self.policy,
                                    self.cfg.tlb_enforcement)
        if decision.kind in ("forward", "forward_zero"):
            entry.result = decision.value
            entry.forwarded_from = decision.store_seq
            entry.status = EXECUTING
            entry.done_cycle = self.cycle + 1
            self.forward_count += 1
            self.forward_log.append((entry.seq, uop.parent_pc, decision.store_seq,
                                     decision.value))
            self._ev("forward", entry.seq, uop.parent_pc,
                     f"value={decision.value:#x} from_seq={decision.store_seq}")
        elif decision.kind == "memory":
            res = self.mem.access("load", entry.addr, self.cycle, entry.seq)
            if res.status == "hit":
                entry.status = EXECUTING
                entry.done_cycle = self.cycle + res.latency
                entry.mem_pending = True
            elif res.status == "miss":
                if res.mshr_allocated:
                    self._ev("mshr_alloc", entry.seq, uop.parent_pc,
                             f"line={entry.addr & ~63:#x}")
                entry.status = EXECUTING
                entry.done_cycle = res.ready_cycle
                entry.mem_pending = True
            else:  # mshr_full: retry next cycle
                entry.status = WAITING
        else:
            entry.status = WAITING

    # -- one pipeline stage each ------------------------------------------------------

    def _stage_complete(self) -> None:
        for line in self.mem.tick(self.cycle):
            self._ev("fill", -1, 0, f"line={line:#x}")
        for entry in list(self.rob):
            if entry.squashed or entry.status != EXECUTING:
                continue
            if entry.done_cycle > self.cycle:
                continue
            if entry.mem_pending:
                entry.result = self.mem.read_int(entry.addr, entry.uop.size)
                entry.mem_pending = False
            entry.status = DONE
            self._ev("execute", entry.seq, entry.uop.parent_pc)
            if entry.uop.kind in (UopKind.BR_COND, UopKind.JR_INDIRECT):
                self._resolve_branch(entry)

    def _stage_retire(self) -> None:
        retired = 0
        while self.rob and retired < self.cfg.retire_width:
            entry = self.rob[0]
            if entry.status != DONE or entry.spec_colors:
                return
            uop = entry.uop
            if entry.fault:
                self.fault = entry.fault
                self._ev("fault", entry.seq, uop.parent_pc, entry.fault)
                return
            if uop.kind in (UopKind.STA, UopKind.STD, UopKind.CALL):
                sbe = self.sb.by_slot(entry.instr_id)
                if sbe.perm_checked == "write_fault":
                    self.fault = f"write_fault pc={uop.parent_pc:#x} addr={sbe.addr:#x}"
                    self._ev("fault", entry.seq, uop.parent_pc, self.fault)
                    return
                self.sb.mark_uop_retired(entry.instr_id)
            if uop.dst is not None:
                self.arch_regs[uop.dst] = entry.result
                if self.rename.get(uop.dst) == entry.seq:
                    del self.rename[uop.dst]
            if uop.dst2 is not None:
                self.arch_regs[uop.dst2] = entry.result2
                if self.rename.get(uop.dst2) == entry.seq:
                    del self.rename[uop.dst2]
            if uop.kind == UopKind.BR_COND and uop.cond != "always":
                train_branch(self.pred, uop.parent_pc, entry.actual)
            if uop.kind == UopKind.LDA and entry.forwarded_from is not None:
                self.policy.learn(uop.parent_pc)
            if uop.kind == UopKind.HALT:
                self.halted = True
            if uop.last:
                self.retired_instructions += 1
            self._ev("retire", entry.seq, uop.parent_pc)
            self.rob.pop(0)
            del self.by_seq[entry.seq]
            retired += 1
            if self.halted:
                return

    def _stage_writeback(self) -> None:
        e = self.sb.oldest_drainable()
        if e is None:
            return
        if e.writeback_ready_cycle is None:
            res = self.mem.access("store_writeback", e.addr, self.cycle)
            if res.status == "hit":
                self.mem.write_int(e.addr, e.size, e.data)
                self.sb.drop(e)
            elif res.status == "miss":
                e.writeback_ready_cycle = res.ready_cycle
            # mshr_full: retry next cycle
        elif self.cycle >= e.writeback_ready_cycle:
            self.mem.write_int(e.addr, e.size, e.data)
            self.sb.drop(e)

    def _begin_execution(self, entry: ROBEntry, vals: List[int]) -> None:
        uop = entry.uop
        kind = uop.kind
        cycle = self.cycle
        self._ev("issue", entry.seq, uop.parent_pc)
        if kind == UopKind.ALU:
            if len(vals) == 2:
                entry.result = alu_eval(uop.mnemonic, vals[0], vals[1])
            elif len(vals) == 1:
                b = uop.imm & MASK64 if uop.mnemonic != "mov" else 0
                entry.result = alu_eval(uop.mnemonic, vals[0], b)
            else:
                entry.result = uop.imm & MASK64 if uop.mnemonic == "movi" else 0
        elif kind == UopKind.CMP:
            b = vals[1] if len(vals) == 2 else uop.imm & MASK64
            entry.result = flags_for(vals[0], b)
        elif kind == UopKind.CSEL:
            entry.result = vals[0] if cond_holds(uop.cond, vals[2]) else vals[1]
        elif kind == UopKind.BR_COND:
            if uop.cond == "always":
                entry.actual = TAKEN
            else:
                entry.actual = TAKEN if cond_holds(uop.cond, vals[0]) else NOT_TAKEN
        elif kind == UopKind.JR_INDIRECT:
            entry.actual = vals[0]
        elif kind == UopKind.LDA:
            addr = (vals[0] + uop.imm) & MASK64
            entry.addr = addr
            if uop.dst2 is not None:                      # ret: bump sp
                entry.result2 = (addr + 8) & MASK64
            if not self.mem.is_mapped(addr):
                entry.fault = f"unmapped_load pc={uop.parent_pc:#x} addr={addr:#x}"
                entry.result = 0
            else:
                self._attempt_load(entry)
                return
        elif kind == UopKind.STA:
            addr = (vals[0] + uop.imm) & MASK64
            entry.addr = addr
            verdict = self.mem.tlb_check("write", addr, self.cfg.tlb_enforcement)
            self.sb.resolve_addr(entry.instr_id, addr, verdict)
        elif kind == UopKind.STD:
            self.sb.resolve_data(entry.instr_id, vals[0])
        elif kind == UopKind.CALL:
            sp_val = vals[0]
            entry.result = (sp_val - 8) & MASK64
            entry.addr = entry.result
            verdict = self.mem.tlb_check("write", entry.addr, self.cfg.tlb_enforcement)
            sbe = self.sb.resolve_addr(entry.instr_id, entry.addr, verdict)
            sbe.data = (uop.parent_pc + 4) & MASK64
        # FENCE and HALT carry no operands and produce no result
        entry.status = EXECUTING
        entry.done_cycle = cycle + 1

    def _stage_issue(self) -> None:
        issued = loads = stds = branches = 0
        width = self.cfg.issue_width
        for entry in self.rob:
            if issued >= width:
                return
            uop = entry.uop
            kind = uop.kind
            if kind == UopKind.FENCE and entry.status != DONE:
                # serializes: nothing younger issues until the fence completes
                if entry.status == DISPATCHED and all(
                        e.status == DONE for e in self.rob if e.seq < entry.seq):
                    entry.status = EXECUTING
                    entry.done_cycle = self.cycle + 1
                    self._ev("issue", entry.seq, uop.parent_pc)
                return
            st = entry.status
            if st >= EXECUTING:
                continue
            if kind == UopKind.LDA:
                if loads >= 2:
                    continue
            elif kind == UopKind.STD:
                if stds >= 1:
                    continue
            elif kind in (UopKind.BR_COND, UopKind.JR_INDIRECT):
                if branches >= 2:
                    continue
            if st == WAITING:
                loads += 1
                issued += 1
                self._attempt_load(entry)
                continue
            vals = self._srcs_ready(entry)
            if vals is None:
                continue
            if kind == UopKind.LDA:
                loads += 1
            elif kind == UopKind.STD:
                stds += 1
            elif kind in (UopKind.BR_COND, UopKind.JR_INDIRECT):
                branches += 1
            issued += 1
            self._begin_execution(entry, vals)

    def _stage_fetch(self) -> None:
        dispatched = 0
        while dispatched < self.cfg.issue_width:
            if self.fetch_pc is None:
                return
            instr = self.program.instr_at(self.fetch_pc)
            if instr is None:
                return                              # fetch stalled off the map
            uops = self.decoded[self.fetch_pc >> 2]
            if len(self.rob) + len(uops) > self.cfg.rob_capacity:
                return
            needs_sb = any(u.kind in (UopKind.STA, UopKind.CALL) for u in uops)
            if needs_sb and self.sb.full:
                return                              # structural stall
            pc = self.fetch_pc
            instr_id = self.instr_counter
            self.instr_counter += 1
            self._ev("fetch", -1, pc, instr.mnemonic)
            next_pc = pc + 4
            for uop in uops:
                seq = self.seq_counter
                self.seq_counter += 1
                entry = ROBEntry(seq, instr_id, uop, set(self.live_tags),
                                 [self.rename.get(r) for r in uop.srcs])
                if uop.kind == UopKind.STA:
                    self.sb.insert(StoreBufferEntry(
                        seq, instr_id, uop.size, forwardable=uop.forwardable,
                        spec_colors=set(entry.spec_colors)))
                elif uop.kind == UopKind.CALL:
                    self.sb.insert(StoreBufferEntry(
                        seq, instr_id, uop.size,
                        spec_colors=set(entry.spec_colors), uop_count=1))
                    rsb_push(self.pred, pc + 4)
                    next_pc = uop.imm
                elif uop.kind == UopKind.BR_COND:
                    if uop.cond == "always":
                        entry.predicted = TAKEN
                        next_pc = uop.imm
                    else:
                        direction = predict_branch(self.pred, pc)
                        entry.predicted = direction
                        entry.tag = seq
                        next_pc = uop.imm if direction == TAKEN else pc + 4
                elif uop.kind == UopKind.JR_INDIRECT:
                    entry.predicted = rsb_pop(self.pred) if uop.is_return else None
                    entry.tag = seq
                    next_pc = entry.predicted       # None stalls fetch
                elif uop.kind == UopKind.HALT:
                    next_pc = None
                if uop.dst is not None:
                    self.rename[uop.dst] = seq
                if uop.dst2 is not None:
                    self.rename[uop.dst2] = seq
                self.rob.append(entry)
                self.by_seq[seq] = entry
                if entry.tag is not None:
                    self.live_tags.add(entry.tag)
                self._ev("dispatch", seq, pc, uop.kind.value)
                dispatched += 1
            self.fetch_pc = next_pc

    def step(self) -> None:
        """Advance one cycle."""
        self._stage_complete()
        self._stage_retire()
        if self.fault:
            return
        self._stage_writeback()
        self._stage_issue()
        self._stage_fetch()
        self.cycle += 1

    # -- whole-run driver ------------------------------------------------------------

    def run(self) -> RunReport:
        report = RunReport("", self.cfg.digest())
        while not self.halted and self.fault is None:
            if self.cycle - self.start_cycle >= self.cfg.cycle_limit:
                report.timed_out = True
                break
            self.step()
        if self.fault is None and not report.timed_out:
            self._drain()
        report.cycles = self.cycle - self.start_cycle
        report.retired_instructions = self.retired_instructions
        report.squash_count = self.squash_count
        report.forward_count = self.forward_count
        report.mshr_peak = self.mem.mshr_peak
        report.fault = self.fault
        return report

    def _drain(self) -> None:
        """After halt, finish senior write-backs and let pending fills land.
        Fills are never cancelled, so a squashed miss still installs its line."""
        guard = 0
        while (self.sb.entries or self.mem.mshrs) and guard < 10_000_000:
            self.mem.tick(self.cycle)
            self._stage_writeback()
            self.cycle += 1
            guard += 1


def run_program(program: Program, cfg: SimConfig,
                mem: Optional[MemorySystem] = None,
                pred: Optional[PredictorState] = None,
                policy: Optional[ForwardingPolicy] = None,
                regs: Optional[Dict[int, int]] = None,
                trace: Optional[list] = None,
                start_cycle: int = 0) -> RunReport:
    """Assembled program -> deterministic report. Same inputs, same report."""
    if mem is None:
        mem = MemorySystem(cfg)
        mem.load_program_data(program)
    if pred is None:
        pred = PredictorState(cfg.bht_size, cfg.rsb_depth)
    if policy is None:
        policy = ForwardingPolicy(cfg.forwarding_policy)
    core = Core(program, cfg, mem, pred, policy, trace, start_cycle)
    if regs:
        for r, v in regs.items():
            core.arch_regs[r] = v & MASK64
    report = core.run()
    report.core = core          # architectural state for callers that compare
    return report
