"""Attack and mitigation library: victim gadgets (bounds-check bypass on loads
and stores, read-only overwrite, ghost and halo writes), program transforms for
the software mitigations, the flush+reload receiver, and the scenario runner.

A scenario bundles a victim program with attacker inputs, a planted secret,
priming instructions, and a probe layout. Running it follows the classic
shape: prime the predictors with benign inputs, flush the probe array and the
victim's bound variable, run the victim with attacker inputs (repeating
attempts so values cached by earlier squashed tries feed later ones), then
time every probe line and infer the secret from the fastest.

Memory layout used by the bundled scenarios (flat, byte-addressed):

    0x10000  rw   victim variables (bounds, loop counts, flags); flushed to
                  keep the guarding branch slow
    0x20000  rw   victim array `b` (reads); the secret byte is planted beyond
                  its checked length and beyond its power-of-two padding
    0x24000  rw   halo index array, 0x25000 rw halo payload array
    0x30000  rw   victim array `c` (stores); +0x800 holds the spilled bound /
                  halo target slot
    0x50000  ro   function-pointer table (read-only overwrite target)
    0x40000  rw   stack; sp starts at 0x40800
    0x100000 rw   probe array: entries * amplification lines, `stride` apart
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .config import RunReport, SimConfig
from .core import run_program
from .isa import Program, assemble, disassemble
from .lsu import ForwardingPolicy
from .memory import LINE, MemorySystem
from .predictors import NOT_TAKEN, TAKEN, PredictorState, train_branch
from .reference import arch_state, run_reference

VARS = 0x10000
ARR_B = 0x20000
HALO_IDX = 0x24000
HALO_PAYLOAD = 0x25000
ARR_C = 0x30000
LIM_SLOT = 0x30800
RO_TABLE = 0x50000
STACK = 0x40000
SP0 = 0x40800
PROBE = 0x100000

SECRET_OFF = 0x1800          # beyond lenb=16 and beyond next_pow2 padding
SECRET_ADDR = ARR_B + SECRET_OFF

MITIGATIONS = ("none", "fence", "coarse_mask", "exact_mask")


def next_pow2(n: int) -> int:
    if n < 1:
        raise ValueError("region size must be positive")
    return 1 << (n - 1).bit_length()


# ---------------------------------------------------------------------------
# program transforms
# ---------------------------------------------------------------------------

def _insert_at_label(p: Program, label: str, new_lines: List[str]) -> Program:
    """Insert instructions at the position `label` names (before the
    instruction the label points at). Labels and branch targets recompute."""
    if label not in p.labels:
        raise ValueError(f"unknown label {label!r}")
    target_index = p.labels[label] // 4
    out, seen = [], 0
    inserted = False
    for line in disassemble(p).splitlines():
        is_instr = line.startswith("    ")
        if is_instr and seen == target_index and not inserted:
            out.extend(f"    {t}" for t in new_lines)
            inserted = True
        out.append(line)
        if is_instr:
            seen += 1
    if not inserted:      # label at end of program
        out.extend(f"    {t}" for t in new_lines)
    return assemble("\n".join(out) + "\n")


def transform_insert_fence(p: Program, after: str) -> Program:
    """Place a speculation fence at the position named by `after`. Control
    transfers to that label now meet the fence first."""
    return _insert_at_label(p, after, ["fence"])


def transform_coarse_mask(p: Program, index_reg: int, region_size: int,
                          at: str) -> Program:
    """Bound index_reg by the next power of two of the region size."""
    mask = next_pow2(region_size) - 1
    return _insert_at_label(p, at, [f"andi r{index_reg}, r{index_reg}, {hex(mask)}"])


def transform_exact_mask(p: Program, index_reg: int, bound_reg: int, at: str,
                         scratch: Tuple[int, int] = (25, 26)) -> Program:
    """Branch-free data-dependent truncation: index becomes 0 whenever it is
    not below the bound, even on speculative paths."""
    s1, s2 = scratch
    seq = [
        f"movi r{s1}, 0",
        f"subi r{s2}, r{s1}, 1",
        f"cmp r{index_reg}, r{bound_reg}",
        f"csel.b r{s2}, r{s2}, r{s1}",
        f"and r{index_reg}, r{index_reg}, r{s2}",
    ]
    return _insert_at_label(p, at, seq)


# ---------------------------------------------------------------------------
# scenario description
# ---------------------------------------------------------------------------

@dataclass
class ProbeSpec:
    base: int = PROBE
    stride: int = 512
    entries: int = 256
    amplification: int = 1
    timer_granularity_cycles: Optional[int] = None   # None: use the config's

    def __post_init__(self):
        if self.stride < LINE:
            raise ValueError("stride must cover at least one cache line")
        if self.amplification < 1:
            raise ValueError("amplification factor must be >= 1")

    def line_addr(self, entry: int, k: int) -> int:
        return self.base + (entry * self.amplification + k) * self.stride

    @property
    def span(self) -> int:
        return self.entries * self.amplification * self.stride


@dataclass
class Scenario:
    name: str
    victim: Program
    attack_regs: Dict[int, int] = field(default_factory=dict)
    benign_regs: Dict[int, int] = field(default_factory=dict)
    benign_mem: List[Tuple[int, int, int]] = field(default_factory=list)
    attack_mem: List[Tuple[int, int, int]] = field(default_factory=list)
    regions: List[Tuple[int, int, str]] = field(default_factory=list)
    secret_addr: int = SECRET_ADDR
    secret_value: int = 0x2A
    probe: Optional[ProbeSpec] = None
    priming: int = 2
    attempts: int = 2
    prime_branches: List[Tuple[int, str]] = field(default_factory=list)
    slow_lines: List[int] = field(default_factory=list)
    expected: str = "attack_succeeds"
    is_attack: bool = True

    def __post_init__(self):
        if self.is_attack:
            # the secret must sit outside every region the victim's checks
            # declare reachable (the arrays' checked lengths)
            assert self.secret_addr not in range(ARR_B, ARR_B + 16)
            assert self.secret_addr not in range(ARR_C, ARR_C + 16)


def _saturate(pred: PredictorState, pc: int, direction: str) -> None:
    for _ in range(3):
        train_branch(pred, pc, direction)


def probe_receive(mem: MemorySystem, spec: ProbeSpec, cfg: SimConfig) -> Optional[int]:
    """Time every probe entry (amplification lines each, summed, coarsened to
    the timer granularity) and return the unique fastest entry, or None when
    no entry reads below the hit/miss midpoint or the minimum is not unique."""
    gran = spec.timer_granularity_cycles or cfg.timer_granularity_cycles
    readings = []
    for i in range(spec.entries):
        total = 0
        for k in range(spec.amplification):
            total += mem.timed_read(spec.line_addr(i, k))[1]
        readings.append((total // gran) * gran)
    lowest = min(readings)
    midpoint = spec.amplification * (cfg.l1_latency_cycles + cfg.dram_latency_cycles) // 2
    if lowest >= midpoint or readings.count(lowest) != 1:
        return None
    return readings.index(lowest)


def flush_probe(mem: MemorySystem, spec: ProbeSpec) -> None:
    for line in [a for a in mem.lines if spec.base <= a < spec.base + spec.span]:
        mem.flush_line(line)


def run_scenario(s: Scenario, cfg: SimConfig,
                 policy: Optional[ForwardingPolicy] = None,
                 collect_trace: bool = False) -> RunReport:
    """Prime, flush, attack (possibly repeatedly), then probe."""
    report = RunReport(s.name, cfg.digest())
    mem = MemorySystem(cfg)
    mem.load_program_data(s.victim)
    for base, size, perm in s.regions:
        mem.map_region(base, size, perm)
    if s.probe:
        mem.map_region(s.probe.base, s.probe.span, "rw")
    mem.write_int(s.secret_addr, 1, s.secret_value)
    pred = PredictorState(cfg.bht_size, cfg.rsb_depth)
    if policy is None:
        policy = ForwardingPolicy(cfg.forwarding_policy)
    trace: Optional[list] = [] if collect_trace else None

    security_log = []     # per run: (forwards, squashed store seqs)

    def accumulate(r: RunReport) -> bool:
        report.cycles += r.cycles
        report.retired_instructions += r.retired_instructions
        report.squash_count += r.squash_count
        report.forward_count += r.forward_count
        report.mshr_peak = max(report.mshr_peak, r.mshr_peak)
        report.fault = r.fault
        report.timed_out = report.timed_out or r.timed_out
        security_log.append((list(r.core.forward_log),
                             set(r.core.squashed_store_seqs)))
        return r.fault is None and not r.timed_out

    for addr, size, value in s.benign_mem:
        mem.write_int(addr, size, value)
    for _ in range(s.priming):
        r = run_program(s.victim, cfg, mem=mem, pred=pred, policy=policy,
                        regs=s.benign_regs, start_cycle=report.cycles)
        if not accumulate(r):
            return report
        report.last_core = r.core

    if s.is_attack:
        for addr, size, value in s.attack_mem:
            mem.write_int(addr, size, value)
        for attempt in range(s.attempts):
            for pc, direction in s.prime_branches:
                _saturate(pred, pc, direction)
            if attempt == 0 and s.probe:
                flush_probe(mem, s.probe)
            for addr in s.slow_lines:
                mem.flush_line(addr)
            r = run_program(s.victim, cfg, mem=mem, pred=pred, policy=policy,
                            regs=s.attack_regs, trace=trace,
                            start_cycle=report.cycles)
            if not accumulate(r):
                return report
            report.last_core = r.core
        if s.probe:
            report.inferred_secret = probe_receive(mem, s.probe, cfg)
            report.attack_success = report.inferred_secret == s.secret_value
    report.trace = trace
    report.mem = mem
    report.policy = policy
    report.security_log = security_log
    return report


def no_attack_state(s: Scenario, cfg: SimConfig):
    """Architectural state of the in-order reference on the attack inputs:
    what the machine must commit when speculation leaves no trace."""
    mem = MemorySystem(cfg)
    mem.load_program_data(s.victim)
    for base, size, perm in s.regions:
        mem.map_region(base, size, perm)
    if s.probe:
        mem.map_region(s.probe.base, s.probe.span, "rw")
    mem.write_int(s.secret_addr, 1, s.secret_value)
    for addr, size, value in s.benign_mem:
        mem.write_int(addr, size, value)
    regs = s.benign_regs
    if s.is_attack:
        for _ in range(s.priming):
            ref = run_reference(s.victim, cfg, mem=mem, regs=s.benign_regs)
            assert ref.fault is None, ref.fault
        for addr, size, value in s.attack_mem:
            mem.write_int(addr, size, value)
        regs = s.attack_regs
        for _ in range(s.attempts):
            ref = run_reference(s.victim, cfg, mem=mem, regs=regs)
    else:
        for _ in range(max(s.priming, 1)):
            ref = run_reference(s.victim, cfg, mem=mem, regs=regs)
    assert ref.fault is None, ref.fault
    return arch_state(ref.regs, mem)


# ---------------------------------------------------------------------------
# bundled gadgets
# ---------------------------------------------------------------------------

_COMMON_REGIONS = [
    (ARR_B, 0x2000, "rw"),
    (STACK, 0x1000, "rw"),
    (ARR_C, 0x1000, "rw"),
]


def _transmit(pr: str, sec: str, shift: int = 9) -> str:
    """The indirect-load transmit sequence: touch probe[secret << shift]."""
    return (f"    movi r4, {hex(sec) if isinstance(sec, int) else sec}\n"
            f"    ld.1 r5, [r4]\n"
            f"    shli r5, r5, {shift}\n"
            f"    add r6, {pr}, r5\n"
            f"    ld.1 r7, [r6]\n")


def build_gadget_spectre_1_0(secret: int = 0x2A, mitigation: str = "none",
                             pad_uops: int = 0,
                             amplification: int = 1) -> Scenario:
    """Bounds check bypass on loads: the guarded double load runs before the
    slow bound resolves, leaving the secret's probe line in the cache."""
    body_lines = []
    if amplification == 1:
        body_lines += [
            "    add r3, r11, r10",
            "    ld.1 r4, [r3]",
            "    shli r4, r4, 9",
            "    add r5, r12, r4",
            "    ld.1 r6, [r5]",
        ]
    else:
        shift = (amplification * 512).bit_length() - 1
        body_lines += [
            "    add r3, r11, r10",
            "    ld.1 r4, [r3]",
            f"    shli r4, r4, {shift}",
            "    add r5, r12, r4",
        ]
        body_lines += [f"    ld.1 r6, [r5+{k * 512}]" for k in range(amplification)]
    pad = "".join(f"    movi r9, {i}\n" for i in range(pad_uops))
    src = f"""
main:
    movi r1, {hex(VARS)}
    ld.8 r2, [r1]
    cmp r10, r2
check:
    jae done
{pad}body:
{chr(10).join(body_lines)}
done:
    halt
.data {hex(VARS)} rw 10 00 00 00 00 00 00 00
"""
    p = assemble(src)
    if mitigation == "fence":
        p = transform_insert_fence(p, "body")
    elif mitigation == "coarse_mask":
        p = transform_coarse_mask(p, 10, 4096, "body")
    elif mitigation == "exact_mask":
        p = transform_exact_mask(p, 10, 2, "body")
    expected = "attack_succeeds" if mitigation == "none" else "attack_fails"
    name = "spectre_1_0" if mitigation == "none" else f"spectre_1_0+{mitigation}"
    return Scenario(
        name=name, victim=p,
        attack_regs={10: SECRET_OFF, 11: ARR_B, 12: PROBE},
        benign_regs={10: 2, 11: ARR_B, 12: PROBE},
        regions=list(_COMMON_REGIONS),
        secret_value=secret,
        probe=ProbeSpec(amplification=amplification),
        prime_branches=[(p.labels["check"], NOT_TAKEN)],
        slow_lines=[VARS],
        attempts=2 if amplification == 1 else 12,
        expected=expected,
    )


def build_gadget_spectre_1_1_control(secret: int = 0x2A, mitigation: str = "none",
                                     rop: bool = False,
                                     warm_bound: bool = False) -> Scenario:
    """Bounds check bypass on stores, control variant: the speculative store
    overwrites the on-stack return slot, `ret` forwards the corrupt target,
    and the front end is resteered into the transmit gadget.

    mitigation "fence_gadget" guards only the 1.0-style transmit gadget; the
    attacker adjusts the planted target to land just past the fence.
    """
    if rop:
        gadget = f"""
g1:
    movi r4, {hex(SECRET_ADDR)}
    ld.1 r5, [r4]
    shli r5, r5, 9
    ret
g2:
    add r6, r12, r5
    ld.1 r7, [r6]
    ret
"""
    else:
        gadget = f"""
gadget:
    cmp r10, r2
gcheck:
    jae gdone
gbody:
{_transmit("r12", SECRET_ADDR)}gdone:
    halt
"""
    src = f"""
main:
    call victim
    halt
victim:
    movi r1, {hex(VARS)}
    ld.8 r2, [r1]
    cmp r10, r2
vcheck:
    jae vret
vstore:
    add r3, r11, r10
    st.8 r13, [r3]
vret:
    ret
{gadget}.data {hex(VARS)} rw 10 00 00 00 00 00 00 00
"""
    p = assemble(src)
    entry_label = "g1" if rop else "gbody"
    entry_bump = 0
    if mitigation == "fence":
        p = transform_insert_fence(p, "vstore")
    elif mitigation == "fence_gadget":
        p = transform_insert_fence(p, entry_label)
        entry_bump = 4                      # jump over the fence
    elif mitigation == "coarse_mask":
        p = transform_coarse_mask(p, 10, 0x20000, "vstore")
    elif mitigation == "exact_mask":
        p = transform_exact_mask(p, 10, 2, "vstore")

    ret_slot = SP0 - 8
    y_attack = ret_slot - ARR_C
    attack_regs = {10: y_attack, 11: ARR_C, 12: PROBE, 31: SP0,
                   13: p.labels[entry_label] + entry_bump, 2: 0}
    benign_regs = {10: 8, 11: ARR_C, 12: PROBE, 31: SP0, 13: 0}
    expected = ("attack_succeeds" if mitigation in ("none", "coarse_mask",
                                                    "fence_gadget")
                else "attack_fails")
    if warm_bound:
        expected = "attack_fails"
    name = "spectre_1_1_rop" if rop else "spectre_1_1_control"
    if mitigation != "none":
        name += f"+{mitigation}"
    return Scenario(
        name=name, victim=p,
        attack_regs=attack_regs, benign_regs=benign_regs,
        attack_mem=[(SP0, 8, p.labels["g2"])] if rop else [],
        regions=list(_COMMON_REGIONS),
        secret_value=secret,
        probe=ProbeSpec(),
        prime_branches=[(p.labels["vcheck"], NOT_TAKEN)],
        slow_lines=[] if warm_bound else [VARS],
        expected=expected,
    )


def build_gadget_spectre_1_1_data(secret: int = 0x2A,
                                  mitigation: str = "none") -> Scenario:
    """Bounds check bypass on stores, data variant: the speculative store
    overwrites the spilled bound consumed by a later exact-masked load gadget,
    so the mask passes for an out-of-bounds index."""
    src = f"""
main:
    movi r1, {hex(VARS)}
    ld.8 r2, [r1]
    cmp r10, r2
acheck:
    jae part_b
astore:
    add r3, r11, r10
    st.8 r13, [r3]
part_b:
    movi r20, {hex(LIM_SLOT)}
    ld.8 r21, [r20]
    cmp r22, r21
bcheck:
    jae done
bbody:
    movi r25, 0
    subi r26, r25, 1
    cmp r22, r21
    csel.b r26, r26, r25
    and r27, r22, r26
    add r23, r14, r27
    ld.1 r24, [r23]
    shli r24, r24, 9
    add r28, r12, r24
    ld.1 r29, [r28]
done:
    halt
.data {hex(VARS)} rw 10 00 00 00 00 00 00 00
"""
    p = assemble(src)
    if mitigation == "fence":
        p = transform_insert_fence(p, "astore")
    elif mitigation == "coarse_mask":
        p = transform_coarse_mask(p, 10, 0x1000, "astore")
    elif mitigation == "exact_mask":
        p = transform_exact_mask(p, 10, 2, "astore")

    y_attack = LIM_SLOT - ARR_C   # 0x800: within c's power-of-two padding
    attack_regs = {10: y_attack, 11: ARR_C, 13: 0xFFFFFFFF,
                   22: SECRET_OFF, 14: ARR_B, 12: PROBE}
    benign_regs = {10: 8, 11: ARR_C, 13: 0, 22: 2, 14: ARR_B, 12: PROBE}
    expected = ("attack_succeeds" if mitigation in ("none", "coarse_mask")
                else "attack_fails")
    name = "spectre_1_1_data" + ("" if mitigation == "none" else f"+{mitigation}")
    return Scenario(
        name=name, victim=p,
        attack_regs=attack_regs, benign_regs=benign_regs,
        benign_mem=[(LIM_SLOT, 8, 16)],
        regions=list(_COMMON_REGIONS),
        secret_value=secret,
        probe=ProbeSpec(),
        prime_branches=[(p.labels["acheck"], NOT_TAKEN),
                        (p.labels["bcheck"], NOT_TAKEN)],
        slow_lines=[VARS],
        expected=expected,
    )


def build_gadget_spectre_1_2(secret: int = 0x2A, mitigation: str = "none") -> Scenario:
    """Read-only overwrite: the speculative store targets a function-pointer
    slot on a read-only page. Under lazy permission enforcement the corrupt
    pointer is forwarded to the dependent load and the indirect jump lands in
    the transmit gadget. Succeeds only with tlb_enforcement=lazy."""
    src = f"""
main:
    call victim
    halt
victim:
    movi r1, {hex(VARS)}
    ld.8 r2, [r1]
    cmp r10, r2
vcheck:
    jae vcall
vstore:
    add r3, r11, r10
    st.8 r13, [r3]
vcall:
    movi r4, {hex(RO_TABLE)}
    ld.8 r5, [r4]
    jr r5
fn_ok:
    halt
gadget:
{_transmit("r12", SECRET_ADDR)}    halt
.data {hex(VARS)} rw 10 00 00 00 00 00 00 00
"""
    p = assemble(src)
    if mitigation == "fence":
        p = transform_insert_fence(p, "vstore")
    elif mitigation == "coarse_mask":
        p = transform_coarse_mask(p, 10, 0x40000, "vstore")
    elif mitigation == "exact_mask":
        p = transform_exact_mask(p, 10, 2, "vstore")

    y_attack = RO_TABLE - ARR_C
    attack_regs = {10: y_attack, 11: ARR_C, 13: p.labels["gadget"],
                   12: PROBE, 31: SP0}
    benign_regs = {10: 8, 11: ARR_C, 13: 0, 12: PROBE, 31: SP0}
    expected = ("attack_succeeds" if mitigation in ("none", "coarse_mask")
                else "attack_fails")
    name = "spectre_1_2" + ("" if mitigation == "none" else f"+{mitigation}")
    return Scenario(
        name=name, victim=p,
        attack_regs=attack_regs, benign_regs=benign_regs,
        benign_mem=[(RO_TABLE, 8, p.labels["fn_ok"])],
        regions=list(_COMMON_REGIONS) + [(RO_TABLE, 0x1000, "ro")],
        secret_value=secret,
        probe=ProbeSpec(),
        prime_branches=[(p.labels["vcheck"], NOT_TAKEN)],
        slow_lines=[VARS],
        expected=expected,
    )


def build_gadget_ghost(secret: int = 0x2A, mitigation: str = "none") -> Scenario:
    """Ghost write: an impossible path consumes an uninitialized stack slot as
    a pointer. The first guard predicts correctly (skipping the initializer);
    the second mispredicts into the store through the ghost pointer, which the
    attacker aimed at the return slot via prior-call stack contents."""
    src = f"""
main:
    call victim
    halt
victim:
    movi r1, {hex(VARS + 0x20)}
    ld.8 r2, [r1]
    cmpi r2, 0
gc1:
    je noinit
    movi r3, {hex(VARS + 0x100)}
    st.8 r3, [sp+16]
noinit:
    cmpi r2, 0
gc2:
    je nostore
gload:
    ld.8 r4, [sp+16]
gstore:
    st.8 r13, [r4]
nostore:
    ret
gadget:
{_transmit("r12", SECRET_ADDR)}    halt
.data {hex(VARS)} rw 10 00 00 00 00 00 00 00
"""
    p = assemble(src)
    if mitigation == "fence":
        p = transform_insert_fence(p, "gload")
    # coarse/exact masking target array indices; a raw pointer write has no
    # index to truncate, so those cells stay unprotected by construction

    ret_slot = SP0 - 8
    ghost_slot = ret_slot + 16
    attack_regs = {13: p.labels["gadget"], 12: PROBE, 31: SP0}
    benign_regs = {13: 0, 12: PROBE, 31: SP0}
    expected = ("attack_fails" if mitigation == "fence" else "attack_succeeds")
    name = "ghost" + ("" if mitigation == "none" else f"+{mitigation}")
    return Scenario(
        name=name, victim=p,
        attack_regs=attack_regs, benign_regs=benign_regs,
        benign_mem=[(VARS + 0x20, 8, 1)],
        attack_mem=[(VARS + 0x20, 8, 0), (ghost_slot, 8, ret_slot)],
        regions=list(_COMMON_REGIONS),
        secret_value=secret,
        probe=ProbeSpec(),
        prime_branches=[(p.labels["gc1"], TAKEN), (p.labels["gc2"], NOT_TAKEN)],
        slow_lines=[VARS],
        expected=expected,
    )


def build_gadget_halo(secret: int = 0x2A, mitigation: str = "none") -> Scenario:
    """Halo write: a speculative loop overrun (the checked length is zero but
    slow to load) consumes unsanitized index-array entries. The overrun store
    lands on the spilled bound of the loop body's masked load gadget."""
    src = f"""
main:
    movi r1, {hex(VARS)}
    ld.8 r2, [r1]
    movi r5, 0
loop:
    cmp r5, r2
hcheck:
    jae done
hbody:
    shli r4, r5, 3
    add r3, r16, r4
    ld.8 r6, [r3]
hclamp:
    add r7, r17, r6
    shli r8, r5, 3
    add r9, r18, r8
    ld.8 r10, [r9]
hstore:
    st.8 r10, [r7]
    ld.8 r20, [r19]
    movi r25, 0
    subi r26, r25, 1
    cmp r21, r20
    csel.b r26, r26, r25
    and r27, r21, r26
    add r23, r14, r27
    ld.1 r24, [r23]
    shli r24, r24, 9
    add r28, r12, r24
    ld.1 r29, [r28]
    addi r5, r5, 1
    jmp loop
done:
    halt
.data {hex(VARS)} rw 00 00 00 00 00 00 00 00
"""
    p = assemble(src)
    if mitigation == "fence":
        p = transform_insert_fence(p, "hstore")
    elif mitigation == "coarse_mask":
        p = transform_coarse_mask(p, 6, 0x1000, "hclamp")
    elif mitigation == "exact_mask":
        p = transform_exact_mask(p, 6, 30, "hclamp")

    attack_regs = {16: HALO_IDX, 17: ARR_C, 18: HALO_PAYLOAD,
                   19: LIM_SLOT, 21: SECRET_OFF, 14: ARR_B, 12: PROBE,
                   30: 0x100}
    expected = ("attack_succeeds" if mitigation in ("none", "coarse_mask")
                else "attack_fails")
    name = "halo" + ("" if mitigation == "none" else f"+{mitigation}")
    return Scenario(
        name=name, victim=p,
        attack_regs=attack_regs, benign_regs=dict(attack_regs),
        benign_mem=[(HALO_IDX, 8, LIM_SLOT - ARR_C),
                    (HALO_PAYLOAD, 8, 0xFFFFFFFF),
                    (LIM_SLOT, 8, 16)],
        regions=list(_COMMON_REGIONS) + [(HALO_IDX, 0x1000, "rw"),
                                         (HALO_PAYLOAD, 0x1000, "rw")],
        secret_value=secret,
        probe=ProbeSpec(),
        priming=0,
        attempts=4,
        prime_branches=[(p.labels["hcheck"], NOT_TAKEN)],
        slow_lines=[VARS],
        expected=expected,
    )


def build_benign_spill(mitigation: str = "none", iterations: int = 24) -> Scenario:
    """Register-spill loop: stores immediately reloaded, the hot path that
    store-to-load blocking penalizes. All spill accesses carry the forwardable
    mark. A dependency chain ahead of each spill delays retirement (so the
    store is still speculative when the reload wants it) and a late-resolving
    never-taken guard keeps the reloads colored, so both blocking variants pay
    their cost while forwarding policies run at full speed."""
    # the nop prologue stands in for a distinct link address: the whitelist is
    # keyed on load addresses, so the benchmark must not alias the victims' code
    prologue = "    nop\n" * 32
    src = f"""
main:
{prologue}    ld.8 r6, [sp+8]
    movi r1, {iterations}
    movi r2, 1
    movi r3, 2
    movi r9, 0
    movi r20, 0x7fffffffffffffff
loop:
    add r9, r9, r2
    add r9, r9, r3
    add r9, r9, r2
    add r9, r9, r3
    add r9, r9, r2
    add r9, r9, r3
    cmp r9, r20
guard:
    jae loopx
    st.8! r2, [sp+8]
    st.8! r3, [sp+16]
    ld.8! r6, [sp+8]
    ld.8! r7, [sp+16]
    add r2, r6, r7
    add r3, r7, r6
    subi r1, r1, 1
    cmpi r1, 0
bloop:
    jne loop
loopx:
    halt
"""
    p = assemble(src)
    if mitigation == "fence":
        p = transform_insert_fence(p, "bloop")
    regs = {31: SP0}
    name = "benign_spill" + ("" if mitigation == "none" else f"+{mitigation}")
    return Scenario(
        name=name, victim=p,
        attack_regs=dict(regs), benign_regs=dict(regs),
        regions=[(STACK, 0x1000, "rw")],
        probe=None, priming=0, attempts=1,
        expected="attack_fails", is_attack=True,
    )


BUILDERS = {
    "spectre_1_0": build_gadget_spectre_1_0,
    "spectre_1_1_control": build_gadget_spectre_1_1_control,
    "spectre_1_1_data": build_gadget_spectre_1_1_data,
    "spectre_1_2": build_gadget_spectre_1_2,
    "ghost": build_gadget_ghost,
    "halo": build_gadget_halo,
    "benign_spill": build_benign_spill,
}

MATRIX_SCENARIOS = ("spectre_1_0", "spectre_1_1_data", "spectre_1_1_control",
                    "spectre_1_2", "ghost", "halo")


def build_scenario(name: str, mitigation: str = "none", **kw) -> Scenario:
    if name == "spectre_1_1_rop":
        return build_gadget_spectre_1_1_control(mitigation=mitigation, rop=True, **kw)
    if name not in BUILDERS:
        raise KeyError(f"unknown scenario {name!r}")
    if name == "benign_spill":
        return BUILDERS[name](mitigation=mitigation)
    return BUILDERS[name](mitigation=mitigation, **kw)


# ---------------------------------------------------------------------------
# declarative scenario files
# ---------------------------------------------------------------------------

def scenario_from_file(path: str) -> Tuple[Scenario, dict]:
    """Load a custom scenario from key=value text. Recognized keys:

    name, program (path to .asm), secret_addr, secret_value, priming,
    attempts, expected, probe_base, probe_stride, probe_entries,
    amplification, reg.rN / benign_reg.rN, mem.ADDR.SIZE / benign_mem...,
    map.BASE.SIZE=perm, flush=addr[,addr...], prime.LABEL=taken|not_taken
    """
    opts: Dict[str, str] = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            k, _, v = line.partition("=")
            opts[k.strip()] = v.strip()
    if "program" not in opts:
        raise ValueError(f"{path}: missing program=")
    with open(opts["program"]) as f:
        victim = assemble(f.read())

    def num(key, default):
        return int(opts[key], 0) if key in opts else default

    probe = None
    if "probe_base" in opts:
        probe = ProbeSpec(base=num("probe_base", PROBE),
                          stride=num("probe_stride", 512),
                          entries=num("probe_entries", 256),
                          amplification=num("amplification", 1))
    attack_regs, benign_regs = {}, {}
    attack_mem, benign_mem = [], []
    regions, slow, prime = [], [], []
    for k, v in opts.items():
        if k.startswith("reg.r"):
            attack_regs[int(k[5:])] = int(v, 0)
        elif k.startswith("benign_reg.r"):
            benign_regs[int(k[12:])] = int(v, 0)
        elif k.startswith("mem."):
            _, addr, size = k.split(".")
            attack_mem.append((int(addr, 0), int(size), int(v, 0)))
        elif k.startswith("benign_mem."):
            _, addr, size = k.split(".")
            benign_mem.append((int(addr, 0), int(size), int(v, 0)))
        elif k.startswith("map."):
            _, base, size = k.split(".")
            regions.append((int(base, 0), int(size, 0), v))
        elif k == "flush":
            slow = [int(a, 0) for a in v.split(",") if a]
        elif k.startswith("prime."):
            label = k[6:]
            if label not in victim.labels:
                raise ValueError(f"{path}: prime target {label!r} not in program")
            prime.append((victim.labels[label],
                          TAKEN if v == "taken" else NOT_TAKEN))
    s = Scenario(
        name=opts.get("name", path),
        victim=victim,
        attack_regs=attack_regs, benign_regs=benign_regs or dict(attack_regs),
        attack_mem=attack_mem, benign_mem=benign_mem,
        regions=regions,
        secret_addr=num("secret_addr", SECRET_ADDR),
        secret_value=num("secret_value", 0x2A),
        probe=probe,
        priming=num("priming", 2),
        attempts=num("attempts", 2),
        prime_branches=prime,
        slow_lines=slow,
        expected=opts.get("expected", "attack_succeeds"),
    )
    return s, opts


def warm_whitelist(cfg: SimConfig) -> set:
    """Run the benign spill benchmark under the baseline policy and return the
    load pcs that consumed forwarded data on the committed path."""
    base_cfg = cfg.replace(forwarding_policy="baseline")
    policy = ForwardingPolicy("baseline")
    run_scenario(build_benign_spill(), base_cfg, policy=policy)
    return set(policy.whitelist)
