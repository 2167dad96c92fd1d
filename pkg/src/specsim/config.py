"""Simulator configuration, trace records, and run reports."""

import hashlib
from dataclasses import dataclass, fields, asdict
from typing import Optional

FORWARDING_POLICIES = (
    "baseline",
    "slothbear_stores",
    "slothbear_loads",
    "sloth_marked",
    "arctic_sloth",
)

TLB_ENFORCEMENT_MODES = ("lazy", "eager", "forward_zero")


@dataclass
class SimConfig:
    """All machine knobs. Defaults model one thread of a wide modern core."""

    rob_capacity: int = 224
    issue_width: int = 8
    retire_width: int = 4
    sb_capacity: int = 56
    mshr_count: int = 10
    rsb_depth: int = 16
    bht_size: int = 1024
    forwarding_policy: str = "baseline"
    tlb_enforcement: str = "lazy"
    dram_latency_cycles: int = 300
    l1_latency_cycles: int = 4
    timer_granularity_cycles: int = 1
    seed: int = 0
    cycle_limit: int = 1_000_000

    def __post_init__(self):
        for name in ("rob_capacity", "issue_width", "retire_width", "sb_capacity",
                     "mshr_count", "rsb_depth", "bht_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.bht_size & (self.bht_size - 1):
            raise ValueError("bht_size must be a power of two")
        if self.dram_latency_cycles <= self.l1_latency_cycles:
            raise ValueError("dram_latency_cycles must exceed l1_latency_cycles")
        if self.timer_granularity_cycles < 1:
            raise ValueError("timer_granularity_cycles must be >= 1")
        if self.forwarding_policy not in FORWARDING_POLICIES:
            raise ValueError(f"unknown forwarding_policy {self.forwarding_policy!r}")
        if self.tlb_enforcement not in TLB_ENFORCEMENT_MODES:
            raise ValueError(f"unknown tlb_enforcement {self.tlb_enforcement!r}")

    def digest(self) -> str:
        """Short stable hash of every knob, for reproduction from a report."""
        text = ";".join(f"{f.name}={getattr(self, f.name)}" for f in fields(self))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def replace(self, **kw) -> "SimConfig":
        d = asdict(self)
        d.update(kw)
        return SimConfig(**d)


TRACE_KINDS = ("fetch", "dispatch", "issue", "execute", "forward", "mshr_alloc",
               "fill", "squash", "retire", "fault", "resteer")


@dataclass
class TraceEvent:
    cycle: int
    kind: str
    seq: int
    pc: int
    detail: str = ""

    def line(self) -> str:
        return (f'{{"cycle": {self.cycle}, "kind": "{self.kind}", "seq": {self.seq}, '
                f'"pc": {self.pc}, "detail": "{self.detail}"}}')


@dataclass
class RunReport:
    """Outcome of one simulated run (or one whole scenario)."""

    scenario: str
    config_digest: str
    cycles: int = 0
    retired_instructions: int = 0
    squash_count: int = 0
    forward_count: int = 0
    mshr_peak: int = 0
    inferred_secret: Optional[int] = None
    attack_success: Optional[bool] = None
    fault: Optional[str] = None
    timed_out: bool = False

    @property
    def ipc(self) -> float:
        return self.retired_instructions / self.cycles if self.cycles else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ipc"] = round(self.ipc, 6)
        return d


def parse_config_file(text: str) -> dict:
    """key=value lines -> override dict with typed values; '#' comments allowed."""
    out = {}
    valid = {f.name: f.type for f in fields(SimConfig)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in valid:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        if key in ("forwarding_policy", "tlb_enforcement"):
            out[key] = value
        else:
            out[key] = int(value, 0)
    return out
