"""Memory system: non-blocking L1 cache with MSHRs, flat DRAM latency, and a
TLB of per-page read/write permissions.

The cache tracks presence and fill timing only; committed data lives in a flat
sparse page store that changes solely at senior-store write-back (and scenario
setup). Fills outstanding in an MSHR are never cancelled: a squashed load's
line still installs, which is exactly the footprint the receiver measures.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .config import SimConfig

PAGE = 4096
LINE = 64


class MemFault(Exception):
    """Access to an unmapped page via a receiver-side primitive."""


@dataclass
class AccessResult:
    status: str                 # "hit" | "miss" | "mshr_full" | "flushed"
    latency: int = 0
    ready_cycle: int = 0
    mshr_allocated: bool = False


@dataclass
class MSHR:
    line_addr: int
    issue_cycle: int
    fill_complete_cycle: int
    originating_seq: int = -1


class MemorySystem:
    def __init__(self, cfg: SimConfig, n_sets: int = 64, n_ways: int = 8):
        self.cfg = cfg
        self.n_sets = n_sets
        self.n_ways = n_ways
        self.pages: Dict[int, bytearray] = {}
        self.tlb: Dict[int, Tuple[bool, bool]] = {}   # page -> (readable, writable)
        self.sets: List[List[int]] = [[] for _ in range(n_sets)]
        self.rr: List[int] = [0] * n_sets
        self.lines: Dict[int, int] = {}               # line addr -> fill cycle
        self.mshrs: Dict[int, MSHR] = {}
        self.mshr_peak = 0

    # -- address space -------------------------------------------------------

    def map_region(self, base: int, size: int, perm: str = "rw") -> None:
        writable = perm == "rw"
        for page in range(base & ~(PAGE - 1), base + size, PAGE):
            self.tlb[page] = (True, writable)

    def load_program_data(self, program) -> None:
        for seg in program.data:
            self.map_region(seg.addr, max(len(seg.data), 1), seg.perm)
            self.write_bytes(seg.addr, seg.data)

    def is_mapped(self, addr: int) -> bool:
        return (addr & ~(PAGE - 1)) in self.tlb

    def tlb_check(self, kind: str, addr: int, mode: str = "lazy") -> str:
        """Permission verdict; when the caller acts on it is the caller's contract."""
        perm = self.tlb.get(addr & ~(PAGE - 1))
        if perm is None:
            return "write_fault" if kind == "write" else "read_fault"
        readable, writable = perm
        if kind == "write" and not writable:
            return "write_fault"
        if kind == "read" and not readable:
            return "read_fault"
        return "ok"

    # -- committed data ------------------------------------------------------

    def _page_for(self, addr: int) -> bytearray:
        page = addr & ~(PAGE - 1)
        buf = self.pages.get(page)
        if buf is None:
            buf = bytearray(PAGE)
            self.pages[page] = buf
        return buf

    def read_bytes(self, addr: int, n: int) -> bytes:
        out = bytearray()
        while n:
            page = addr & ~(PAGE - 1)
            off = addr - page
            take = min(n, PAGE - off)
            buf = self.pages.get(page)
            out += (buf[off:off + take] if buf is not None else bytes(take))
            addr += take
            n -= take
        return bytes(out)

    def write_bytes(self, addr: int, data: bytes) -> None:
        i = 0
        while i < len(data):
            page = addr & ~(PAGE - 1)
            off = addr - page
            take = min(len(data) - i, PAGE - off)
            self._page_for(addr)[off:off + take] = data[i:i + take]
            addr += take
            i += take

    def read_int(self, addr: int, size: int) -> int:
        return int.from_bytes(self.read_bytes(addr, size), "little")

    def write_int(self, addr: int, size: int, value: int) -> None:
        self.write_bytes(addr, (value & ((1 << (8 * size)) - 1)).to_bytes(size, "little"))

    # -- cache and MSHRs -----------------------------------------------------

    def _set_index(self, line_addr: int) -> int:
        return (line_addr // LINE) % self.n_sets

    def line_present(self, addr: int) -> bool:
        return (addr & ~(LINE - 1)) in self.lines

    def _install(self, line_addr: int, cycle: int) -> None:
        if line_addr in self.lines:
            self.lines[line_addr] = cycle
            return
        s = self.sets[self._set_index(line_addr)]
        if len(s) >= self.n_ways:
            victim_way = self.rr[self._set_index(line_addr)]
            self.rr[self._set_index(line_addr)] = (victim_way + 1) % self.n_ways
            evicted = s[victim_way]
            s[victim_way] = line_addr
            del self.lines[evicted]
        else:
            s.append(line_addr)
        self.lines[line_addr] = cycle

    def _evict(self, line_addr: int) -> None:
        if line_addr not in self.lines:
            return
        del self.lines[line_addr]
        s = self.sets[self._set_index(line_addr)]
        s.remove(line_addr)

    def access(self, kind: str, addr: int, cycle: int, seq: int = -1) -> AccessResult:
        """One cache access. kind in {load, store_writeback, probe_flush}."""
        line_addr = addr & ~(LINE - 1)
        if kind == "probe_flush":
            self._evict(line_addr)
            return AccessResult("flushed")
        if line_addr in self.lines:
            latency = 1 if kind == "store_writeback" else self.cfg.l1_latency_cycles
            return AccessResult("hit", latency=latency)
        pending = self.mshrs.get(line_addr)
        if pending is not None:
            return AccessResult("miss", ready_cycle=pending.fill_complete_cycle)
        if len(self.mshrs) >= self.cfg.mshr_count:
            return AccessResult("mshr_full")
        ready = cycle + self.cfg.dram_latency_cycles
        self.mshrs[line_addr] = MSHR(line_addr, cycle, ready, seq)
        self.mshr_peak = max(self.mshr_peak, len(self.mshrs))
        return AccessResult("miss", ready_cycle=ready, mshr_allocated=True)

    def tick(self, cycle: int) -> List[int]:
        """Install lines whose fills completed; returns installed line addresses."""
        done = [a for a, m in self.mshrs.items() if m.fill_complete_cycle <= cycle]
        for line_addr in done:
            self._install(line_addr, cycle)
            del self.mshrs[line_addr]
        return done

    def next_fill_cycle(self) -> Optional[int]:
        if not self.mshrs:
            return None
        return min(m.fill_complete_cycle for m in self.mshrs.values())

    # -- receiver primitives (non-speculative attacker side) ------------------

    def timed_read(self, addr: int) -> Tuple[int, int]:
        """Read committed memory, reporting hit/miss latency. Does not disturb
        cache state: the receiver classifies presence without reloading."""
        page = addr & ~(PAGE - 1)
        perm = self.tlb.get(page)
        if perm is None or not perm[0]:
            raise MemFault(f"timed_read of unmapped/unreadable {addr:#x}")
        latency = (self.cfg.l1_latency_cycles if self.line_present(addr)
                   else self.cfg.dram_latency_cycles)
        return self.read_int(addr, 1), latency

    def flush_line(self, addr: int) -> None:
        self.access("probe_flush", addr, 0)

    # -- state snapshot for architectural comparisons -------------------------

    def committed_pages(self) -> Dict[int, bytes]:
        """Non-zero committed pages, canonical for equality checks."""
        zero = bytes(PAGE)
        return {p: bytes(b) for p, b in sorted(self.pages.items()) if bytes(b) != zero}
