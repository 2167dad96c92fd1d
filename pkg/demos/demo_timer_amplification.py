"""
Coarse timers and cache-footprint amplification
===============================================

Coarsening the receiver's timer below the hit/miss gap hides a single-line
footprint: every probe reading rounds to the same value. Touching many lines
per secret value restores the signal, because the summed walk over resident
vs non-resident lines differs by far more than the granularity. The transmit
side accumulates its footprint across repeated squashed attempts, since miss
fills are never cancelled and survive each squash.
"""

from specsim import SimConfig
from specsim.scenarios import build_gadget_spectre_1_0, run_scenario

base = SimConfig()
gran = 10 * base.dram_latency_cycles
coarse = base.replace(timer_granularity_cycles=gran)

print(f"l1 hit {base.l1_latency_cycles} cycles, miss {base.dram_latency_cycles} "
      f"cycles, timer granularity {gran} cycles\n")

for amp in (1, 64):
    r = run_scenario(build_gadget_spectre_1_0(amplification=amp), coarse)
    label = hex(r.inferred_secret) if r.inferred_secret is not None else "no signal"
    print(f"amplification {amp:>3}: inferred = {label:>10}   "
          f"(mshr peak {r.mshr_peak}, {r.cycles} cycles)")
