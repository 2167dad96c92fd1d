"""
Bounds check bypass on loads, end to end
========================================

The victim guards an array read with a bounds check whose limit is slow to
load. The branch predictor, primed by benign calls, lets the out-of-bounds
read and its dependent probe-array touch run speculatively. The squash erases
every architectural effect, but the probe line it fetched stays in the cache,
and timing all 256 probe lines names the secret byte.
"""

from specsim import SimConfig
from specsim.scenarios import build_gadget_spectre_1_0, run_scenario

cfg = SimConfig()
scenario = build_gadget_spectre_1_0(secret=0x5A)

print("victim bound:     16 (bytes architecturally reachable)")
print(f"secret planted:   {scenario.secret_value:#x} at {scenario.secret_addr:#x}")
print(f"attacker index:   {scenario.attack_regs[10]:#x} (far out of bounds)")

report = run_scenario(scenario, cfg)

print(f"\ncycles simulated: {report.cycles}")
print(f"squashes:         {report.squash_count}")
print(f"inferred secret:  {report.inferred_secret:#x}")
print(f"attack succeeded: {report.attack_success}")

# the same run with a speculation fence between check and body
fenced = build_gadget_spectre_1_0(secret=0x5A, mitigation="fence")
print(f"\nwith fence:       attack_success={run_scenario(fenced, cfg).attack_success}")
