"""Command-line front end: run one scenario, sweep the policy/mitigation
matrix, or capture and pretty-print traces.

Reports are line-delimited JSON with field names matching RunReport, so CI
can assert on attack_success without parsing tables; `--table` adds a human
layer. Exit codes: 0 run completed (attack outcome does not matter), 2
unknown scenario or unreadable scenario file, 3 cycle-limit timeout, 4
unwritable output path.

SPECSIM_CONFIG may name a key=value file applied before flags.
"""

import argparse
import json
import os
import sys
from dataclasses import fields

from .config import (FORWARDING_POLICIES, SimConfig, TLB_ENFORCEMENT_MODES,
                     parse_config_file)
from .lsu import ForwardingPolicy
from .scenarios import (BUILDERS, MATRIX_SCENARIOS, MITIGATIONS, build_scenario,
                        run_scenario, scenario_from_file)

_CONFIG_FIELDS = [f.name for f in fields(SimConfig)]


class _CliError(Exception):
    def __init__(self, code: int, msg: str):
        super().__init__(msg)
        self.code = code


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    for name in _CONFIG_FIELDS:
        flag = "--" + name.replace("_", "-")
        if name == "forwarding_policy":
            parser.add_argument(flag, choices=FORWARDING_POLICIES)
        elif name == "tlb_enforcement":
            parser.add_argument(flag, choices=TLB_ENFORCEMENT_MODES)
        else:
            parser.add_argument(flag, type=lambda v: int(v, 0))


def _build_config(args) -> SimConfig:
    overrides = {}
    env_path = os.environ.get("SPECSIM_CONFIG")
    if env_path:
        with open(env_path) as f:
            overrides.update(parse_config_file(f.read()))
    for name in _CONFIG_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return SimConfig(**overrides)


def _resolve_scenario(args):
    if args.scenario_file:
        try:
            scenario, _ = scenario_from_file(args.scenario_file)
        except (OSError, ValueError) as e:
            raise _CliError(2, f"cannot load scenario file: {e}") from e
        return scenario
    name = args.scenario
    if name is None:
        raise _CliError(2, "give a scenario name or --scenario-file")
    try:
        kw = {}
        if args.secret is not None:
            kw["secret"] = args.secret
        if getattr(args, "amplification", None):
            kw["amplification"] = args.amplification
        if getattr(args, "pad_uops", None):
            kw["pad_uops"] = args.pad_uops
        return build_scenario(name, mitigation=args.mitigation, **kw)
    except KeyError:
        known = ", ".join(sorted(set(BUILDERS) | {"spectre_1_1_rop"}))
        raise _CliError(2, f"unknown scenario {name!r} (known: {known})") from None
    except TypeError as e:
        raise _CliError(2, f"option not supported by {name!r}: {e}") from None


def _policy_for(cfg: SimConfig, args) -> ForwardingPolicy:
    whitelist = set()
    if getattr(args, "arctic_whitelist", None):
        whitelist = ForwardingPolicy.load_whitelist(args.arctic_whitelist)
    return ForwardingPolicy(cfg.forwarding_policy, whitelist)


def _report_lines(report, table: bool) -> str:
    out = [json.dumps(report.to_dict(), sort_keys=True)]
    if table:
        d = report.to_dict()
        width = max(len(k) for k in d)
        out.append("-" * 40)
        out.extend(f"{k:<{width}}  {d[k]}" for k in sorted(d))
    return "\n".join(out)


def cmd_run(args) -> int:
    cfg = _build_config(args)
    scenario = _resolve_scenario(args)
    policy = _policy_for(cfg, args)
    report = run_scenario(scenario, cfg, policy=policy)
    if args.save_whitelist:
        policy.save_whitelist(args.save_whitelist)
    print(_report_lines(report, args.table))
    return 3 if report.timed_out else 0


def cmd_matrix(args) -> int:
    cfg = _build_config(args)
    scenarios = args.scenarios.split(",") if args.scenarios else list(MATRIX_SCENARIOS)
    policies = args.policies.split(",") if args.policies else list(FORWARDING_POLICIES)
    mitigations = args.mitigations.split(",") if args.mitigations else list(MITIGATIONS)
    rows = []
    for name in scenarios:
        for pol in policies:
            for mit in mitigations:
                row = {"scenario": name, "policy": pol, "mitigation": mit,
                       "attack_success": None, "cycles": None, "error": None}
                try:
                    cell_cfg = cfg.replace(forwarding_policy=pol)
                    scenario = build_scenario(name, mitigation=mit)
                    rep = run_scenario(scenario, cell_cfg,
                                       policy=ForwardingPolicy(pol))
                    row["attack_success"] = rep.attack_success
                    row["cycles"] = rep.cycles
                    if rep.timed_out:
                        row["error"] = "timeout"
                    elif rep.fault:
                        row["error"] = rep.fault
                except Exception as e:       # a broken cell must not stop the sweep
                    row["error"] = str(e)
                rows.append(row)
    rows.sort(key=lambda r: (r["scenario"], r["policy"], r["mitigation"]))
    for row in rows:
        print(json.dumps(row, sort_keys=True))
    if args.table:
        print("-" * 72)
        for row in rows:
            outcome = {True: "leaks", False: "safe", None: "-"}[row["attack_success"]]
            err = f"  [{row['error']}]" if row["error"] else ""
            print(f"{row['scenario']:<22} {row['policy']:<18} {row['mitigation']:<12} "
                  f"{outcome:<6} {row['cycles'] or '-':>8}{err}")
    return 0


def cmd_trace(args) -> int:
    cfg = _build_config(args)
    scenario = _resolve_scenario(args)
    policy = _policy_for(cfg, args)
    report = run_scenario(scenario, cfg, policy=policy, collect_trace=True)
    try:
        with open(args.out, "w") as f:
            for ev in report.trace or []:
                f.write(json.dumps({"cycle": ev.cycle, "kind": ev.kind,
                                    "seq": ev.seq, "pc": ev.pc,
                                    "detail": ev.detail}) + "\n")
    except OSError as e:
        print(f"error: cannot write trace: {e}", file=sys.stderr)
        return 4
    print(json.dumps(report.to_dict(), sort_keys=True))
    return 3 if report.timed_out else 0


def cmd_print_trace(args) -> int:
    try:
        with open(args.path) as f:
            lines = f.readlines()
    except OSError as e:
        print(f"error: cannot read trace: {e}", file=sys.stderr)
        return 2
    for line in lines:
        if not line.strip():
            continue
        ev = json.loads(line)
        print(f"{ev['cycle']:>8}  {ev['kind']:<10} seq={ev['seq']:<6} "
              f"pc={ev['pc']:#06x}  {ev['detail']}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="specsim",
        description="speculative out-of-order core simulator: attacks, "
                    "mitigations, and forwarding policies")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario and report")
    p_run.add_argument("scenario", nargs="?")
    p_run.add_argument("--scenario-file")
    p_run.add_argument("--mitigation", default="none",
                       choices=MITIGATIONS + ("fence_gadget",))
    p_run.add_argument("--secret", type=lambda v: int(v, 0))
    p_run.add_argument("--amplification", type=int,
                       help="probe lines per secret value (spectre_1_0)")
    p_run.add_argument("--pad-uops", type=int,
                       help="filler micro-ops between check and payload (spectre_1_0)")
    p_run.add_argument("--arctic-whitelist")
    p_run.add_argument("--save-whitelist")
    p_run.add_argument("--table", action="store_true")
    _add_config_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_mat = sub.add_parser("matrix", help="sweep scenarios x policies x mitigations")
    p_mat.add_argument("--scenarios")
    p_mat.add_argument("--policies")
    p_mat.add_argument("--mitigations")
    p_mat.add_argument("--table", action="store_true")
    _add_config_flags(p_mat)
    p_mat.set_defaults(func=cmd_matrix)

    p_tr = sub.add_parser("trace", help="run a scenario and write its event trace")
    p_tr.add_argument("scenario", nargs="?")
    p_tr.add_argument("--scenario-file")
    p_tr.add_argument("--mitigation", default="none",
                      choices=MITIGATIONS + ("fence_gadget",))
    p_tr.add_argument("--secret", type=lambda v: int(v, 0))
    p_tr.add_argument("--arctic-whitelist")
    p_tr.add_argument("--out", required=True)
    _add_config_flags(p_tr)
    p_tr.set_defaults(func=cmd_trace)

    p_pt = sub.add_parser("print-trace", help="pretty-print a trace file")
    p_pt.add_argument("path")
    p_pt.set_defaults(func=cmd_print_trace)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
