"""Command-line entry point: run, sweep, audit and demo."""

from __future__ import annotations

import argparse
import json
import sys
from typing import List, Optional

from .harness import InvalidScenario, audit, golden_scenario, load_scenario, run
from .harness.runner import RunReport
from .harness.sweep import complaint_sweep, file_size, sweep

DEMO_STAGES = {
    "treatment": ["treatment"],
    "claim": ["treatment", "storage", "insurance"],
    "research": ["treatment", "storage", "research"],
}


def _int_list(text: str) -> List[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc
    if not values or any(v <= 0 for v in values):
        raise argparse.ArgumentTypeError("values must be positive")
    return values


def _print_verdicts(verdicts: dict) -> bool:
    ok = True
    for name, verdict in verdicts.items():
        ok &= verdict["passed"]
        print(f"  {'PASS' if verdict['passed'] else 'FAIL'}  {name}")
        for item in verdict["counterexample"]:
            print(f"        tick {item['tick']}: {item['reason']}")
    return ok


def _summary(report: RunReport) -> None:
    data = report.data
    print(f"scenario {data['scenario']['name']}: {len(data['trace'])} transactions over {data['ticks']} ticks")
    print(f"state digest {data['final_digest']}")


def cmd_run(args) -> int:
    report = run(load_scenario(args.scenario))
    _summary(report)
    if args.out:
        report.save(args.out)
    ok = _print_verdicts(report.assertions)
    return 0 if ok else 1


def cmd_sweep(args) -> int:
    honest = sweep(args.gates, args.buffers)
    complaints = complaint_sweep(args.gates, args.buffers) if args.complaints else []
    ok = all(r.passed for r in honest + complaints)
    print(f"{'gates':>5} {'buffer':>6} {'file':>6} {'commit':>6} {'consent':>7} {'complain':>8}  verdict")
    for i, rep in enumerate(honest):
        p = rep.data["scenario"]["params"]
        ops = rep.op_counts
        complain = complaints[i].op_counts["treatment.patient_complain"]["max"] if complaints else "-"
        passed = rep.passed and (not complaints or complaints[i].passed)
        print(f"{p['gates']:>5} {p['chunk_size']:>6} {file_size(rep):>6} "
              f"{ops['treatment.keep_signed_hash_to_blockchain']['max']:>6} "
              f"{ops['treatment.patient_final_consent']['max']:>7} {complain:>8}  {'PASS' if passed else 'FAIL'}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump([r.data for r in honest + complaints], fh, sort_keys=True)
    return 0 if ok else 1


def cmd_audit(args) -> int:
    with open(args.report) as fh:
        data = json.load(fh)
    verdicts = audit(data)
    stored = data.get("assertions")
    if stored is not None and stored != verdicts:
        print("  note: stored verdicts differ from a fresh audit")
    ok = _print_verdicts(verdicts)
    return 0 if ok else 1


def cmd_demo(args) -> int:
    report = run(golden_scenario(stages=DEMO_STAGES[args.flow]))
    names = {c["address"]: c["name"] for c in report.data["cast"]}
    names[report.data["government"]] = "government"
    for tx in report.data["trace"]:
        status = "" if tx["status"] == "success" else f"  [revert: {tx['reason']}]"
        print(f"t={tx['tick']:>3}  {names.get(tx['caller'], tx['caller'][:8]):<15} "
              f"{tx['contract']}.{tx['function']}{status}")
    balances = report.data["final_balances"]
    print("final balances:")
    for address, amount in balances.items():
        print(f"  {names.get(address, address[:8]):<15} {amount}")
    ok = _print_verdicts(report.assertions)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairhealth", description="Healthcare fair-exchange protocol simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario file and audit it")
    p.add_argument("scenario", help="scenario JSON file")
    p.add_argument("--out", help="write the full report JSON here")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run the golden scenario over a gates x buffer grid")
    p.add_argument("--gates", type=_int_list, default=[4, 8, 16, 32])
    p.add_argument("--buffers", type=_int_list, default=[32, 64, 128])
    p.add_argument("--no-complaints", dest="complaints", action="store_false",
                   help="skip the complaint-bearing companion runs")
    p.add_argument("--out", help="write all reports as a JSON list")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("audit", help="re-audit a saved report")
    p.add_argument("report", help="report JSON file")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("demo", help="print the trace of one protocol flow")
    p.add_argument("flow", choices=sorted(DEMO_STAGES))
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvalidScenario as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
