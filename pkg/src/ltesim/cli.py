"""Command line front end: run scenarios, validate them, explain traces."""

import argparse
import json
import sys
from pathlib import Path

from .codec import (
    AttachAccept,
    AttachReject,
    AttachRequest,
    CAUSE_LABELS,
    Guti,
    IdentityRequest,
    IdentityResponse,
    MalformedEmm,
    TauReject,
    TauRequest,
    decode_emm,
    message_label,
)
from .engine import ScenarioError, Simulation, load_scenario_file, write_report, write_trace


def _redact(digits: str, full: bool) -> str:
    if full or len(digits) <= 5:
        return digits
    return "*" * (len(digits) - 5) + digits[-5:]


def _guti_str(guti: Guti) -> str:
    return (f"{guti.plmn.mcc}{guti.plmn.mnc}-{guti.mme_group:04x}"
            f"-{guti.mme_code:02x}-{guti.m_tmsi:08x}")


def _cause_str(cause) -> str:
    label = CAUSE_LABELS.get(cause.value)
    return f"cause={cause.value} ({label})" if label else f"cause={cause.value}"


def describe_message(msg, full: bool = False) -> str:
    """Human rendering of a decoded message, identities redacted by default."""
    label = message_label(msg)
    if isinstance(msg, AttachRequest):
        if isinstance(msg.identity, Guti):
            return f"{label} guti={_guti_str(msg.identity)}"
        return f"{label} imsi={_redact(msg.identity.digits, full)}"
    if isinstance(msg, AttachAccept):
        return f"{label} guti={_guti_str(msg.guti)} tac={msg.tac}"
    if isinstance(msg, (AttachReject, TauReject)):
        return f"{label} {_cause_str(msg.cause)}"
    if isinstance(msg, TauRequest):
        return f"{label} guti={_guti_str(msg.guti)} last_tac={msg.last_tac}"
    if isinstance(msg, IdentityRequest):
        return f"{label} requested={msg.requested.name}"
    if isinstance(msg, IdentityResponse):
        return f"{label} imsi={_redact(msg.imsi.digits, full)}"
    return label


def _cmd_run(args) -> int:
    try:
        scenario = load_scenario_file(args.scenario)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read scenario: {exc}", file=sys.stderr)
        return 1
    trace, report = Simulation(scenario).run()
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_trace(trace, out_dir / "trace.jsonl")
        write_report(report, out_dir / "report.json")
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return 1
    if not args.quiet:
        _print_summary(args.scenario, trace, report, out_dir)
    return 0


def _print_summary(scenario_path, trace, report, out_dir) -> None:
    print(f"ran {scenario_path} for {report['settings']['end_ms']} ms"
          f" ({len(trace)} trace records)")
    total = sum(len(rows) for rows in report["captures"].values())
    print(f"{total} capture{'s' if total != 1 else ''}")
    for cell_id, rows in report["captures"].items():
        for row in rows:
            print(f"  cell {cell_id}: t={row['t_ms']} ms"
                  f" imsi={_redact(row['imsi'], full=False)}")
    denials = {ue: spans for ue, spans in report["denial_intervals"].items() if spans}
    print(f"{len(denials)} ue(s) with denial intervals")
    for ue, spans in denials.items():
        rendered = ", ".join(f"[{a}..{b}] ms" for a, b in spans)
        print(f"  {ue}: {rendered}")
    print("final states:")
    for ue, state in report["final_states"].items():
        camped = state["camped_cell"]
        where = f" on cell {camped}" if camped is not None else ""
        print(f"  {ue}: {state['emm']}{where}")
    attack = report.get("attack")
    if attack:
        print(f"attack: {attack['mode']} status={attack['status']}"
              + (f" ({attack['failure']})" if attack.get("failure") else ""))
    print(f"wrote {out_dir / 'trace.jsonl'} and {out_dir / 'report.json'}")


def _cmd_validate(args) -> int:
    try:
        scenario = load_scenario_file(args.scenario)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read scenario: {exc}", file=sys.stderr)
        return 1
    print(f"scenario OK: {len(scenario.cells)} cells, {len(scenario.ues)} ues,"
          f" {len(scenario.events)} scripted events")
    print("resolved settings:")
    for key, value in scenario.settings().items():
        print(f"  {key}: {value}")
    return 0


def _cmd_explain_trace(args) -> int:
    try:
        lines = Path(args.trace).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        print(f"cannot read trace: {exc}", file=sys.stderr)
        return 1
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            msg = decode_emm(bytes.fromhex(record["hex"]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError, MalformedEmm) as exc:
            print(f"line {number}: undecodable record: {exc}", file=sys.stderr)
            return 2
        note = f"  ({record['note']})" if record.get("note") else ""
        print(f"{record.get('t_ms', '?'):>8} ms  "
              f"{record.get('sender', '?')} -> {record.get('receiver', '?')}  "
              f"earfcn {record.get('earfcn', '?')}  "
              f"{describe_message(msg, full=args.full)}{note}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ltesim",
        description="Protocol-level simulator of rogue-cell identity catching"
                    " and the denial of service that follows it.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario, write trace and report")
    p_run.add_argument("scenario", help="scenario JSON file")
    p_run.add_argument("--out", default="out", help="output directory (default: out)")
    p_run.add_argument("--quiet", action="store_true", help="suppress the summary")
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="check a scenario file and show defaults")
    p_val.add_argument("scenario", help="scenario JSON file")
    p_val.set_defaults(func=_cmd_validate)

    p_exp = sub.add_parser("explain-trace", help="render a trace file as decoded messages")
    p_exp.add_argument("trace", help="trace JSON Lines file")
    p_exp.add_argument("--full", action="store_true",
                       help="show full subscriber identities (redacted by default)")
    p_exp.set_defaults(func=_cmd_explain_trace)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
