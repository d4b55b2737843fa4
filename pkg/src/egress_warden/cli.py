"""Operator command-line surface for CI pipelines and deploy-time checks.

Exit codes: 0 success / all pass; 1 violations, test failures, or oracle
disagreement; 2 usage, IO, or parse errors; 3 flow explained as deny
(explain only). Reports go to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import ipaddress
import json
import sys
from pathlib import Path

from .flows import Decision, FlowQuery, decide_by_policy, evaluate_flow
from .harness import LiveBackend, SimulatedBackend, run_battery, run_threat_suite
from .monitor import MonitorMode, export_metrics, replay
from .policy import (
    FlowState,
    IsolationPolicy,
    PolicyError,
    Proto,
    endpoints_for,
    parse_policy,
    validate_policy,
)
from .rules import compile_policy, render_ruleset

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_DENY = 3


def _err(message: str) -> None:
    print(f"egress-warden: {message}", file=sys.stderr)


def _load_policy(path: str | None) -> IsolationPolicy | None:
    if path is None:
        _err("--policy is required")
        return None
    try:
        document = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        _err(f"cannot read policy: {exc}")
        return None
    try:
        return parse_policy(document)
    except PolicyError as exc:
        _err(f"cannot parse policy: {exc}")
        return None


def _print_violations(policy: IsolationPolicy) -> int:
    violations = validate_policy(policy)
    for v in violations:
        print(f"{v.code} {v.subject}: {v.message}")
    return len(violations)


def cmd_validate(args: argparse.Namespace) -> int:
    policy = _load_policy(args.policy)
    if policy is None:
        return EXIT_USAGE
    return EXIT_OK if _print_violations(policy) == 0 else EXIT_FAIL


def cmd_compile(args: argparse.Namespace) -> int:
    policy = _load_policy(args.policy)
    if policy is None:
        return EXIT_USAGE
    violations = validate_policy(policy)
    if violations:
        for v in violations:
            print(f"{v.code} {v.subject}: {v.message}", file=sys.stderr)
        return EXIT_FAIL
    text = render_ruleset(compile_policy(policy))
    if args.out is None:
        sys.stdout.write(text)
        return EXIT_OK
    try:
        Path(args.out).write_text(text, encoding="utf-8")
    except OSError as exc:
        _err(f"cannot write ruleset: {exc}")
        return EXIT_USAGE
    return EXIT_OK


def cmd_explain(args: argparse.Namespace) -> int:
    policy = _load_policy(args.policy)
    if policy is None:
        return EXIT_USAGE
    violations = validate_policy(policy)
    if violations:
        _err(f"policy has {len(violations)} violation(s); run validate")
        return EXIT_FAIL

    endpoints = [e for e in endpoints_for(policy) if e.service == args.src]
    if not endpoints:
        _err(f"unknown service {args.src!r}")
        return EXIT_USAGE
    if args.src_zone is not None:
        endpoints = [e for e in endpoints if e.zone == args.src_zone]
        if not endpoints:
            _err(f"service {args.src!r} is not attached to zone {args.src_zone!r}")
            return EXIT_USAGE
    endpoints.sort(key=lambda e: e.zone)

    try:
        dst_ip = ipaddress.ip_address(args.dst)
    except ValueError as exc:
        _err(f"bad --dst: {exc}")
        return EXIT_USAGE
    proto = Proto(args.proto)
    if proto is Proto.ICMP and args.port is not None:
        _err("--port is not valid with --proto icmp")
        return EXIT_USAGE
    if proto is not Proto.ICMP and args.port is None:
        _err(f"--port is required with --proto {proto.value}")
        return EXIT_USAGE
    state = FlowState.NEW if args.state == "new" else FlowState.ESTABLISHED

    ruleset = compile_policy(policy)
    verdicts = []
    for endpoint in endpoints:
        flow = FlowQuery(src_ip=endpoint.ip, dst_ip=dst_ip, dst_port=args.port,
                         proto=proto, state=state)
        verdicts.append((evaluate_flow(ruleset, flow), decide_by_policy(policy, flow)))
    for ruleset_verdict, policy_decision in verdicts:
        if ruleset_verdict.decision is not policy_decision:
            _err(
                "differential alarm: ruleset says "
                f"{ruleset_verdict.decision.value}, policy says {policy_decision.value}"
            )
            return EXIT_FAIL

    # a service attached to several zones may reach the target from any of them
    for ruleset_verdict, _ in verdicts:
        if ruleset_verdict.decision is Decision.ALLOW:
            print(f"ALLOW rule={ruleset_verdict.matched_rule_id}")
            return EXIT_OK
    deny = verdicts[0][0]
    print(f"DENY rule={deny.matched_rule_id}")
    return EXIT_DENY


def cmd_check(args: argparse.Namespace) -> int:
    policy = _load_policy(args.policy)
    if policy is None:
        return EXIT_USAGE
    violations = validate_policy(policy)
    if violations:
        for v in violations:
            print(f"{v.code} {v.subject}: {v.message}", file=sys.stderr)
        return EXIT_FAIL

    backend = SimulatedBackend(policy) if args.backend == "sim" else LiveBackend()
    battery = run_battery(policy, backend)
    report = battery.to_json_dict()
    failed = battery.summary()["fail"] > 0
    if args.threats:
        threats = run_threat_suite(policy, backend)
        report["scenarios"] = threats.to_json_dict()["scenarios"]
        report["scenario_summary"] = threats.summary()
        failed = failed or threats.summary()["fail"] > 0
    print(json.dumps(report, indent=2))
    return EXIT_FAIL if failed else EXIT_OK


def cmd_monitor(args: argparse.Namespace) -> int:
    policy = _load_policy(args.policy)
    if policy is None:
        return EXIT_USAGE
    violations = validate_policy(policy)
    if violations:
        _err(f"policy has {len(violations)} violation(s); run validate")
        return EXIT_FAIL
    mode = MonitorMode.STRICT if args.mode == "strict" else MonitorMode.OBSERVE
    try:
        lines = Path(args.replay).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        _err(f"cannot read events: {exc}")
        return EXIT_USAGE
    state = replay(policy, lines, mode=mode)
    print(json.dumps(state.to_json_dict(), indent=2))
    if args.metrics_out is not None:
        try:
            Path(args.metrics_out).write_text(export_metrics(state), encoding="utf-8")
        except OSError as exc:
            _err(f"cannot write metrics: {exc}")
            return EXIT_USAGE
    breach = state.forbidden > 0 or state.unknown > 0
    if mode is MonitorMode.STRICT and state.malformed > 0:
        breach = True
    return EXIT_FAIL if breach else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="egress-warden",
        description="Compile, verify, and monitor container egress isolation policies.",
    )
    parser.add_argument("--policy", metavar="PATH", help="policy document (JSON)")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("validate", help="check policy invariants; print violations")

    p_compile = sub.add_parser("compile", help="compile the policy to a firewall ruleset")
    p_compile.add_argument("-o", "--out", metavar="PATH", help="write ruleset here instead of stdout")

    p_explain = sub.add_parser("explain", help="explain whether one flow would be permitted")
    p_explain.add_argument("--src", required=True, metavar="SERVICE", help="source service name")
    p_explain.add_argument("--src-zone", metavar="ZONE", help="restrict to one attachment")
    p_explain.add_argument("--dst", required=True, metavar="IP", help="destination address")
    p_explain.add_argument("--port", type=int, metavar="N", help="destination port (tcp/udp)")
    p_explain.add_argument("--proto", required=True, choices=["tcp", "udp", "icmp"])
    p_explain.add_argument("--state", choices=["new", "established"], default="new")

    p_check = sub.add_parser("check", help="run the isolation test battery")
    p_check.add_argument("--backend", choices=["sim", "live"], default="sim")
    p_check.add_argument("--threats", action="store_true", help="also run the threat-scenario suite")

    p_monitor = sub.add_parser("monitor", help="replay a connection event stream")
    p_monitor.add_argument("--replay", required=True, metavar="PATH", help="JSONL event stream")
    p_monitor.add_argument("--mode", choices=["strict", "observe"], default="strict")
    p_monitor.add_argument("--metrics-out", metavar="PATH", help="write metrics exposition here")

    return parser


_COMMANDS = {
    "validate": cmd_validate,
    "compile": cmd_compile,
    "explain": cmd_explain,
    "check": cmd_check,
    "monitor": cmd_monitor,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
