"""Automated isolation test battery and threat-scenario suite.

The battery (T1..T7) exercises the deployed controls through a probe backend:
blocked ICMP and HTTPS egress, exact firewall rules with pinned exceptions,
ingress allow-listing, TLS floor behavior, exposure matching, and the
kill-switch. The threat suite (S1..S5) replays attack playbooks against the
same backend and verifies every attack flow is blocked and the corresponding
static mitigations hold. Both produce complete, deterministic reports: every
test id appears exactly once whatever the outcomes, and a probe capability the
backend lacks marks the dependent test skipped, never passed.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Callable, Protocol

from .flows import (
    PUBLIC_PROBE_TARGETS,
    Decision,
    FlowQuery,
    evaluate_flow,
    _representative_in,
)
from .hardening import (
    CAP_RETAINED,
    PRIVILEGED,
    SECRET_ON_PERSISTENT_PATH,
    WRITABLE_PERSISTENT_MOUNT,
    ObservedExposure,
    TlsOffer,
    check_exposure,
    check_hardening,
    check_tls_floor,
    declared_exposure,
    negotiate_tls,
)
from .monitor import Classification, ConnectionEvent, Monitor, MonitorMode, parse_event
from .policy import (
    FlowState,
    HardeningSpec,
    IsolationPolicy,
    Proto,
    PublishedPort,
    ServiceSpec,
    TlsVersion,
    ZoneKind,
    endpoints_for,
    validate_policy,
)
from .rules import (
    CompileError,
    FirewallRule,
    FirewallRuleSet,
    RuleAction,
    compile_policy,
    diff_rulesets,
)


class Capability(Enum):
    FLOW_EVAL = "flow_eval"
    RULE_DUMP = "rule_dump"
    EXPOSURE_DUMP = "exposure_dump"
    TLS_PROBE = "tls_probe"


class BackendNotSupported(Exception):
    def __init__(self, capability: Capability):
        super().__init__(f"backend does not support {capability.value}")
        self.capability = capability


class ProbeBackend(Protocol):
    """The system under test: either the in-process simulation or (one day) a
    prober talking to a real host."""

    capabilities: frozenset[Capability]

    def eval_flow(self, flow: FlowQuery) -> Decision: ...

    def rule_dump(self) -> FirewallRuleSet: ...

    def exposure_dump(self) -> list[ObservedExposure]: ...

    def tls_probe(self) -> TlsOffer: ...


class SimulatedBackend:
    """Backend that models the host from the policy itself.

    Override hooks inject drifted observations (a tampered ruleset, an extra
    published port, a weak TLS runtime) for mutation testing.
    """

    capabilities = frozenset(Capability)

    def __init__(
        self,
        policy: IsolationPolicy,
        ruleset: FirewallRuleSet | None = None,
        exposure: list[ObservedExposure] | None = None,
        tls_runtime: TlsOffer | None = None,
    ):
        self._policy = policy
        self._ruleset = ruleset if ruleset is not None else compile_policy(policy)
        self._exposure = exposure if exposure is not None else declared_exposure(policy)
        self._tls_runtime = tls_runtime if tls_runtime is not None else TlsOffer(
            policy.tls.min_version, TlsVersion.V13
        )

    def eval_flow(self, flow: FlowQuery) -> Decision:
        return evaluate_flow(self._ruleset, flow).decision

    def rule_dump(self) -> FirewallRuleSet:
        return self._ruleset

    def exposure_dump(self) -> list[ObservedExposure]:
        return list(self._exposure)

    def tls_probe(self) -> TlsOffer:
        return self._tls_runtime


class LiveBackend:
    """Declared interface for probing a real deployment; every probe reports
    itself unsupported until an actual prober is wired in."""

    capabilities: frozenset[Capability] = frozenset()

    def eval_flow(self, flow: FlowQuery) -> Decision:
        raise BackendNotSupported(Capability.FLOW_EVAL)

    def rule_dump(self) -> FirewallRuleSet:
        raise BackendNotSupported(Capability.RULE_DUMP)

    def exposure_dump(self) -> list[ObservedExposure]:
        raise BackendNotSupported(Capability.EXPOSURE_DUMP)

    def tls_probe(self) -> TlsOffer:
        raise BackendNotSupported(Capability.TLS_PROBE)


class Status(Enum):
    PASS = "pass"
    FAIL = "fail"
    SKIPPED = "skipped"


@dataclass(frozen=True, slots=True)
class TestResult:
    test_id: str
    name: str
    status: Status
    details: str

    def to_json_dict(self) -> dict[str, Any]:
        return {"id": self.test_id, "name": self.name, "status": self.status.value,
                "details": self.details}


@dataclass(frozen=True, slots=True)
class TestReport:
    battery: tuple[TestResult, ...]

    def summary(self) -> dict[str, int]:
        return {
            "pass": sum(1 for t in self.battery if t.status is Status.PASS),
            "fail": sum(1 for t in self.battery if t.status is Status.FAIL),
            "skipped": sum(1 for t in self.battery if t.status is Status.SKIPPED),
        }

    def to_json_dict(self) -> dict[str, Any]:
        return {"battery": [t.to_json_dict() for t in self.battery], "summary": self.summary()}


@dataclass(frozen=True, slots=True)
class ScenarioResult:
    scenario_id: str
    name: str
    status: Status
    attack_flows_blocked: float
    mitigations_verified: tuple[str, ...]
    details: str

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "id": self.scenario_id,
            "name": self.name,
            "status": self.status.value,
            "attack_flows_blocked": self.attack_flows_blocked,
            "mitigations_verified": list(self.mitigations_verified),
            "details": self.details,
        }


@dataclass(frozen=True, slots=True)
class ThreatReport:
    scenarios: tuple[ScenarioResult, ...]

    def summary(self) -> dict[str, int]:
        return {
            "pass": sum(1 for s in self.scenarios if s.status is Status.PASS),
            "fail": sum(1 for s in self.scenarios if s.status is Status.FAIL),
            "skipped": sum(1 for s in self.scenarios if s.status is Status.SKIPPED),
        }

    def to_json_dict(self) -> dict[str, Any]:
        return {"scenarios": [s.to_json_dict() for s in self.scenarios],
                "summary": self.summary()}


def _require_valid(policy: IsolationPolicy) -> None:
    violations = validate_policy(policy)
    if violations:
        raise CompileError(
            f"policy has {len(violations)} violation(s), first: "
            f"{violations[0].code} {violations[0].subject}"
        )


def _public_flows(policy: IsolationPolicy, proto: Proto, port: int | None) -> list[FlowQuery]:
    flows = []
    for endpoint in endpoints_for(policy):
        for target in PUBLIC_PROBE_TARGETS:
            flows.append(FlowQuery(src_ip=endpoint.ip, dst_ip=target, dst_port=port,
                                   proto=proto, state=FlowState.NEW))
    return flows


def _count_denied(backend: ProbeBackend, flows: list[FlowQuery]) -> int:
    return sum(1 for f in flows if backend.eval_flow(f) is Decision.DENY)


def _guard(required: frozenset[Capability], backend: ProbeBackend,
           run: Callable[[], tuple[Status, str]]) -> tuple[Status, str]:
    lacking = sorted(c.value for c in required - backend.capabilities)
    if lacking:
        return Status.SKIPPED, f"backend lacks capability: {', '.join(lacking)}"
    try:
        return run()
    except BackendNotSupported as exc:
        return Status.SKIPPED, str(exc)


def run_battery(policy: IsolationPolicy, backend: ProbeBackend) -> TestReport:
    """Execute T1..T7 against the backend; always reports all seven."""
    _require_valid(policy)
    results: list[TestResult] = []

    def record(test_id: str, name: str, status: Status, details: str) -> None:
        results.append(TestResult(test_id, name, status, details))

    def t1() -> tuple[Status, str]:
        flows = _public_flows(policy, Proto.ICMP, None)
        denied = _count_denied(backend, flows)
        ok = denied == len(flows)
        return (Status.PASS if ok else Status.FAIL,
                f"{denied}/{len(flows)} ICMP probes to public targets denied")

    record("T1", "icmp-blocked-to-public",
           *_guard(frozenset({Capability.FLOW_EVAL}), backend, t1))

    def t2() -> tuple[Status, str]:
        flows = _public_flows(policy, Proto.TCP, 443)
        denied = _count_denied(backend, flows)
        ok = denied == len(flows)
        return (Status.PASS if ok else Status.FAIL,
                f"{denied}/{len(flows)} HTTPS probes to public targets denied")

    record("T2", "https-blocked-to-public",
           *_guard(frozenset({Capability.FLOW_EVAL}), backend, t2))

    def t3() -> tuple[Status, str]:
        expected = compile_policy(policy)
        diff = diff_rulesets(expected, backend.rule_dump())
        problems = []
        if not diff.empty:
            problems.append(
                f"ruleset drift: {len(diff.missing)} missing, {len(diff.unexpected)} unexpected, "
                f"{len(diff.reordered)} reordered pair(s)"
            )
        endpoint_ip = {(e.zone, e.service): e.ip for e in endpoints_for(policy)}
        pins = 0
        for airlock in policy.airlocks:
            src = endpoint_ip[(airlock.via_zone, airlock.from_service)]
            pin = FlowQuery(src, airlock.target_ip, airlock.target_port, airlock.proto, FlowState.NEW)
            if backend.eval_flow(pin) is not Decision.ALLOW:
                problems.append(f"airlock {airlock.name}: pin not allowed")
            neighbours = [
                FlowQuery(src, airlock.target_ip + 1, airlock.target_port, airlock.proto, FlowState.NEW),
                FlowQuery(src, airlock.target_ip - 1, airlock.target_port, airlock.proto, FlowState.NEW),
            ]
            if airlock.target_port < 65535:
                neighbours.append(FlowQuery(src, airlock.target_ip, airlock.target_port + 1,
                                            airlock.proto, FlowState.NEW))
            if airlock.target_port > 1:
                neighbours.append(FlowQuery(src, airlock.target_ip, airlock.target_port - 1,
                                            airlock.proto, FlowState.NEW))
            for probe in neighbours:
                if backend.eval_flow(probe) is not Decision.DENY:
                    problems.append(
                        f"airlock {airlock.name}: near-miss {probe.dst_ip}:{probe.dst_port} not denied"
                    )
            pins += 1
        if problems:
            return Status.FAIL, "; ".join(problems)
        return Status.PASS, f"ruleset exact; {pins} airlock pin(s) allowed, all near-misses denied"

    record("T3", "exact-rules-and-pins",
           *_guard(frozenset({Capability.RULE_DUMP, Capability.FLOW_EVAL}), backend, t3))

    def t4() -> tuple[Status, str]:
        if not policy.ingress:
            return Status.PASS, "no ingress rules declared; nothing is reachable from outside"
        zones = {z.name: z for z in policy.zones}
        endpoint_ip = {(e.zone, e.service): e.ip for e in endpoints_for(policy)}
        outsiders = [
            ipaddress.ip_address("203.0.113.9"),
            ipaddress.ip_address("198.51.100.23"),
        ]
        problems = []
        checked = 0
        for rule in policy.ingress:
            svc = policy.service(rule.to_service)
            zone_name = next(
                z for z in svc.attachments if zones[z].kind is ZoneKind.INGRESS_DMZ
            )
            dst = endpoint_ip[(zone_name, rule.to_service)]
            allowed_src = _representative_in(rule.source)
            inside = FlowQuery(allowed_src, dst, rule.port, rule.proto, FlowState.NEW)
            if backend.eval_flow(inside) is not Decision.ALLOW:
                problems.append(f"allowed source {allowed_src} cannot reach {rule.to_service}:{rule.port}")
            for outsider in outsiders:
                if any(outsider in r.source for r in policy.ingress if outsider.version == r.source.version):
                    continue
                probe = FlowQuery(outsider, dst, rule.port, rule.proto, FlowState.NEW)
                if backend.eval_flow(probe) is not Decision.DENY:
                    problems.append(f"unlisted source {outsider} reaches {rule.to_service}:{rule.port}")
            checked += 1
        if problems:
            return Status.FAIL, "; ".join(problems)
        return Status.PASS, f"{checked} ingress rule(s): listed sources admitted, others denied"

    record("T4", "ingress-allowlist-default-deny",
           *_guard(frozenset({Capability.FLOW_EVAL}), backend, t4))

    def t5() -> tuple[Status, str]:
        floor = policy.tls.min_version
        problems = []
        if floor > TlsVersion.V10:
            below = TlsOffer(TlsVersion.V10, TlsVersion(floor - 1))
            if negotiate_tls(floor, below) is not None:
                problems.append(f"offer capped below {floor.label} was not rejected")
        at_floor = negotiate_tls(floor, TlsOffer(floor, floor))
        if at_floor is not floor:
            problems.append(f"offer exactly at {floor.label} was not accepted")
        runtime = backend.tls_probe()
        for finding in check_tls_floor(floor, runtime):
            problems.append(finding.detail)
        if negotiate_tls(floor, runtime) is None:
            problems.append("runtime range does not negotiate with the policy floor")
        if problems:
            return Status.FAIL, "; ".join(problems)
        return Status.PASS, f"floor {floor.label}: below-floor offers rejected, floor accepted, runtime compliant"

    record("T5", "tls-minimum-version",
           *_guard(frozenset({Capability.TLS_PROBE}), backend, t5))

    def t6() -> tuple[Status, str]:
        findings = check_exposure(policy, backend.exposure_dump())
        if findings:
            details = "; ".join(f"{f.code} {f.service}: {f.detail}" for f in findings[:5])
            return Status.FAIL, details
        return Status.PASS, "attachments and published ports match the declaration exactly"

    record("T6", "exposure-matches-declaration",
           *_guard(frozenset({Capability.EXPOSURE_DUMP}), backend, t6))

    def t7() -> tuple[Status, str]:
        mon = Monitor(policy, mode=MonitorMode.STRICT)
        first = endpoints_for(policy)[0]
        event = parse_event(
            {
                "ts": "2026-01-01T00:00:00Z",
                "src_service": first.service,
                "src_ip": str(first.ip),
                "dst_ip": "8.8.8.8",
                "dst_port": 443,
                "proto": "tcp",
                "state": "new",
            }
        )
        mon.ingest(event)
        state = mon.snapshot()
        if state.directives:
            d = state.directives[0]
            return Status.PASS, f"forbidden egress produced directive for {d.target_service!r}"
        return Status.FAIL, "forbidden egress produced no kill directive"

    record("T7", "kill-switch-on-forbidden-egress",
           *_guard(frozenset(), backend, t7))

    return TestReport(battery=tuple(results))


_SCENARIO_TARGETS = (
    (ipaddress.ip_address("8.8.8.8"), 443, Proto.TCP),
    (ipaddress.ip_address("1.1.1.1"), 80, Proto.TCP),
    (ipaddress.ip_address("8.8.4.4"), None, Proto.ICMP),
)


def run_threat_suite(policy: IsolationPolicy, backend: ProbeBackend) -> ThreatReport:
    """Execute S1..S5 against the backend; always reports all five."""
    _require_valid(policy)
    endpoints = endpoints_for(policy)
    zones = {z.name: z for z in policy.zones}
    internal_zone = next(z for z in policy.zones if z.kind is ZoneKind.INTERNAL)
    results: list[ScenarioResult] = []

    def record(scenario_id: str, name: str,
               outcome: tuple[Status, float, tuple[str, ...], str]) -> None:
        status, blocked, verified, details = outcome
        results.append(ScenarioResult(scenario_id, name, status, blocked, verified, details))

    def guarded(scenario_id: str, name: str, required: frozenset[Capability],
                run: Callable[[], tuple[Status, float, tuple[str, ...], str]]) -> None:
        lacking = sorted(c.value for c in required - backend.capabilities)
        if lacking:
            record(scenario_id, name,
                   (Status.SKIPPED, 0.0, (), f"backend lacks capability: {', '.join(lacking)}"))
            return
        try:
            record(scenario_id, name, run())
        except BackendNotSupported as exc:
            record(scenario_id, name, (Status.SKIPPED, 0.0, (), str(exc)))

    def blocked_fraction(flows: list[FlowQuery]) -> tuple[int, int]:
        denied = _count_denied(backend, flows)
        return denied, len(flows)

    def s1() -> tuple[Status, float, tuple[str, ...], str]:
        flows = [
            FlowQuery(e.ip, ip, port, proto, FlowState.NEW)
            for e in endpoints if e.zone == internal_zone.name
            for ip, port, proto in _SCENARIO_TARGETS
        ]
        denied, total = blocked_fraction(flows)
        ok = denied == total
        verified = ("internal-network-isolation", "host-enforced-egress-filtering") if ok else ()
        return (Status.PASS if ok else Status.FAIL, denied / total if total else 1.0, verified,
                f"{denied}/{total} exfiltration flows from the internal zone denied")

    guarded("S1", "malicious-model-weights", frozenset({Capability.FLOW_EVAL}), s1)

    def s2() -> tuple[Status, float, tuple[str, ...], str]:
        flows = [
            FlowQuery(e.ip, ip, port, proto, FlowState.NEW)
            for e in endpoints
            for ip, port, proto in _SCENARIO_TARGETS
        ]
        denied, total = blocked_fraction(flows)
        mon = Monitor(policy, mode=MonitorMode.STRICT)
        classified_forbidden = 0
        for e in endpoints:
            for ip, port, proto in _SCENARIO_TARGETS:
                event = ConnectionEvent(
                    ts=datetime(2026, 1, 1, tzinfo=timezone.utc), src_service=e.service,
                    src_ip=e.ip, dst_ip=ip, dst_port=port, proto=proto, state=FlowState.NEW,
                )
                if mon.ingest(event) is Classification.FORBIDDEN:
                    classified_forbidden += 1
        monitor_ok = classified_forbidden == total and bool(mon.snapshot().directives)
        ok = denied == total and monitor_ok
        verified = ("host-enforced-firewalling", "active-isolation-monitoring") if ok else ()
        return (Status.PASS if ok else Status.FAIL, denied / total if total else 1.0, verified,
                f"{denied}/{total} beacons denied; {classified_forbidden}/{total} classified forbidden by the monitor")

    guarded("S2", "supply-chain-implant", frozenset({Capability.FLOW_EVAL}), s2)

    def s3() -> tuple[Status, float, tuple[str, ...], str]:
        if not policy.airlocks:
            return (Status.PASS, 1.0, ("strict-ip-pinning",),
                    "no airlocks declared; no tunnel surface exists")
        endpoint_ip = {(e.zone, e.service): e.ip for e in endpoints}
        flows = []
        tls_ok = True
        for airlock in policy.airlocks:
            src = endpoint_ip[(airlock.via_zone, airlock.from_service)]
            off_pin_ips = [
                airlock.target_ip + 1,
                airlock.target_ip - 1,
                ipaddress.ip_address("10.99.99.99"),
            ]
            for ip in off_pin_ips:
                if ip != airlock.target_ip:
                    flows.append(FlowQuery(src, ip, airlock.target_port, airlock.proto, FlowState.NEW))
            off_pin_ports = [p for p in (airlock.target_port + 1, airlock.target_port - 1, 8443)
                             if 1 <= p <= 65535 and p != airlock.target_port]
            for port in off_pin_ports:
                flows.append(FlowQuery(src, airlock.target_ip, port, airlock.proto, FlowState.NEW))
            if not airlock.require_upstream_tls_verification:
                tls_ok = False
        denied, total = blocked_fraction(flows)
        ok = denied == total and tls_ok
        verified_list = []
        if denied == total:
            verified_list.append("strict-ip-pinning")
        if tls_ok:
            verified_list.append("upstream-tls-certificate-verification")
        detail = f"{denied}/{total} off-pin tunnel attempts denied"
        if not tls_ok:
            detail += "; an airlock does not require upstream TLS verification"
        return (Status.PASS if ok else Status.FAIL, denied / total if total else 1.0,
                tuple(verified_list), detail)

    guarded("S3", "auth-bridge-compromise", frozenset({Capability.FLOW_EVAL}), s3)

    def s4() -> tuple[Status, float, tuple[str, ...], str]:
        exposed_names = {r.to_service for r in policy.ingress}
        sources = [e for e in endpoints if e.service in exposed_names] or list(endpoints)
        flows = [
            FlowQuery(e.ip, ip, port, proto, FlowState.NEW)
            for e in sources
            for ip, port, proto in _SCENARIO_TARGETS
        ]
        denied, total = blocked_fraction(flows)
        findings = [f for f in check_hardening(policy) if f.code in (CAP_RETAINED, PRIVILEGED)]
        ok = denied == total and not findings
        verified_list = []
        if not findings:
            verified_list.append("capability-privilege-drop")
        if denied == total:
            verified_list.append("host-enforced-egress-restrictions")
        detail = f"{denied}/{total} post-compromise egress flows denied"
        if findings:
            detail += "; " + "; ".join(f"{f.code} {f.service}" for f in findings[:3])
        return (Status.PASS if ok else Status.FAIL, denied / total if total else 1.0,
                tuple(verified_list), detail)

    guarded("S4", "web-app-compromise", frozenset({Capability.FLOW_EVAL}), s4)

    def s5() -> tuple[Status, float, tuple[str, ...], str]:
        findings = [
            f for f in check_hardening(policy)
            if f.code in (SECRET_ON_PERSISTENT_PATH, WRITABLE_PERSISTENT_MOUNT)
        ]
        ok = not findings
        verified = ("in-memory-secret-injection", "selective-read-only-mounts") if ok else ()
        detail = (
            "no secret reachable from persistent or writable storage"
            if ok else "; ".join(f"{f.code} {f.service}: {f.detail}" for f in findings[:3])
        )
        return (Status.PASS if ok else Status.FAIL, 1.0 if ok else 0.0, verified, detail)

    guarded("S5", "credential-theft", frozenset(), s5)

    return ThreatReport(scenarios=tuple(results))


# --- mutation catalog -----------------------------------------------------------

MUTATION_NAMES = (
    "remove-deny-all",
    "widen-airlock",
    "add-public-accept",
    "retain-capability",
    "lower-tls-floor",
    "add-undeclared-port",
)


def apply_mutation(name: str, policy: IsolationPolicy) -> tuple[IsolationPolicy, SimulatedBackend]:
    """Produce the (policy, backend) pair for one cataloged regression.

    Ruleset- and observation-level mutations model host drift behind an intact
    policy; policy-level mutations model a weakened declaration. Every mutation
    must flip at least one battery or threat test to fail.
    """
    if name == "remove-deny-all":
        rs = compile_policy(policy)
        broken = FirewallRuleSet(rules=rs.rules[:-1], policy_hash=rs.policy_hash)
        return policy, SimulatedBackend(policy, ruleset=broken)

    if name == "widen-airlock":
        if not policy.airlocks:
            raise ValueError("mutation needs at least one airlock")
        rs = compile_policy(policy)
        victim_id = f"airlock-{policy.airlocks[0].name}"
        rules = tuple(
            FirewallRule(id=r.id, priority=r.priority, src=r.src, dst=r.dst, proto=r.proto,
                         dest_port=None, state_match=r.state_match, verdict=r.verdict)
            if r.id == victim_id else r
            for r in rs.rules
        )
        return policy, SimulatedBackend(policy, ruleset=FirewallRuleSet(rules, rs.policy_hash))

    if name == "add-public-accept":
        rs = compile_policy(policy)
        leak = FirewallRule(
            id="leak", priority=rs.rules[-1].priority - 1, src=None,
            dst=ipaddress.ip_network("8.8.8.8/32"), proto=Proto.TCP, dest_port=443,
            state_match=FlowState.NEW, verdict=RuleAction.ACCEPT,
        )
        rules = rs.rules[:-1] + (leak, rs.rules[-1])
        return policy, SimulatedBackend(policy, ruleset=FirewallRuleSet(rules, rs.policy_hash))

    if name == "retain-capability":
        victim = policy.services[0]
        hardened = HardeningSpec(
            retained_capabilities=victim.hardening.retained_capabilities + ("NET_ADMIN",),
            mounts=victim.hardening.mounts,
            secrets=victim.hardening.secrets,
            privileged=victim.hardening.privileged,
        )
        services = tuple(
            ServiceSpec(name=s.name, attachments=s.attachments,
                        published_ports=s.published_ports, hardening=hardened)
            if s.name == victim.name else s
            for s in policy.services
        )
        mutated = IsolationPolicy(
            zones=policy.zones, services=services, service_links=policy.service_links,
            airlocks=policy.airlocks, ingress=policy.ingress, tls=policy.tls,
        )
        return mutated, SimulatedBackend(mutated)

    if name == "lower-tls-floor":
        if policy.tls.min_version is TlsVersion.V10:
            raise ValueError("mutation needs a policy floor above 1.0")
        return policy, SimulatedBackend(policy, tls_runtime=TlsOffer(TlsVersion.V10, TlsVersion.V13))

    if name == "add-undeclared-port":
        exposure = declared_exposure(policy)
        victim = exposure[0]
        declared = {(p.port, p.proto) for p in victim.published_ports}
        extra_port = 8080 if (8080, Proto.TCP) not in declared else 9999
        patched = ObservedExposure(
            service=victim.service,
            attachments=victim.attachments,
            published_ports=victim.published_ports + (PublishedPort(extra_port, Proto.TCP),),
        )
        return policy, SimulatedBackend(policy, exposure=[patched] + exposure[1:])

    raise ValueError(f"unknown mutation {name!r}")
