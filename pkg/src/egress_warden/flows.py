"""Dual-route flow admission oracles.

A hypothetical connection attempt can be judged two independent ways: by
first-match evaluation over a compiled ruleset (:func:`evaluate_flow`) and by
a direct decision procedure over the policy itself (:func:`decide_by_policy`).
The two routes share no code path that could hide a compiler bug, which makes
their agreement over a flow universe a meaningful differential check
(:func:`differential_sweep`).
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

from .policy import (
    Endpoint,
    FlowState,
    IPAddress,
    IsolationPolicy,
    Proto,
    endpoints_for,
    is_private_ip,
    validate_policy,
)
from .rules import FirewallRuleSet, RuleAction, compile_policy

PUBLIC_PROBE_TARGETS = (
    ipaddress.ip_address("8.8.8.8"),
    ipaddress.ip_address("1.1.1.1"),
    ipaddress.ip_address("8.8.4.4"),
)

SWEEP_PORTS = (80, 443, 636, 8000, 8080, 3389)


class Decision(Enum):
    ALLOW = "allow"
    DENY = "deny"


class DecideError(Exception):
    """Raised when the policy-direct oracle is handed an invalid policy."""

    code = "INVALID_POLICY"


@dataclass(frozen=True, slots=True)
class FlowQuery:
    """A connection-granularity flow: no payloads, no source ports."""

    src_ip: IPAddress
    dst_ip: IPAddress
    dst_port: int | None
    proto: Proto
    state: FlowState

    def __post_init__(self):
        if self.proto is Proto.ICMP:
            if self.dst_port is not None:
                raise ValueError("ICMP flows carry no destination port")
        elif self.dst_port is None:
            raise ValueError(f"{self.proto.value} flows require a destination port")


@dataclass(frozen=True, slots=True)
class Verdict:
    decision: Decision
    matched_rule_id: str | None
    rationale: str


def _ip_key(ip: IPAddress) -> tuple[int, int]:
    return (ip.version, int(ip))


def _net_key(net) -> tuple[int, int, int]:
    return (net.version, int(net.network_address), int(net.netmask))


def _net_contains(net_key: tuple[int, int, int], ip_key: tuple[int, int]) -> bool:
    return ip_key[0] == net_key[0] and (ip_key[1] & net_key[2]) == net_key[1]


# --- ruleset route -------------------------------------------------------------


@lru_cache(maxsize=512)
def _ruleset_matcher(ruleset: FirewallRuleSet) -> tuple:
    entries = []
    for rule in ruleset.rules:
        entries.append(
            (
                None if rule.src is None else _net_key(rule.src),
                None if rule.dst is None else _net_key(rule.dst),
                rule.proto,
                rule.dest_port,
                rule.state_match,
                rule.verdict is RuleAction.ACCEPT,
                rule.id,
            )
        )
    return tuple(entries)


def _match(matcher: tuple, src, dst, port, proto, state) -> tuple[bool, str] | None:
    for rsrc, rdst, rproto, rport, rstate, accept, rule_id in matcher:
        if rstate is not None and rstate is not state:
            continue
        if rproto is not None and rproto is not proto:
            continue
        if rport is not None and rport != port:
            continue
        if rsrc is not None and not _net_contains(rsrc, src):
            continue
        if rdst is not None and not _net_contains(rdst, dst):
            continue
        return accept, rule_id
    return None


def evaluate_flow(ruleset: FirewallRuleSet, flow: FlowQuery) -> Verdict:
    """First-match evaluation; the catch-all deny guarantees a match on any
    well-formed ruleset. A ruleset lacking one (drifted dumps) falls through
    to an implicit deny with no matched rule."""
    hit = _match(
        _ruleset_matcher(ruleset),
        _ip_key(flow.src_ip), _ip_key(flow.dst_ip), flow.dst_port, flow.proto, flow.state,
    )
    if hit is None:
        return Verdict(Decision.DENY, None, "no matching rule; implicit deny")
    accept, rule_id = hit
    decision = Decision.ALLOW if accept else Decision.DENY
    return Verdict(decision, rule_id, f"first match on rule {rule_id}")


# --- policy route --------------------------------------------------------------


class _PolicyIndex:
    __slots__ = ("endpoint_ip", "service_at_ip", "zone_nets", "ingress", "airlocks", "links")

    def __init__(self, policy: IsolationPolicy):
        violations = validate_policy(policy)
        if violations:
            raise DecideError(
                f"policy has {len(violations)} violation(s), first: "
                f"{violations[0].code} {violations[0].subject}"
            )
        endpoints = endpoints_for(policy)
        self.endpoint_ip = {(e.zone, e.service): _ip_key(e.ip) for e in endpoints}
        self.service_at_ip = {_ip_key(e.ip): e for e in endpoints}
        self.zone_nets = tuple(_net_key(z.subnet) for z in policy.zones)
        zones = {z.name: z for z in policy.zones}
        services = {s.name: s for s in policy.services}

        ingress = []
        for rule in policy.ingress:
            svc = services[rule.to_service]
            zone_name = next(
                z for z in svc.attachments
                if zones[z].kind.value == "ingress_dmz"
            )
            ingress.append(
                (_net_key(rule.source), self.endpoint_ip[(zone_name, rule.to_service)],
                 rule.port, rule.proto)
            )
        self.ingress = tuple(ingress)

        self.airlocks = tuple(
            (_net_key(zones[a.via_zone].subnet), _ip_key(a.target_ip), a.target_port, a.proto)
            for a in policy.airlocks
        )

        links = set()
        for link in policy.service_links:
            shared = set(services[link.from_service].attachments) & set(
                services[link.to_service].attachments
            )
            for zone_name in shared:
                links.add(
                    (
                        self.endpoint_ip[(zone_name, link.from_service)],
                        self.endpoint_ip[(zone_name, link.to_service)],
                        link.port,
                        link.proto,
                    )
                )
        self.links = frozenset(links)


@lru_cache(maxsize=2048)
def _policy_index(policy: IsolationPolicy) -> _PolicyIndex:
    return _PolicyIndex(policy)


def _decide(index: _PolicyIndex, src, dst, port, proto, state) -> bool:
    """True = allow. Clauses: established return traffic, ingress allow-list,
    exact airlock pin reached from its egress zone, declared service link."""
    if state is FlowState.ESTABLISHED:
        return True
    for net, ep, rport, rproto in index.ingress:
        if rproto is proto and rport == port and ep == dst and _net_contains(net, src):
            return True
    for net, pin, rport, rproto in index.airlocks:
        if rproto is proto and rport == port and pin == dst and _net_contains(net, src):
            return True
    return (src, dst, port, proto) in index.links


def decide_by_policy(policy: IsolationPolicy, flow: FlowQuery) -> Decision:
    """Decide a flow straight from the policy, without compiling."""
    index = _policy_index(policy)
    allowed = _decide(
        index, _ip_key(flow.src_ip), _ip_key(flow.dst_ip), flow.dst_port, flow.proto, flow.state
    )
    return Decision.ALLOW if allowed else Decision.DENY


def resolve_endpoint(policy: IsolationPolicy, ip: IPAddress) -> Endpoint | None:
    """Map an address back to the service endpoint occupying it, if any."""
    return _policy_index(policy).service_at_ip.get(_ip_key(ip))


def enumerate_allowed_egress(
    policy: IsolationPolicy,
) -> frozenset[tuple[str, IPAddress, int, Proto]]:
    """The complete set of new-state flows to destinations outside every zone
    subnet that the policy allows.

    Only the airlock clause can admit an external destination (the ingress and
    link clauses both target in-zone endpoint addresses), so candidates are the
    cross product of airlock pins and the services attached to each airlock's
    egress zone; each candidate is confirmed through :func:`decide_by_policy`.
    """
    index = _policy_index(policy)
    endpoints = endpoints_for(policy)
    out = set()
    for airlock in policy.airlocks:
        if any(_net_contains(zn, _ip_key(airlock.target_ip)) for zn in index.zone_nets):
            continue
        for endpoint in endpoints:
            if endpoint.zone != airlock.via_zone:
                continue
            flow = FlowQuery(
                src_ip=endpoint.ip,
                dst_ip=airlock.target_ip,
                dst_port=airlock.target_port,
                proto=airlock.proto,
                state=FlowState.NEW,
            )
            if decide_by_policy(policy, flow) is Decision.ALLOW:
                out.add((endpoint.service, airlock.target_ip, airlock.target_port, airlock.proto))
    return frozenset(out)


# --- flow universe and differential sweep --------------------------------------


def _representative_in(net) -> IPAddress:
    offset = 7 if net.num_addresses > 8 else max(net.num_addresses - 2, 0)
    return net.network_address + offset


def _universe_tuples(policy: IsolationPolicy) -> list[tuple]:
    """Pre-keyed flow tuples (src, dst, port, proto, state) covering every rule
    band plus the near-miss classes: in-zone non-endpoint hosts, pin neighbours,
    public targets, and a source outside every ingress allow-list."""
    index = _policy_index(policy)

    srcs = set(index.endpoint_ip.values())
    for rule in policy.ingress:
        srcs.add(_ip_key(_representative_in(rule.source)))
    srcs.add(_ip_key(ipaddress.ip_address("203.0.113.9")))

    dsts = set(index.endpoint_ip.values())
    for zone in policy.zones:
        host = zone.subnet.network_address + (10 if zone.subnet.num_addresses > 10 else 1)
        dsts.add(_ip_key(host))
    ports = set(SWEEP_PORTS)
    for airlock in policy.airlocks:
        pin = _ip_key(airlock.target_ip)
        dsts.add(pin)
        dsts.add((pin[0], pin[1] + 1))
        dsts.add((pin[0], max(pin[1] - 1, 0)))
        ports.add(airlock.target_port)
        if airlock.target_port < 65535:
            ports.add(airlock.target_port + 1)
        if airlock.target_port > 1:
            ports.add(airlock.target_port - 1)
    for public in PUBLIC_PROBE_TARGETS[:2]:
        dsts.add(_ip_key(public))
    for link in policy.service_links:
        ports.add(link.port)
    for rule in policy.ingress:
        ports.add(rule.port)

    flows = []
    port_list = sorted(ports)
    for src in sorted(srcs):
        for dst in sorted(dsts):
            for state in (FlowState.NEW, FlowState.ESTABLISHED):
                for proto in (Proto.TCP, Proto.UDP):
                    for port in port_list:
                        flows.append((src, dst, port, proto, state))
                flows.append((src, dst, None, Proto.ICMP, state))
    return flows


def _from_key(key: tuple[int, int]) -> IPAddress:
    return ipaddress.IPv4Address(key[1]) if key[0] == 4 else ipaddress.IPv6Address(key[1])


def flow_universe(policy: IsolationPolicy) -> list[FlowQuery]:
    """The exhaustive desk-scale sweep universe as FlowQuery values."""
    return [
        FlowQuery(src_ip=_from_key(src), dst_ip=_from_key(dst), dst_port=port,
                  proto=proto, state=state)
        for src, dst, port, proto, state in _universe_tuples(policy)
    ]


@dataclass(frozen=True, slots=True)
class SweepResult:
    flows: int
    disagreements: tuple[tuple[FlowQuery, Decision, Decision], ...]
    public_allows: tuple[FlowQuery, ...]

    @property
    def clean(self) -> bool:
        return not (self.disagreements or self.public_allows)


def differential_sweep(
    policy: IsolationPolicy, observed_ruleset: FirewallRuleSet | None = None
) -> SweepResult:
    """Run the full flow universe through both oracles.

    Records every decision disagreement, and every new-state flow to a public
    destination that either oracle allowed (there must never be one).
    """
    index = _policy_index(policy)
    matcher = _ruleset_matcher(
        compile_policy(policy) if observed_ruleset is None else observed_ruleset
    )
    disagreements = []
    public_allows = []
    public_cache: dict[tuple[int, int], bool] = {}
    flows = _universe_tuples(policy)
    for src, dst, port, proto, state in flows:
        hit = _match(matcher, src, dst, port, proto, state)
        ruleset_allow = hit[0] if hit is not None else False
        policy_allow = _decide(index, src, dst, port, proto, state)
        if ruleset_allow != policy_allow:
            disagreements.append(
                (
                    FlowQuery(_from_key(src), _from_key(dst), port, proto, state),
                    Decision.ALLOW if ruleset_allow else Decision.DENY,
                    Decision.ALLOW if policy_allow else Decision.DENY,
                )
            )
        if state is FlowState.NEW and (ruleset_allow or policy_allow):
            is_public = public_cache.get(dst)
            if is_public is None:
                is_public = not is_private_ip(_from_key(dst))
                public_cache[dst] = is_public
            if is_public:
                public_allows.append(FlowQuery(_from_key(src), _from_key(dst), port, proto, state))
    return SweepResult(
        flows=len(flows),
        disagreements=tuple(disagreements),
        public_allows=tuple(public_allows),
    )


def rulesets_equivalent(
    policy: IsolationPolicy, left: FirewallRuleSet, right: FirewallRuleSet
) -> bool:
    """True iff both rulesets give the same verdict on every universe flow."""
    lm = _ruleset_matcher(left)
    rm = _ruleset_matcher(right)
    for src, dst, port, proto, state in _universe_tuples(policy):
        lhit = _match(lm, src, dst, port, proto, state)
        rhit = _match(rm, src, dst, port, proto, state)
        if (lhit[0] if lhit else False) != (rhit[0] if rhit else False):
            return False
    return True
