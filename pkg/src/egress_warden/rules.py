"""Compilation of isolation policies into ordered host-firewall rulesets.

The ruleset models one flat forward chain evaluated first-match. Rules are
emitted in five fixed bands: (1) accept established/related return traffic,
(2) ingress allow-list accepts, (3) pinned airlock accepts, (4) declared
service-link accepts, (5) the universal deny. Within a band rules are sorted
lexicographically, so compiling the same policy always yields byte-identical
rendered output.
"""

from __future__ import annotations

import ipaddress
import re
from dataclasses import dataclass
from enum import Enum

from .policy import (
    FlowState,
    IPNetwork,
    IsolationPolicy,
    Proto,
    ZoneKind,
    endpoints_for,
    validate_policy,
)

RULESET_HEADER_RE = re.compile(r"^# egress-warden ruleset policy_hash=([0-9a-f]{64})$")

DENY_ALL_ID = "deny-all"
ESTABLISHED_ID = "established"


class CompileError(Exception):
    """Raised when a policy fails validation at compile time."""

    code = "INVALID_POLICY"


class RulesetError(Exception):
    """Raised when a ruleset violates structural requirements (e.g. no catch-all)."""

    code = "INVALID_RULESET"


class RulesetSyntaxError(Exception):
    """Raised when ruleset text does not match the exchange grammar."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class RuleAction(Enum):
    ACCEPT = "ACCEPT"
    DENY = "DENY"


@dataclass(frozen=True, slots=True)
class FirewallRule:
    """One match/verdict rule. ``None`` in a match field means "any"."""

    id: str
    priority: int
    src: IPNetwork | None
    dst: IPNetwork | None
    proto: Proto | None
    dest_port: int | None
    state_match: FlowState | None
    verdict: RuleAction

    def canonical_key(self) -> tuple:
        """Rule identity for diffing: every match field plus the verdict.

        Excludes id and priority so that renumbering does not show up as a
        semantic difference.
        """
        return (
            "any" if self.src is None else str(self.src),
            "any" if self.dst is None else str(self.dst),
            "any" if self.proto is None else self.proto.value,
            0 if self.dest_port is None else self.dest_port,
            "any" if self.state_match is None else self.state_match.value,
            self.verdict.value,
        )

    def is_catch_all_deny(self) -> bool:
        return (
            self.verdict is RuleAction.DENY
            and self.src is None
            and self.dst is None
            and self.proto is None
            and self.dest_port is None
            and self.state_match is None
        )


@dataclass(frozen=True)
class FirewallRuleSet:
    """Ordered rules plus the content digest of the policy they came from.

    Equality is canonical: two rulesets are equal when their rule sequences
    match on all fields except id/priority and their policy hashes agree.
    """

    rules: tuple[FirewallRule, ...]
    policy_hash: str

    def canonical_rules(self) -> tuple[tuple, ...]:
        return tuple(r.canonical_key() for r in self.rules)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FirewallRuleSet):
            return NotImplemented
        return self.policy_hash == other.policy_hash and self.canonical_rules() == other.canonical_rules()

    def __hash__(self) -> int:
        return hash((self.policy_hash, self.canonical_rules()))


@dataclass(frozen=True, slots=True)
class RuleDiff:
    """Difference between an expected and an observed ruleset."""

    missing: tuple[FirewallRule, ...]
    unexpected: tuple[FirewallRule, ...]
    reordered: tuple[tuple[str, str], ...]

    @property
    def empty(self) -> bool:
        return not (self.missing or self.unexpected or self.reordered)


def _host_net(ip) -> IPNetwork:
    return ipaddress.ip_network(f"{ip}/{ip.max_prefixlen}")


def compile_policy(policy: IsolationPolicy) -> FirewallRuleSet:
    """Compile a valid policy into its deterministic ruleset.

    Raises :class:`CompileError` if the policy has validation violations.
    """
    violations = validate_policy(policy)
    if violations:
        raise CompileError(
            f"policy has {len(violations)} violation(s), first: "
            f"{violations[0].code} {violations[0].subject}"
        )

    endpoint_ip = {(e.zone, e.service): e.ip for e in endpoints_for(policy)}
    zones = {z.name: z for z in policy.zones}
    ingress_zone_of = {
        s.name: next(
            (z for z in s.attachments if zones[z].kind is ZoneKind.INGRESS_DMZ), None
        )
        for s in policy.services
    }

    # band 1: stateful return traffic
    band1 = dict(src=None, dst=None, proto=None, dest_port=None,
                 state_match=FlowState.ESTABLISHED, verdict=RuleAction.ACCEPT)

    # band 2: ingress allow-list
    band2 = []
    for rule in policy.ingress:
        zone_name = ingress_zone_of[rule.to_service]
        dst_ip = endpoint_ip[(zone_name, rule.to_service)]
        band2.append(
            (
                (rule.to_service, str(rule.source), rule.port, rule.proto.value),
                dict(src=rule.source, dst=_host_net(dst_ip), proto=rule.proto,
                     dest_port=rule.port, state_match=FlowState.NEW, verdict=RuleAction.ACCEPT),
            )
        )
    band2.sort(key=lambda item: item[0])

    # band 3: pinned airlocks; the source is the whole egress-DMZ subnet the
    # proxy sits on, the destination is the exact pin
    band3 = []
    for airlock in policy.airlocks:
        via = zones[airlock.via_zone]
        band3.append(
            (
                (airlock.via_zone, airlock.name),
                airlock.name,
                dict(src=via.subnet, dst=_host_net(airlock.target_ip), proto=airlock.proto,
                     dest_port=airlock.target_port, state_match=FlowState.NEW,
                     verdict=RuleAction.ACCEPT),
            )
        )
    band3.sort(key=lambda item: item[0])

    # band 4: declared service links, one rule per shared zone
    band4 = []
    services = {s.name: s for s in policy.services}
    for link in policy.service_links:
        shared = sorted(
            set(services[link.from_service].attachments) & set(services[link.to_service].attachments)
        )
        for zone_name in shared:
            band4.append(
                (
                    (link.from_service, link.to_service, zone_name, link.port, link.proto.value),
                    dict(src=_host_net(endpoint_ip[(zone_name, link.from_service)]),
                         dst=_host_net(endpoint_ip[(zone_name, link.to_service)]),
                         proto=link.proto, dest_port=link.port,
                         state_match=FlowState.NEW, verdict=RuleAction.ACCEPT),
                )
            )
    band4.sort(key=lambda item: item[0])

    rules: list[FirewallRule] = []

    def emit(rule_id: str, fields: dict) -> None:
        rules.append(FirewallRule(id=rule_id, priority=(len(rules) + 1) * 10, **fields))

    emit(ESTABLISHED_ID, band1)
    for n, (_, fields) in enumerate(band2, start=1):
        emit(f"ingress-{n}", fields)
    for _, name, fields in band3:
        emit(f"airlock-{name}", fields)
    for n, (_, fields) in enumerate(band4, start=1):
        emit(f"link-{n}", fields)
    emit(DENY_ALL_ID, dict(src=None, dst=None, proto=None, dest_port=None,
                           state_match=None, verdict=RuleAction.DENY))

    return FirewallRuleSet(rules=tuple(rules), policy_hash=policy.content_hash())


# --- text exchange format -----------------------------------------------------

_STATE_TOKEN = {FlowState.NEW: "NEW", FlowState.ESTABLISHED: "EST"}
_TOKEN_STATE = {v: k for k, v in _STATE_TOKEN.items()}


def _addr_token(net: IPNetwork | None) -> str:
    return "any" if net is None else str(net)


def render_rule(rule: FirewallRule) -> str:
    parts = [
        "-A", "FWD",
        "-s", _addr_token(rule.src),
        "-d", _addr_token(rule.dst),
        "-p", "any" if rule.proto is None else rule.proto.value,
    ]
    if rule.dest_port is not None:
        parts += ["--dport", str(rule.dest_port)]
    if rule.state_match is not None:
        parts += ["-m", "state", _STATE_TOKEN[rule.state_match]]
    parts += ["-j", rule.verdict.value]
    return " ".join(parts)


def render_ruleset(ruleset: FirewallRuleSet) -> str:
    """Render to the line-oriented exchange format; refuses malformed rulesets."""
    if not ruleset.rules:
        raise RulesetError("INVALID_RULESET: ruleset is empty")
    if not ruleset.rules[-1].is_catch_all_deny():
        raise RulesetError("INVALID_RULESET: last rule must be the catch-all deny")
    lines = [f"# egress-warden ruleset policy_hash={ruleset.policy_hash}"]
    lines.extend(render_rule(r) for r in ruleset.rules)
    return "\n".join(lines) + "\n"


def _parse_addr(token: str, lineno: int) -> IPNetwork | None:
    if token == "any":
        return None
    try:
        return ipaddress.ip_network(token, strict=True)
    except ValueError as exc:
        raise RulesetSyntaxError(f"bad address {token!r}: {exc}", lineno) from None


def _parse_rule_line(line: str, lineno: int, rule_id: str, priority: int) -> FirewallRule:
    tokens = line.split()
    pos = 0

    def take(expected: str | None = None) -> str:
        nonlocal pos
        if pos >= len(tokens):
            raise RulesetSyntaxError("truncated rule", lineno)
        token = tokens[pos]
        pos += 1
        if expected is not None and token != expected:
            raise RulesetSyntaxError(f"expected {expected!r}, got {token!r}", lineno)
        return token

    take("-A")
    take("FWD")
    take("-s")
    src = _parse_addr(take(), lineno)
    take("-d")
    dst = _parse_addr(take(), lineno)
    take("-p")
    proto_token = take()
    if proto_token == "any":
        proto = None
    else:
        try:
            proto = Proto(proto_token)
        except ValueError:
            raise RulesetSyntaxError(f"unknown protocol {proto_token!r}", lineno) from None

    dest_port: int | None = None
    state: FlowState | None = None
    if pos < len(tokens) and tokens[pos] == "--dport":
        take("--dport")
        port_token = take()
        try:
            dest_port = int(port_token)
        except ValueError:
            raise RulesetSyntaxError(f"bad port {port_token!r}", lineno) from None
        if not 1 <= dest_port <= 65535:
            raise RulesetSyntaxError(f"port {dest_port} outside [1, 65535]", lineno)
    if pos < len(tokens) and tokens[pos] == "-m":
        take("-m")
        take("state")
        state_token = take()
        if state_token not in _TOKEN_STATE:
            raise RulesetSyntaxError(f"unknown state {state_token!r}", lineno)
        state = _TOKEN_STATE[state_token]
    take("-j")
    verdict_token = take()
    try:
        verdict = RuleAction(verdict_token)
    except ValueError:
        raise RulesetSyntaxError(f"unknown verdict {verdict_token!r}", lineno) from None
    if pos != len(tokens):
        raise RulesetSyntaxError(f"trailing tokens after verdict: {' '.join(tokens[pos:])}", lineno)

    return FirewallRule(id=rule_id, priority=priority, src=src, dst=dst, proto=proto,
                        dest_port=dest_port, state_match=state, verdict=verdict)


def parse_ruleset(text: str) -> FirewallRuleSet:
    """Parse the exchange format back into a ruleset (inverse of render)."""
    lines = text.splitlines()
    if not lines:
        raise RulesetSyntaxError("empty input", 1)
    header = RULESET_HEADER_RE.match(lines[0])
    if header is None:
        raise RulesetSyntaxError("missing or malformed ruleset header", 1)
    policy_hash = header.group(1)

    rules: list[FirewallRule] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            raise RulesetSyntaxError("blank line inside ruleset", lineno)
        rules.append(
            _parse_rule_line(line, lineno, rule_id=f"rule-{len(rules) + 1}",
                             priority=(len(rules) + 1) * 10)
        )
    if not rules:
        raise RulesetSyntaxError("ruleset has no rules", 1)
    if not rules[-1].is_catch_all_deny():
        raise RulesetSyntaxError("ruleset must end with the catch-all deny", len(lines))
    rules[-1] = FirewallRule(
        id=DENY_ALL_ID, priority=rules[-1].priority, src=None, dst=None, proto=None,
        dest_port=None, state_match=None, verdict=RuleAction.DENY,
    )
    return FirewallRuleSet(rules=tuple(rules), policy_hash=policy_hash)


# --- diffing -------------------------------------------------------------------


def diff_rulesets(expected: FirewallRuleSet, observed: FirewallRuleSet) -> RuleDiff:
    """Compare rulesets on canonical rule identity (id and priority ignored).

    Multiset semantics: a rule occurring twice on one side and once on the
    other contributes one missing/unexpected entry. Reordering is reported as
    pairs of expected-side rule ids whose relative order is inverted on the
    observed side; it considers rules common to both sets.
    """
    exp_keys = [r.canonical_key() for r in expected.rules]
    obs_keys = [r.canonical_key() for r in observed.rules]

    def multiset(keys: list) -> dict:
        counts: dict = {}
        for k in keys:
            counts[k] = counts.get(k, 0) + 1
        return counts

    exp_counts = multiset(exp_keys)
    obs_counts = multiset(obs_keys)

    missing: list[FirewallRule] = []
    budget = {k: exp_counts[k] - obs_counts.get(k, 0) for k in exp_counts}
    for rule in expected.rules:
        k = rule.canonical_key()
        if budget.get(k, 0) > 0:
            missing.append(rule)
            budget[k] -= 1

    unexpected: list[FirewallRule] = []
    budget = {k: obs_counts[k] - exp_counts.get(k, 0) for k in obs_counts}
    for rule in observed.rules:
        k = rule.canonical_key()
        if budget.get(k, 0) > 0:
            unexpected.append(rule)
            budget[k] -= 1

    common = set(exp_counts) & set(obs_counts)
    exp_common = [r for r in expected.rules if r.canonical_key() in common]
    obs_order = {}
    for idx, key in enumerate(obs_keys):
        obs_order.setdefault(key, idx)
    reordered: list[tuple[str, str]] = []
    seen_pairs: set[tuple[str, str]] = set()
    for i in range(len(exp_common)):
        for j in range(i + 1, len(exp_common)):
            a, b = exp_common[i], exp_common[j]
            ka, kb = a.canonical_key(), b.canonical_key()
            if ka == kb:
                continue
            if obs_order[ka] > obs_order[kb] and (a.id, b.id) not in seen_pairs:
                reordered.append((a.id, b.id))
                seen_pairs.add((a.id, b.id))

    return RuleDiff(missing=tuple(missing), unexpected=tuple(unexpected), reordered=tuple(reordered))
