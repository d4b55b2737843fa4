"""Compilation bands, rendering grammar, parsing, and ruleset diffing."""

import ipaddress
import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from egress_warden.corpus import random_policy
from egress_warden.policy import FlowState, Proto, parse_policy
from egress_warden.rules import (
    CompileError,
    FirewallRule,
    FirewallRuleSet,
    RuleAction,
    RulesetError,
    RulesetSyntaxError,
    compile_policy,
    diff_rulesets,
    parse_ruleset,
    render_rule,
    render_ruleset,
)

DENY_ALL_LINE = "-A FWD -s any -d any -p any -j DENY"
FIXTURE_AIRLOCK_LINE = "-A FWD -s 172.30.0.0/24 -d 10.0.5.10/32 -p tcp --dport 636 -m state NEW -j ACCEPT"


def _bands(ruleset):
    """Split a compiled ruleset into its five bands by rule id prefix."""
    groups = {"established": [], "ingress": [], "airlock": [], "link": [], "deny": []}
    for rule in ruleset.rules:
        if rule.id == "established":
            groups["established"].append(rule)
        elif rule.id.startswith("ingress-"):
            groups["ingress"].append(rule)
        elif rule.id.startswith("airlock-"):
            groups["airlock"].append(rule)
        elif rule.id.startswith("link-"):
            groups["link"].append(rule)
        else:
            groups["deny"].append(rule)
    return groups


# ---------------------------------------------------------------------------
# compile_policy
# ---------------------------------------------------------------------------


def test_fixture_band3_is_exactly_the_airlock_pin(ref_policy, ref_ruleset):
    band3 = _bands(ref_ruleset)["airlock"]
    assert len(band3) == 1
    rule = band3[0]
    assert rule.src == ipaddress.ip_network("172.30.0.0/24")
    assert rule.dst == ipaddress.ip_network("10.0.5.10/32")
    assert rule.dest_port == 636
    assert rule.proto is Proto.TCP
    assert rule.verdict is RuleAction.ACCEPT
    # the (dst, port, proto) projection over band 3 equals the pin set
    pins = {(str(a.target_ip), a.target_port, a.proto) for a in ref_policy.airlocks}
    band3_pins = {(str(r.dst.network_address), r.dest_port, r.proto) for r in band3}
    assert band3_pins == pins


def test_zero_airlock_zero_ingress_band_shape():
    doc = json.dumps(
        {
            "zones": [
                {"name": "core", "kind": "internal", "subnet": "172.28.0.0/24", "routed_gateway": False}
            ],
            "services": [
                {"name": "a", "attachments": ["core"]},
                {"name": "b", "attachments": ["core"]},
            ],
            "service_links": [{"from": "a", "to": "b", "port": 8000, "proto": "tcp"}],
            "airlocks": [],
            "ingress": [],
            "tls": {"min_version": "1.2"},
        }
    )
    ruleset = compile_policy(parse_policy(doc))
    groups = _bands(ruleset)
    assert len(groups["established"]) == 1
    assert groups["ingress"] == []
    assert groups["airlock"] == []
    assert len(groups["link"]) == 1
    assert len(groups["deny"]) == 1


def test_final_rule_is_universal_deny(ref_ruleset):
    last = ref_ruleset.rules[-1]
    assert last.verdict is RuleAction.DENY
    assert last.src is None and last.dst is None
    assert last.proto is None and last.dest_port is None and last.state_match is None
    assert last.id == "deny-all"


def test_band_order_and_priorities(ref_ruleset):
    ids = [r.id for r in ref_ruleset.rules]
    assert ids[0] == "established"
    assert ids[-1] == "deny-all"
    priorities = [r.priority for r in ref_ruleset.rules]
    assert priorities == sorted(priorities)
    assert len(set(priorities)) == len(priorities)
    assert len(set(ids)) == len(ids)


def test_compile_rejects_invalid_policy():
    doc = json.dumps(
        {
            "zones": [
                {"name": "core", "kind": "internal", "subnet": "172.28.0.0/24", "routed_gateway": True}
            ],
            "services": [{"name": "a", "attachments": ["core"]}],
            "service_links": [],
            "airlocks": [],
            "ingress": [],
            "tls": {"min_version": "1.2"},
        }
    )
    with pytest.raises(CompileError):
        compile_policy(parse_policy(doc))


@settings(max_examples=40)
@given(seed=st.integers(0, 10**9))
def test_compile_is_deterministic_and_default_deny(seed):
    policy = random_policy(random.Random(seed))
    first = render_ruleset(compile_policy(policy))
    second = render_ruleset(compile_policy(policy))
    assert first == second
    assert first.rstrip("\n").splitlines()[-1] == DENY_ALL_LINE


@settings(max_examples=40)
@given(seed=st.integers(0, 10**9))
def test_no_accept_rule_reaches_a_public_destination(seed):
    """Every accept matching new-state traffic pins a private destination."""
    from egress_warden.policy import is_private_ip

    policy = random_policy(random.Random(seed))
    for rule in compile_policy(policy).rules:
        if rule.verdict is not RuleAction.ACCEPT:
            continue
        if rule.state_match is FlowState.ESTABLISHED:
            continue  # return traffic necessarily follows the original dst
        assert rule.dst is not None
        assert is_private_ip(rule.dst.network_address)


# ---------------------------------------------------------------------------
# render / parse round trip
# ---------------------------------------------------------------------------


def test_render_catch_all_deny_line():
    deny = FirewallRule(id="deny-all", priority=10, src=None, dst=None, proto=None,
                        dest_port=None, state_match=None, verdict=RuleAction.DENY)
    assert render_rule(deny) == DENY_ALL_LINE


def test_render_fixture_airlock_line(ref_ruleset):
    airlock_rules = [r for r in ref_ruleset.rules if r.id.startswith("airlock-")]
    assert render_rule(airlock_rules[0]) == FIXTURE_AIRLOCK_LINE


def test_render_refuses_empty_ruleset():
    with pytest.raises(RulesetError):
        render_ruleset(FirewallRuleSet(rules=(), policy_hash="0" * 64))


def test_render_refuses_ruleset_without_catch_all(ref_ruleset):
    broken = FirewallRuleSet(rules=ref_ruleset.rules[:-1], policy_hash=ref_ruleset.policy_hash)
    with pytest.raises(RulesetError):
        render_ruleset(broken)


def test_header_carries_policy_hash(ref_policy, ref_ruleset):
    text = render_ruleset(ref_ruleset)
    header = text.splitlines()[0]
    assert header == f"# egress-warden ruleset policy_hash={ref_policy.content_hash()}"
    assert len(ref_policy.content_hash()) == 64


def test_roundtrip_fixture(ref_ruleset):
    assert parse_ruleset(render_ruleset(ref_ruleset)) == ref_ruleset


@settings(max_examples=40)
@given(seed=st.integers(0, 10**9))
def test_roundtrip_random_policies(seed):
    ruleset = compile_policy(random_policy(random.Random(seed)))
    text = render_ruleset(ruleset)
    reparsed = parse_ruleset(text)
    assert reparsed == ruleset
    assert render_ruleset(reparsed) == text


def test_parse_rejects_unknown_verdict(ref_ruleset):
    text = render_ruleset(ref_ruleset).replace("-j DENY", "-j LOG")
    with pytest.raises(RulesetSyntaxError):
        parse_ruleset(text)


def test_parse_rejects_empty_input():
    with pytest.raises(RulesetSyntaxError):
        parse_ruleset("")


def test_parse_rejects_missing_header(ref_ruleset):
    text = "\n".join(render_ruleset(ref_ruleset).splitlines()[1:])
    with pytest.raises(RulesetSyntaxError):
        parse_ruleset(text)


def test_parse_reports_offending_line(ref_ruleset):
    lines = render_ruleset(ref_ruleset).splitlines()
    lines[2] = "-A FWD -s bogus -d any -p tcp -j ACCEPT"
    with pytest.raises(RulesetSyntaxError) as exc:
        parse_ruleset("\n".join(lines))
    assert exc.value.line == 3


# ---------------------------------------------------------------------------
# diff_rulesets
# ---------------------------------------------------------------------------


def test_diff_identity(ref_ruleset):
    diff = diff_rulesets(ref_ruleset, ref_ruleset)
    assert diff.empty


def test_diff_detects_missing_deny(ref_ruleset):
    observed = FirewallRuleSet(rules=ref_ruleset.rules[:-1], policy_hash=ref_ruleset.policy_hash)
    diff = diff_rulesets(ref_ruleset, observed)
    assert len(diff.missing) == 1
    assert diff.missing[0].is_catch_all_deny()
    assert diff.unexpected == ()


def test_diff_isolates_injected_accept(ref_ruleset):
    leak = FirewallRule(
        id="leak", priority=999, src=None, dst=ipaddress.ip_network("8.8.8.8/32"),
        proto=Proto.TCP, dest_port=443, state_match=FlowState.NEW, verdict=RuleAction.ACCEPT,
    )
    observed = FirewallRuleSet(
        rules=ref_ruleset.rules[:-1] + (leak, ref_ruleset.rules[-1]),
        policy_hash=ref_ruleset.policy_hash,
    )
    diff = diff_rulesets(ref_ruleset, observed)
    assert diff.missing == ()
    assert len(diff.unexpected) == 1
    assert diff.unexpected[0].canonical_key() == leak.canonical_key()


def test_diff_ignores_renumbered_ids(ref_ruleset):
    renumbered = FirewallRuleSet(
        rules=tuple(
            FirewallRule(id=f"r{i}", priority=i * 7 + 1, src=r.src, dst=r.dst, proto=r.proto,
                         dest_port=r.dest_port, state_match=r.state_match, verdict=r.verdict)
            for i, r in enumerate(ref_ruleset.rules)
        ),
        policy_hash=ref_ruleset.policy_hash,
    )
    assert diff_rulesets(ref_ruleset, renumbered).empty


def test_diff_reports_reordering(ref_ruleset):
    rules = list(ref_ruleset.rules)
    rules[3], rules[4] = rules[4], rules[3]
    observed = FirewallRuleSet(rules=tuple(rules), policy_hash=ref_ruleset.policy_hash)
    diff = diff_rulesets(ref_ruleset, observed)
    assert diff.missing == () and diff.unexpected == ()
    assert (ref_ruleset.rules[3].id, ref_ruleset.rules[4].id) in diff.reordered


@settings(max_examples=40)
@given(seed=st.integers(0, 10**9), drop=st.integers(0, 5))
def test_diff_symmetry(seed, drop):
    ruleset = compile_policy(random_policy(random.Random(seed)))
    index = drop % len(ruleset.rules)
    observed = FirewallRuleSet(
        rules=ruleset.rules[:index] + ruleset.rules[index + 1 :],
        policy_hash=ruleset.policy_hash,
    )
    forward = diff_rulesets(ruleset, observed)
    backward = diff_rulesets(observed, ruleset)
    assert [r.canonical_key() for r in forward.missing] == [
        r.canonical_key() for r in backward.unexpected
    ]
    assert [r.canonical_key() for r in forward.unexpected] == [
        r.canonical_key() for r in backward.missing
    ]
