"""Acceptance gate: the properties the toolchain exists to guarantee.

Each test prints one PASS/FAIL line. The randomized-corpus criteria share a
single session-scoped sweep over >=1,000 generated policies so the whole gate
stays fast; run with ``pytest tests/test_acceptance.py -v -s`` to see the
criterion lines.
"""

import json
import random
import time
from dataclasses import dataclass

import pytest

from egress_warden.corpus import nominal_events, policy_corpus
from egress_warden.flows import (
    Decision,
    FlowQuery,
    decide_by_policy,
    differential_sweep,
    enumerate_allowed_egress,
    evaluate_flow,
)
from egress_warden.harness import (
    MUTATION_NAMES,
    SimulatedBackend,
    Status,
    apply_mutation,
    run_battery,
    run_threat_suite,
)
from egress_warden.hardening import TlsOffer, negotiate_tls
from egress_warden.monitor import Monitor, replay
from egress_warden.policy import FlowState, TlsVersion, endpoints_for
from egress_warden.rules import compile_policy

CORPUS_SIZE = 1000
STREAM_COUNT = 100
MAX_STREAM_EVENTS = 10_000


def _criterion(name: str, ok: bool, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, f"{name}: {detail}"


@dataclass
class CorpusStats:
    policies: int = 0
    flows: int = 0
    disagreements: int = 0
    public_allows: int = 0
    egress_set_mismatches: int = 0
    pin_neighbour_allows: int = 0
    elapsed: float = 0.0


def _pin_neighbours_denied(policy) -> int:
    """Count pin-neighbour probes (ip+-1, port+-1) NOT denied by both oracles."""
    violations = 0
    ruleset = compile_policy(policy)
    endpoint_ip = {(e.zone, e.service): e.ip for e in endpoints_for(policy)}
    for airlock in policy.airlocks:
        src = endpoint_ip[(airlock.via_zone, airlock.from_service)]
        probes = [
            (airlock.target_ip + 1, airlock.target_port),
            (airlock.target_ip - 1, airlock.target_port),
        ]
        if airlock.target_port < 65535:
            probes.append((airlock.target_ip, airlock.target_port + 1))
        if airlock.target_port > 1:
            probes.append((airlock.target_ip, airlock.target_port - 1))
        for dst_ip, dst_port in probes:
            flow = FlowQuery(src, dst_ip, dst_port, airlock.proto, FlowState.NEW)
            if evaluate_flow(ruleset, flow).decision is not Decision.DENY:
                violations += 1
            if decide_by_policy(policy, flow) is not Decision.DENY:
                violations += 1
    return violations


@pytest.fixture(scope="session")
def corpus_stats():
    stats = CorpusStats()
    started = time.time()
    for policy in policy_corpus(CORPUS_SIZE):
        result = differential_sweep(policy)
        stats.policies += 1
        stats.flows += result.flows
        stats.disagreements += len(result.disagreements)
        stats.public_allows += len(result.public_allows)

        expected_pins = {
            (a.from_service, a.target_ip, a.target_port, a.proto) for a in policy.airlocks
        }
        if enumerate_allowed_egress(policy) != expected_pins:
            stats.egress_set_mismatches += 1
        stats.pin_neighbour_allows += _pin_neighbours_denied(policy)
    stats.elapsed = time.time() - started
    return stats


def test_zero_egress_property(corpus_stats):
    ok = corpus_stats.public_allows == 0 and corpus_stats.elapsed < 60
    _criterion(
        "zero-egress",
        ok,
        f"{corpus_stats.policies} policies / {corpus_stats.flows} flows, "
        f"{corpus_stats.public_allows} public allows, {corpus_stats.elapsed:.1f}s",
    )


def test_differential_compiler_correctness(corpus_stats):
    ok = corpus_stats.disagreements == 0 and corpus_stats.elapsed < 60
    _criterion(
        "differential-correctness",
        ok,
        f"{corpus_stats.flows} flows through both oracles, "
        f"{corpus_stats.disagreements} disagreements, {corpus_stats.elapsed:.1f}s",
    )


def test_airlock_exactness(corpus_stats):
    ok = corpus_stats.egress_set_mismatches == 0 and corpus_stats.pin_neighbour_allows == 0
    _criterion(
        "airlock-exactness",
        ok,
        f"{corpus_stats.policies} policies: {corpus_stats.egress_set_mismatches} egress-set "
        f"mismatches, {corpus_stats.pin_neighbour_allows} pin-neighbour leaks",
    )


def test_battery_fidelity(ref_policy):
    runs = []
    for _ in range(5):
        backend = SimulatedBackend(ref_policy)
        battery = run_battery(ref_policy, backend)
        threats = run_threat_suite(ref_policy, backend)
        runs.append(
            json.dumps(
                {"battery": battery.to_json_dict(), "threats": threats.to_json_dict()},
                sort_keys=True,
            )
        )
        all_pass = (
            all(t.status is Status.PASS for t in battery.battery)
            and all(s.status is Status.PASS for s in threats.scenarios)
        )
        if not all_pass:
            _criterion("battery-fidelity", False, "a battery or scenario test did not pass")
    deterministic = len(set(runs)) == 1
    _criterion(
        "battery-fidelity",
        deterministic,
        f"T1-T7 and S1-S5 pass; 5 repeated runs byte-identical: {deterministic}",
    )


def test_mutation_sensitivity(ref_policy):
    flipped = 0
    details = []
    for name in MUTATION_NAMES:
        policy, backend = apply_mutation(name, ref_policy)
        battery = run_battery(policy, backend)
        threats = run_threat_suite(policy, backend)
        failing = [t.test_id for t in battery.battery if t.status is Status.FAIL]
        failing += [s.scenario_id for s in threats.scenarios if s.status is Status.FAIL]
        if failing:
            flipped += 1
        details.append(f"{name}->{','.join(failing) or 'NONE'}")
    _criterion("mutation-sensitivity", flipped == len(MUTATION_NAMES),
               f"{flipped}/{len(MUTATION_NAMES)} mutations caught ({'; '.join(details)})")


def test_kill_switch_position_exact(ref_policy):
    rng = random.Random(41)
    checked = 0
    for breach_position in (1, 17, 250, 999):
        lines = nominal_events(ref_policy, 1000, rng, beacon_positions=(breach_position,))
        state = replay(ref_policy, lines)
        assert state.first_breach_position == breach_position
        assert state.directives and state.directives[0].position == breach_position

        # incremental check: no directive before the breach line, one at it
        mon = Monitor(ref_policy)
        for position, line in enumerate(lines, start=1):
            mon.ingest_line(line)
            directives = mon.snapshot().directives
            if position < breach_position:
                assert not directives
            elif position == breach_position:
                assert len(directives) == 1
        checked += 1

    # unknown-source events also count as a breach position
    lines = nominal_events(ref_policy, 20, rng)
    lines[4] = json.dumps(
        {"ts": "2026-01-01T00:00:05Z", "src_service": None, "src_ip": "192.168.99.99",
         "dst_ip": "172.28.0.4", "dst_port": 8000, "proto": "tcp", "state": "new"}
    )
    state = replay(ref_policy, lines)
    ok = state.first_breach_position == 5 and state.directives[0].position == 5
    _criterion("kill-switch-latency", ok,
               f"{checked} beacon positions + 1 unknown-source position, all directive positions exact")


def test_monitor_conservation_and_determinism(ref_policy):
    rng = random.Random(20260810)
    total_events = 0
    for i in range(STREAM_COUNT):
        n = rng.randint(0, MAX_STREAM_EVENTS)
        beacons = tuple(rng.sample(range(1, n + 1), k=min(2, n))) if n else ()
        lines = nominal_events(ref_policy, n, rng, beacon_positions=beacons) if n else []
        if n and rng.random() < 0.5:
            lines[rng.randrange(len(lines))] = "malformed line"
        state = replay(ref_policy, lines)
        conserved = (
            state.permitted + state.forbidden + state.unknown + state.malformed == len(lines)
        )
        if not conserved:
            _criterion("monitor-conservation", False,
                       f"stream {i}: counters sum {state.total} != {len(lines)} events")
        if i % 10 == 0:
            first = json.dumps(replay(ref_policy, lines).to_json_dict(), sort_keys=True)
            second = json.dumps(replay(ref_policy, lines).to_json_dict(), sort_keys=True)
            if first != second:
                _criterion("monitor-conservation", False, f"stream {i}: replay not deterministic")
        total_events += len(lines)
    _criterion("monitor-conservation", True,
               f"{STREAM_COUNT} streams / {total_events} events conserved; replays byte-identical")


def test_tls_floor_never_undercut():
    versions = list(TlsVersion)
    below = 0
    combinations = 0
    for policy_min in versions:
        for lo in versions:
            for hi in versions:
                combinations += 1
                if lo > hi:
                    continue  # invalid offers are rejected at construction
                outcome = negotiate_tls(policy_min, TlsOffer(lo, hi))
                if outcome is not None and outcome < policy_min:
                    below += 1
                if outcome is None and hi >= policy_min:
                    below += 1
    _criterion("tls-floor", below == 0,
               f"{combinations} (policy_min, min_offered, max_offered) combinations, "
               f"{below} below-floor negotiations")
