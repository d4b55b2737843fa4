"""Connection-event monitoring with fail-safe kill directives.

The monitor ingests observed connection attempts one at a time, classifies
each against the policy (permitted, forbidden, or unknown source), and in
strict mode emits a kill directive the moment forbidden egress is observed or
the source of an event cannot be resolved. Ambiguity is treated as breach:
losing availability is preferred over leaking data. Rule drift checking
covers the "becomes possible" half of fail-safe termination: a weakened
ruleset on the host triggers a kill before any forbidden flow occurs.
"""

from __future__ import annotations

import ipaddress
import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Protocol

from .flows import Decision, FlowQuery, decide_by_policy, resolve_endpoint, rulesets_equivalent
from .policy import FlowState, IPAddress, IsolationPolicy, Proto
from .rules import FirewallRuleSet, RuleAction, RuleDiff, compile_policy, diff_rulesets

ALL_SERVICES = "*"

REASON_FORBIDDEN_EGRESS = "forbidden-egress"
REASON_UNKNOWN_SOURCE = "unknown-source"
REASON_MALFORMED_EVENT = "malformed-event"
REASON_RULE_DRIFT = "rule-drift"


class Classification(Enum):
    PERMITTED = "permitted"
    FORBIDDEN = "forbidden"
    UNKNOWN = "unknown"


class MonitorMode(Enum):
    STRICT = "strict"
    OBSERVE = "observe"


class MalformedEventError(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True, slots=True)
class ConnectionEvent:
    """One observed connection attempt. Timestamps may arrive out of order;
    classification is stateless per event, so ordering only matters for the
    stream position bookkeeping."""

    ts: datetime
    src_service: str | None
    src_ip: IPAddress
    dst_ip: IPAddress
    dst_port: int | None
    proto: Proto
    state: FlowState

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "ts": self.ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
            "src_service": self.src_service,
            "src_ip": str(self.src_ip),
            "dst_ip": str(self.dst_ip),
            "dst_port": self.dst_port,
            "proto": self.proto.value,
            "state": self.state.value,
        }


@dataclass(frozen=True, slots=True)
class RuleDriftRef:
    """Reference to a detected ruleset divergence, for directive provenance."""

    policy_hash: str
    missing: int
    unexpected: int
    reordered: int

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "kind": "rule_drift",
            "policy_hash": self.policy_hash,
            "missing": self.missing,
            "unexpected": self.unexpected,
            "reordered": self.reordered,
        }


@dataclass(frozen=True, slots=True)
class KillDirective:
    """An order to terminate a service (or all of them, target ``*``).

    De-duplicated per (target, reason_class) within one monitor run, so a
    repeating beacon produces one directive, not a kill storm.
    """

    target_service: str
    reason: str
    reason_class: str
    triggering_event: ConnectionEvent | RuleDriftRef | None
    issued_at: datetime | None
    position: int | None = None
    advisory: bool = False

    def to_json_dict(self) -> dict[str, Any]:
        trigger: dict[str, Any] | None = None
        if isinstance(self.triggering_event, ConnectionEvent):
            trigger = {"kind": "event"} | self.triggering_event.to_json_dict()
        elif isinstance(self.triggering_event, RuleDriftRef):
            trigger = self.triggering_event.to_json_dict()
        return {
            "target_service": self.target_service,
            "reason": self.reason,
            "reason_class": self.reason_class,
            "triggering_event": trigger,
            "issued_at": None if self.issued_at is None
            else self.issued_at.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
            "position": self.position,
            "advisory": self.advisory,
        }


@dataclass(frozen=True, slots=True)
class MonitorState:
    """Immutable snapshot of a monitor run; doubles as the replay report."""

    mode: MonitorMode
    permitted: int
    forbidden: int
    unknown: int
    malformed: int
    first_breach: ConnectionEvent | None
    first_breach_position: int | None
    directives: tuple[KillDirective, ...]

    @property
    def total(self) -> int:
        return self.permitted + self.forbidden + self.unknown + self.malformed

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode.value,
            "counters": {
                "permitted": self.permitted,
                "forbidden": self.forbidden,
                "unknown": self.unknown,
                "malformed": self.malformed,
            },
            "total": self.total,
            "first_breach": None if self.first_breach is None else self.first_breach.to_json_dict(),
            "first_breach_position": self.first_breach_position,
            "directives": [d.to_json_dict() for d in self.directives],
        }


MonitorReport = MonitorState


class ExecutorResult(Enum):
    EXECUTED = "executed"
    NOT_SUPPORTED = "not_supported"


class KillExecutor(Protocol):
    def execute(self, directive: KillDirective) -> ExecutorResult: ...


class FileKillExecutor:
    """Simulated executor: appends each directive to a JSONL log file."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def execute(self, directive: KillDirective) -> ExecutorResult:
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(directive.to_json_dict(), sort_keys=True) + "\n")
        return ExecutorResult.EXECUTED


class LiveKillExecutor:
    """Stub for a real container-runtime executor; not implemented."""

    def execute(self, directive: KillDirective) -> ExecutorResult:
        return ExecutorResult.NOT_SUPPORTED


def _parse_ts(value: Any) -> datetime:
    if not isinstance(value, str):
        raise MalformedEventError("ts must be a string")
    text = value.replace("Z", "+00:00") if value.endswith("Z") else value
    try:
        ts = datetime.fromisoformat(text)
    except ValueError as exc:
        raise MalformedEventError(f"unparseable ts: {exc}") from None
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts


def parse_event(line: str | dict) -> ConnectionEvent:
    """Parse one JSONL event line (or pre-decoded object)."""
    if isinstance(line, str):
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedEventError(f"invalid JSON: {exc.msg}") from None
    else:
        data = line
    if not isinstance(data, dict):
        raise MalformedEventError("event must be a JSON object")

    ts = _parse_ts(data.get("ts"))
    src_service = data.get("src_service")
    if src_service is not None and not isinstance(src_service, str):
        raise MalformedEventError("src_service must be a string or null")
    try:
        src_ip = ipaddress.ip_address(data.get("src_ip"))
        dst_ip = ipaddress.ip_address(data.get("dst_ip"))
    except ValueError as exc:
        raise MalformedEventError(f"bad address: {exc}") from None
    try:
        proto = Proto(data.get("proto"))
    except ValueError:
        raise MalformedEventError(f"unknown proto {data.get('proto')!r}") from None
    try:
        state = FlowState(data.get("state"))
    except ValueError:
        raise MalformedEventError(f"unknown state {data.get('state')!r}") from None
    dst_port = data.get("dst_port")
    if proto is Proto.ICMP:
        if dst_port is not None:
            raise MalformedEventError("ICMP events carry no dst_port")
    else:
        if isinstance(dst_port, bool) or not isinstance(dst_port, int):
            raise MalformedEventError("dst_port must be an integer for tcp/udp")
        if not 1 <= dst_port <= 65535:
            raise MalformedEventError(f"dst_port {dst_port} outside [1, 65535]")
    return ConnectionEvent(ts=ts, src_service=src_service, src_ip=src_ip, dst_ip=dst_ip,
                           dst_port=dst_port, proto=proto, state=state)


class Monitor:
    """Serialized event ingestion over one policy.

    Thread-safe: ingestion takes an internal lock, and ``snapshot`` returns a
    consistent immutable state that metric exporters can read concurrently.
    """

    def __init__(
        self,
        policy: IsolationPolicy,
        mode: MonitorMode = MonitorMode.STRICT,
        executor: KillExecutor | None = None,
    ):
        self._policy = policy
        self._mode = mode
        self._executor = executor
        self._lock = threading.Lock()
        self._reset_locked()

    def _reset_locked(self) -> None:
        self._counts = {c: 0 for c in Classification}
        self._malformed = 0
        self._position = 0
        self._first_breach: ConnectionEvent | None = None
        self._first_breach_position: int | None = None
        self._directives: list[KillDirective] = []
        self._issued: set[tuple[str, str]] = set()

    def reset(self) -> None:
        """Start a fresh run: counters, directives, and de-dup state."""
        with self._lock:
            self._reset_locked()

    @property
    def mode(self) -> MonitorMode:
        return self._mode

    def _issue(self, target: str, reason: str, reason_class: str,
               trigger: ConnectionEvent | RuleDriftRef | None,
               issued_at: datetime | None, position: int | None) -> None:
        key = (target, reason_class)
        if key in self._issued:
            return
        self._issued.add(key)
        directive = KillDirective(
            target_service=target, reason=reason, reason_class=reason_class,
            triggering_event=trigger, issued_at=issued_at, position=position,
            advisory=self._mode is MonitorMode.OBSERVE,
        )
        self._directives.append(directive)
        if self._executor is not None:
            self._executor.execute(directive)

    def _note_breach(self, event: ConnectionEvent, position: int) -> None:
        if self._first_breach is None:
            self._first_breach = event
            self._first_breach_position = position

    def ingest(self, event: ConnectionEvent) -> Classification:
        """Classify one event, update counters, and apply fail-safe directives."""
        with self._lock:
            self._position += 1
            position = self._position

            endpoint = resolve_endpoint(self._policy, event.src_ip)
            if endpoint is None or (
                event.src_service is not None and event.src_service != endpoint.service
            ):
                classification = Classification.UNKNOWN
            else:
                flow = FlowQuery(src_ip=event.src_ip, dst_ip=event.dst_ip,
                                 dst_port=event.dst_port, proto=event.proto, state=event.state)
                decision = decide_by_policy(self._policy, flow)
                classification = (
                    Classification.PERMITTED if decision is Decision.ALLOW
                    else Classification.FORBIDDEN
                )

            self._counts[classification] += 1
            if classification is Classification.FORBIDDEN:
                self._note_breach(event, position)
                self._issue(
                    endpoint.service, f"forbidden egress to {event.dst_ip}",
                    REASON_FORBIDDEN_EGRESS, event, event.ts, position,
                )
            elif classification is Classification.UNKNOWN:
                self._note_breach(event, position)
                self._issue(
                    ALL_SERVICES, f"event from unresolvable source {event.src_ip}",
                    REASON_UNKNOWN_SOURCE, event, event.ts, position,
                )
            return classification

    def note_malformed(self, reason: str) -> None:
        """Record an unparseable input line; fail-safe treats it like an
        unresolvable source."""
        with self._lock:
            self._position += 1
            self._malformed += 1
            self._issue(
                ALL_SERVICES, f"malformed event: {reason}", REASON_MALFORMED_EVENT,
                None, None, self._position,
            )

    def ingest_line(self, line: str) -> Classification | None:
        """Parse and ingest one JSONL line; returns None for malformed input."""
        try:
            event = parse_event(line)
        except MalformedEventError as exc:
            self.note_malformed(exc.reason)
            return None
        return self.ingest(event)

    def snapshot(self) -> MonitorState:
        with self._lock:
            return MonitorState(
                mode=self._mode,
                permitted=self._counts[Classification.PERMITTED],
                forbidden=self._counts[Classification.FORBIDDEN],
                unknown=self._counts[Classification.UNKNOWN],
                malformed=self._malformed,
                first_breach=self._first_breach,
                first_breach_position=self._first_breach_position,
                directives=tuple(self._directives),
            )


def replay(
    policy: IsolationPolicy,
    lines: Iterable[str],
    mode: MonitorMode = MonitorMode.STRICT,
    executor: KillExecutor | None = None,
) -> MonitorReport:
    """Fold the monitor over a JSONL event stream; malformed lines are counted
    but never abort the replay. Blank lines are skipped."""
    mon = Monitor(policy, mode=mode, executor=executor)
    for line in lines:
        if not line.strip():
            continue
        mon.ingest_line(line)
    return mon.snapshot()


def export_metrics(state: MonitorState) -> str:
    """Line-oriented metrics exposition of a state snapshot."""
    breach_ts = 0
    if state.first_breach is not None:
        breach_ts = int(state.first_breach.ts.timestamp())
    lines = [
        f'isolation_events_total{{class="permitted"}} {state.permitted}',
        f'isolation_events_total{{class="forbidden"}} {state.forbidden}',
        f'isolation_events_total{{class="unknown"}} {state.unknown}',
        f"isolation_malformed_events_total {state.malformed}",
        f"isolation_kill_directives_total {len(state.directives)}",
        f"isolation_first_breach_timestamp_seconds {breach_ts}",
    ]
    return "\n".join(lines) + "\n"


def check_rule_drift(
    policy: IsolationPolicy, observed_ruleset: FirewallRuleSet
) -> tuple[RuleDiff, KillDirective | None]:
    """Compare the host's actual ruleset against the compiled expectation.

    A directive is issued when the drift could make forbidden egress possible:
    a deny rule went missing, an accept rule appeared, or common rules were
    reordered in a way that changes verdicts over the flow universe. Drift
    that only tightens the ruleset (missing accepts, extra denies) and purely
    cosmetic reorderings yield no directive.
    """
    expected = compile_policy(policy)
    diff = diff_rulesets(expected, observed_ruleset)
    if diff.empty:
        return diff, None

    missing_deny = any(r.verdict is RuleAction.DENY for r in diff.missing)
    unexpected_accept = any(r.verdict is RuleAction.ACCEPT for r in diff.unexpected)
    semantic = missing_deny or unexpected_accept
    if not semantic and diff.reordered:
        semantic = not rulesets_equivalent(policy, expected, observed_ruleset)
    if not semantic:
        return diff, None

    directive = KillDirective(
        target_service=ALL_SERVICES,
        reason=(
            f"rule drift: {len(diff.missing)} missing, {len(diff.unexpected)} unexpected, "
            f"{len(diff.reordered)} reordered pair(s)"
        ),
        reason_class=REASON_RULE_DRIFT,
        triggering_event=RuleDriftRef(
            policy_hash=expected.policy_hash,
            missing=len(diff.missing),
            unexpected=len(diff.unexpected),
            reordered=len(diff.reordered),
        ),
        issued_at=None,
        position=None,
    )
    return diff, directive
