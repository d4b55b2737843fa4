"""Static hardening checks and TLS minimum-version negotiation.

Covers the non-network mitigations: capability and privilege drop, mount
discipline for secret material, declared-versus-observed network exposure,
and the TLS floor. Capability names are opaque strings checked against an
allow-set; no kernel semantics are interpreted.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import PurePosixPath
from typing import Iterable

from .policy import (
    IsolationPolicy,
    Mount,
    MountMode,
    Proto,
    PublishedPort,
    SecretDelivery,
    TlsVersion,
)

SUPPORTED_TLS_MAX = TlsVersion.V13

# Stable finding codes
CAP_RETAINED = "CAP_RETAINED"
PRIVILEGED = "PRIVILEGED"
SECRET_ON_PERSISTENT_PATH = "SECRET_ON_PERSISTENT_PATH"
WRITABLE_PERSISTENT_MOUNT = "WRITABLE_PERSISTENT_MOUNT"
TLS_BELOW_MIN = "TLS_BELOW_MIN"
MISSING_SERVICE = "MISSING_SERVICE"
UNKNOWN_SERVICE = "UNKNOWN_SERVICE"
UNEXPECTED_ATTACHMENT = "UNEXPECTED_ATTACHMENT"
MISSING_ATTACHMENT = "MISSING_ATTACHMENT"
UNEXPECTED_PORT = "UNEXPECTED_PORT"
MISSING_PORT = "MISSING_PORT"


class Severity(Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True, slots=True)
class HardeningFinding:
    code: str
    service: str
    detail: str
    severity: Severity = Severity.ERROR


@dataclass(frozen=True, slots=True)
class TlsOffer:
    """A peer's offered TLS version range."""

    min_offered: TlsVersion
    max_offered: TlsVersion

    def __post_init__(self):
        if self.min_offered > self.max_offered:
            raise ValueError("min_offered must not exceed max_offered")


@dataclass(frozen=True, slots=True)
class ObservedExposure:
    """One service's attachments and host ports as actually deployed."""

    service: str
    attachments: tuple[str, ...]
    published_ports: tuple[PublishedPort, ...]


def negotiate_tls(policy_min: TlsVersion, offer: TlsOffer) -> TlsVersion | None:
    """Pick the highest mutually acceptable version, or None when the offer
    tops out below the policy floor."""
    if offer.max_offered < policy_min:
        return None
    return min(offer.max_offered, SUPPORTED_TLS_MAX)


def _covering_mounts(mounts: Iterable[Mount], path: str) -> list[Mount]:
    target = PurePosixPath(path)
    covering = []
    for mount in mounts:
        base = PurePosixPath(mount.path)
        if target == base or base in target.parents:
            covering.append(mount)
    return covering


def check_hardening(
    policy: IsolationPolicy, allowed_capabilities: frozenset[str] = frozenset()
) -> list[HardeningFinding]:
    """Validate capability drop, privilege drop, and secret delivery.

    Returns no findings iff every service retains no capability outside
    ``allowed_capabilities`` (empty by default), no service is privileged,
    every file-delivered secret sits under a read-only or ephemeral mount,
    and no writable-persistent mount reaches into a secret path.
    """
    findings: list[HardeningFinding] = []
    for svc in policy.services:
        extra = sorted(set(svc.hardening.retained_capabilities) - allowed_capabilities)
        if extra:
            findings.append(
                HardeningFinding(CAP_RETAINED, svc.name, f"retained capabilities: {', '.join(extra)}")
            )
        if svc.hardening.privileged:
            findings.append(HardeningFinding(PRIVILEGED, svc.name, "container runs privileged"))
        for secret in svc.hardening.secrets:
            if secret.delivery is not SecretDelivery.FILE:
                continue
            covering = _covering_mounts(svc.hardening.mounts, secret.path or "")
            if not covering:
                findings.append(
                    HardeningFinding(
                        SECRET_ON_PERSISTENT_PATH,
                        svc.name,
                        f"secret {secret.name!r} at {secret.path} has no read-only or ephemeral mount",
                    )
                )
                continue
            # the most specific mount governs the path
            governing = max(covering, key=lambda m: len(PurePosixPath(m.path).parts))
            if governing.mode is MountMode.WRITABLE_PERSISTENT:
                findings.append(
                    HardeningFinding(
                        SECRET_ON_PERSISTENT_PATH,
                        svc.name,
                        f"secret {secret.name!r} at {secret.path} sits on writable-persistent mount {governing.path}",
                    )
                )
            else:
                shadowing = [
                    m for m in covering
                    if m is not governing and m.mode is MountMode.WRITABLE_PERSISTENT
                ]
                for mount in shadowing:
                    findings.append(
                        HardeningFinding(
                            WRITABLE_PERSISTENT_MOUNT,
                            svc.name,
                            f"writable-persistent mount {mount.path} contains secret path {secret.path}",
                        )
                    )
    return sorted(findings, key=lambda f: (f.code, f.service, f.detail))


def check_tls_floor(policy_min: TlsVersion, runtime_offer: TlsOffer) -> list[HardeningFinding]:
    """Findings when the runtime would accept handshakes below the policy floor."""
    if runtime_offer.min_offered >= policy_min:
        return []
    return [
        HardeningFinding(
            TLS_BELOW_MIN,
            "tls",
            f"runtime accepts TLS {runtime_offer.min_offered.label}, policy floor is {policy_min.label}",
        )
    ]


def declared_exposure(policy: IsolationPolicy) -> list[ObservedExposure]:
    """The exposure the policy itself declares, in observation form."""
    return [
        ObservedExposure(
            service=s.name,
            attachments=tuple(s.attachments),
            published_ports=tuple(s.published_ports),
        )
        for s in policy.services
    ]


def check_exposure(
    policy: IsolationPolicy, observed: Iterable[ObservedExposure]
) -> list[HardeningFinding]:
    """Exact-match comparison of declared versus observed attachments/ports."""
    findings: list[HardeningFinding] = []
    observed_by_name = {}
    for obs in observed:
        observed_by_name[obs.service] = obs

    declared_names = {s.name for s in policy.services}
    for name in observed_by_name:
        if name not in declared_names:
            findings.append(
                HardeningFinding(UNKNOWN_SERVICE, name, "observed service is not declared in the policy")
            )

    for svc in policy.services:
        obs = observed_by_name.get(svc.name)
        if obs is None:
            findings.append(
                HardeningFinding(MISSING_SERVICE, svc.name, "service not present in observation")
            )
            continue
        declared_att = set(svc.attachments)
        observed_att = set(obs.attachments)
        for zone in sorted(observed_att - declared_att):
            findings.append(
                HardeningFinding(UNEXPECTED_ATTACHMENT, svc.name, f"attached to undeclared zone {zone!r}")
            )
        for zone in sorted(declared_att - observed_att):
            findings.append(
                HardeningFinding(MISSING_ATTACHMENT, svc.name, f"declared attachment {zone!r} absent")
            )
        declared_ports = {(p.port, p.proto) for p in svc.published_ports}
        observed_ports = {(p.port, p.proto) for p in obs.published_ports}
        for port, proto in sorted(observed_ports - declared_ports, key=_port_sort_key):
            findings.append(
                HardeningFinding(UNEXPECTED_PORT, svc.name, f"publishes undeclared host port {port}/{proto.value}")
            )
        for port, proto in sorted(declared_ports - observed_ports, key=_port_sort_key):
            findings.append(
                HardeningFinding(MISSING_PORT, svc.name, f"declared host port {port}/{proto.value} not published")
            )
    return sorted(findings, key=lambda f: (f.code, f.service, f.detail))


def _port_sort_key(entry: tuple[int, Proto]) -> tuple[int, str]:
    port, proto = entry
    return (port, proto.value)
