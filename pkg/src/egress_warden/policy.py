"""Domain model for declarative isolation policies.

A policy describes the network layout of a containerized service stack as a
split-horizon topology: an optional ingress DMZ facing the local intranet,
exactly one unrouted internal zone holding the application services, and any
number of egress DMZ zones reserved for narrowly pinned outbound exceptions
("airlocks"). Parsing and validation are separate steps: ``parse_policy``
maps the JSON document onto typed values and canonicalizes addresses,
``validate_policy`` checks the semantic invariants and reports every
violation with a stable machine-readable code.
"""

from __future__ import annotations

import hashlib
import ipaddress
import json
import re
from dataclasses import dataclass
from enum import Enum, IntEnum
from importlib import resources
from pathlib import Path
from typing import Any

IPAddress = ipaddress.IPv4Address | ipaddress.IPv6Address
IPNetwork = ipaddress.IPv4Network | ipaddress.IPv6Network

_NAME_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")

# Address ranges counted as "private" for pinning purposes: RFC 1918, IPv6
# unique-local, and loopback. Deliberately narrower than is_private of the
# ipaddress module, which also covers link-local and the TEST-NETs.
_PRIVATE_NETS = (
    ipaddress.ip_network("10.0.0.0/8"),
    ipaddress.ip_network("172.16.0.0/12"),
    ipaddress.ip_network("192.168.0.0/16"),
    ipaddress.ip_network("127.0.0.0/8"),
    ipaddress.ip_network("fc00::/7"),
    ipaddress.ip_network("::1/128"),
)


class PolicyError(Exception):
    """Base class for policy-layer failures."""


class PolicySyntaxError(PolicyError):
    """The policy document is structurally malformed.

    ``line`` is the 1-based source line when the underlying JSON parser can
    attribute one, otherwise ``None`` (the message then carries the path of
    the offending key).
    """

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
        self.message = message


class UnknownFieldError(PolicySyntaxError):
    """Strict parsing rejected an unrecognized key."""


class ZoneKind(Enum):
    INGRESS_DMZ = "ingress_dmz"
    INTERNAL = "internal"
    EGRESS_DMZ = "egress_dmz"


class Proto(Enum):
    TCP = "tcp"
    UDP = "udp"
    ICMP = "icmp"


class FlowState(Enum):
    NEW = "new"
    ESTABLISHED = "established"


class TlsVersion(IntEnum):
    """TLS protocol versions with their natural total order."""

    V10 = 10
    V11 = 11
    V12 = 12
    V13 = 13

    @property
    def label(self) -> str:
        return f"1.{self.value - 10}"

    @classmethod
    def from_label(cls, label: str) -> "TlsVersion":
        for version in cls:
            if version.label == label:
                return version
        raise ValueError(f"unknown TLS version {label!r}")


class MountMode(Enum):
    READ_ONLY = "read_only"
    WRITABLE_PERSISTENT = "writable_persistent"
    WRITABLE_EPHEMERAL = "writable_ephemeral"


class SecretDelivery(Enum):
    IN_MEMORY = "in_memory"
    FILE = "file"


@dataclass(frozen=True, slots=True)
class Zone:
    name: str
    kind: ZoneKind
    subnet: IPNetwork
    routed_gateway: bool


@dataclass(frozen=True, slots=True)
class PublishedPort:
    port: int
    proto: Proto


@dataclass(frozen=True, slots=True)
class Mount:
    path: str
    mode: MountMode


@dataclass(frozen=True, slots=True)
class Secret:
    name: str
    delivery: SecretDelivery
    path: str | None = None


@dataclass(frozen=True, slots=True)
class HardeningSpec:
    retained_capabilities: tuple[str, ...] = ()
    mounts: tuple[Mount, ...] = ()
    secrets: tuple[Secret, ...] = ()
    privileged: bool = False


@dataclass(frozen=True, slots=True)
class ServiceSpec:
    name: str
    attachments: tuple[str, ...]
    published_ports: tuple[PublishedPort, ...] = ()
    hardening: HardeningSpec = HardeningSpec()


@dataclass(frozen=True, slots=True)
class Airlock:
    """A pinned egress exception: one service, one private target, one port."""

    name: str
    from_service: str
    via_zone: str
    target_ip: IPAddress
    target_port: int
    proto: Proto
    require_upstream_tls_verification: bool


@dataclass(frozen=True, slots=True)
class IngressRule:
    source: IPNetwork
    to_service: str
    port: int
    proto: Proto


@dataclass(frozen=True, slots=True)
class ServiceLink:
    from_service: str
    to_service: str
    port: int
    proto: Proto


@dataclass(frozen=True, slots=True)
class TlsPolicy:
    min_version: TlsVersion


@dataclass(frozen=True, slots=True)
class IsolationPolicy:
    zones: tuple[Zone, ...]
    services: tuple[ServiceSpec, ...]
    service_links: tuple[ServiceLink, ...]
    airlocks: tuple[Airlock, ...]
    ingress: tuple[IngressRule, ...]
    tls: TlsPolicy

    def zone(self, name: str) -> Zone | None:
        for z in self.zones:
            if z.name == name:
                return z
        return None

    def service(self, name: str) -> ServiceSpec | None:
        for s in self.services:
            if s.name == name:
                return s
        return None

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "zones": [
                {
                    "name": z.name,
                    "kind": z.kind.value,
                    "subnet": str(z.subnet),
                    "routed_gateway": z.routed_gateway,
                }
                for z in self.zones
            ],
            "services": [
                {
                    "name": s.name,
                    "attachments": list(s.attachments),
                    "published_ports": [
                        {"port": p.port, "proto": p.proto.value} for p in s.published_ports
                    ],
                    "hardening": {
                        "retained_capabilities": list(s.hardening.retained_capabilities),
                        "mounts": [
                            {"path": m.path, "mode": m.mode.value} for m in s.hardening.mounts
                        ],
                        "secrets": [
                            {"name": sec.name, "delivery": sec.delivery.value}
                            | ({"path": sec.path} if sec.path is not None else {})
                            for sec in s.hardening.secrets
                        ],
                        "privileged": s.hardening.privileged,
                    },
                }
                for s in self.services
            ],
            "service_links": [
                {"from": l.from_service, "to": l.to_service, "port": l.port, "proto": l.proto.value}
                for l in self.service_links
            ],
            "airlocks": [
                {
                    "name": a.name,
                    "from_service": a.from_service,
                    "via_zone": a.via_zone,
                    "target_ip": str(a.target_ip),
                    "target_port": a.target_port,
                    "proto": a.proto.value,
                    "require_upstream_tls_verification": a.require_upstream_tls_verification,
                }
                for a in self.airlocks
            ],
            "ingress": [
                {
                    "source": str(r.source),
                    "to_service": r.to_service,
                    "port": r.port,
                    "proto": r.proto.value,
                }
                for r in self.ingress
            ],
            "tls": {"min_version": self.tls.min_version.label},
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))

    def content_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


@dataclass(frozen=True, slots=True)
class Endpoint:
    """The concrete address of one service on one zone network."""

    service: str
    ip: IPAddress
    zone: str


@dataclass(frozen=True, slots=True)
class Violation:
    code: str
    subject: str
    message: str


def is_private_ip(ip: IPAddress | str) -> bool:
    """True iff ``ip`` is RFC 1918, IPv6 unique-local, or loopback."""
    addr = ipaddress.ip_address(ip) if isinstance(ip, str) else ip
    return any(addr.version == net.version and addr in net for net in _PRIVATE_NETS)


def endpoints_for(policy: IsolationPolicy) -> tuple[Endpoint, ...]:
    """Derive the concrete address of every (service, zone) attachment.

    Addresses are assigned the way container runtimes hand them out on a
    user-defined network: the first usable host is the gateway, services then
    take consecutive addresses in policy declaration order.
    """
    endpoints: list[Endpoint] = []
    for zone in policy.zones:
        members = [s for s in policy.services if zone.name in s.attachments]
        if len(members) + 2 >= zone.subnet.num_addresses:
            raise PolicyError(f"zone {zone.name!r} subnet too small for its services")
        for index, svc in enumerate(members):
            ip = zone.subnet.network_address + (2 + index)
            endpoints.append(Endpoint(service=svc.name, ip=ip, zone=zone.name))
    return tuple(endpoints)


# --- parsing -----------------------------------------------------------------


def _require(obj: dict, key: str, ctx: str) -> Any:
    if key not in obj:
        raise PolicySyntaxError(f"{ctx}: required key {key!r} missing")
    return obj[key]


def _check_unknown(obj: dict, allowed: set[str], ctx: str, strict: bool) -> None:
    if not strict:
        return
    for key in obj:
        if key not in allowed:
            raise UnknownFieldError(f"{ctx}: unknown key {key!r}")


def _as_str(value: Any, ctx: str) -> str:
    if not isinstance(value, str):
        raise PolicySyntaxError(f"{ctx}: expected a string")
    return value


def _as_bool(value: Any, ctx: str) -> bool:
    if not isinstance(value, bool):
        raise PolicySyntaxError(f"{ctx}: expected a boolean")
    return value


def _as_int(value: Any, ctx: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise PolicySyntaxError(f"{ctx}: expected an integer")
    return value


def _as_list(value: Any, ctx: str) -> list:
    if not isinstance(value, list):
        raise PolicySyntaxError(f"{ctx}: expected a list")
    return value


def _as_dict(value: Any, ctx: str) -> dict:
    if not isinstance(value, dict):
        raise PolicySyntaxError(f"{ctx}: expected an object")
    return value


def _name(value: Any, ctx: str) -> str:
    text = _as_str(value, ctx)
    if not _NAME_RE.match(text):
        raise PolicySyntaxError(f"{ctx}: invalid identifier {text!r}")
    return text


def _cidr(value: Any, ctx: str) -> IPNetwork:
    text = _as_str(value, ctx)
    try:
        # strict=False canonicalizes by masking host bits below the prefix
        return ipaddress.ip_network(text, strict=False)
    except ValueError as exc:
        raise PolicySyntaxError(f"{ctx}: {exc}") from None


def _ip(value: Any, ctx: str) -> IPAddress:
    text = _as_str(value, ctx)
    try:
        return ipaddress.ip_address(text)
    except ValueError as exc:
        raise PolicySyntaxError(f"{ctx}: {exc}") from None


def _enum(cls: type, value: Any, ctx: str):
    text = _as_str(value, ctx)
    try:
        return cls(text)
    except ValueError:
        choices = ", ".join(m.value for m in cls)
        raise PolicySyntaxError(f"{ctx}: expected one of {choices}, got {text!r}") from None


def _l4_proto(value: Any, ctx: str) -> Proto:
    proto = _enum(Proto, value, ctx)
    if proto is Proto.ICMP:
        raise PolicySyntaxError(f"{ctx}: proto must be tcp or udp")
    return proto


def _parse_hardening(obj: Any, ctx: str, strict: bool) -> HardeningSpec:
    data = _as_dict(obj, ctx)
    _check_unknown(
        data, {"retained_capabilities", "mounts", "secrets", "privileged"}, ctx, strict
    )
    caps = tuple(
        _name(c, f"{ctx}.retained_capabilities")
        for c in _as_list(data.get("retained_capabilities", []), f"{ctx}.retained_capabilities")
    )
    mounts = []
    for i, m in enumerate(_as_list(data.get("mounts", []), f"{ctx}.mounts")):
        mctx = f"{ctx}.mounts[{i}]"
        mdata = _as_dict(m, mctx)
        _check_unknown(mdata, {"path", "mode"}, mctx, strict)
        mounts.append(
            Mount(
                path=_as_str(_require(mdata, "path", mctx), f"{mctx}.path"),
                mode=_enum(MountMode, _require(mdata, "mode", mctx), f"{mctx}.mode"),
            )
        )
    secrets = []
    for i, s in enumerate(_as_list(data.get("secrets", []), f"{ctx}.secrets")):
        sctx = f"{ctx}.secrets[{i}]"
        sdata = _as_dict(s, sctx)
        _check_unknown(sdata, {"name", "delivery", "path"}, sctx, strict)
        delivery = _enum(SecretDelivery, _require(sdata, "delivery", sctx), f"{sctx}.delivery")
        path = sdata.get("path")
        if delivery is SecretDelivery.FILE:
            path = _as_str(_require(sdata, "path", sctx), f"{sctx}.path")
        elif path is not None:
            raise PolicySyntaxError(f"{sctx}: path is only valid for file delivery")
        secrets.append(
            Secret(name=_name(_require(sdata, "name", sctx), f"{sctx}.name"), delivery=delivery, path=path)
        )
    return HardeningSpec(
        retained_capabilities=caps,
        mounts=tuple(mounts),
        secrets=tuple(secrets),
        privileged=_as_bool(data.get("privileged", False), f"{ctx}.privileged"),
    )


def parse_policy(document: str, *, strict: bool = True) -> IsolationPolicy:
    """Parse a policy document into its structured form.

    Canonicalizes CIDRs (host bits below the prefix are zeroed) but performs
    no semantic validation; run :func:`validate_policy` on the result. With
    ``strict`` (the default), unrecognized keys raise :class:`UnknownFieldError`.
    """
    try:
        raw = json.loads(document)
    except json.JSONDecodeError as exc:
        raise PolicySyntaxError(exc.msg, line=exc.lineno) from None
    data = _as_dict(raw, "policy")
    _check_unknown(
        data, {"zones", "services", "service_links", "airlocks", "ingress", "tls"}, "policy", strict
    )

    zones = []
    for i, z in enumerate(_as_list(_require(data, "zones", "policy"), "zones")):
        ctx = f"zones[{i}]"
        zdata = _as_dict(z, ctx)
        _check_unknown(zdata, {"name", "kind", "subnet", "routed_gateway"}, ctx, strict)
        zones.append(
            Zone(
                name=_name(_require(zdata, "name", ctx), f"{ctx}.name"),
                kind=_enum(ZoneKind, _require(zdata, "kind", ctx), f"{ctx}.kind"),
                subnet=_cidr(_require(zdata, "subnet", ctx), f"{ctx}.subnet"),
                routed_gateway=_as_bool(_require(zdata, "routed_gateway", ctx), f"{ctx}.routed_gateway"),
            )
        )

    services = []
    for i, s in enumerate(_as_list(_require(data, "services", "policy"), "services")):
        ctx = f"services[{i}]"
        sdata = _as_dict(s, ctx)
        _check_unknown(sdata, {"name", "attachments", "published_ports", "hardening"}, ctx, strict)
        ports = []
        for j, p in enumerate(_as_list(sdata.get("published_ports", []), f"{ctx}.published_ports")):
            pctx = f"{ctx}.published_ports[{j}]"
            pdata = _as_dict(p, pctx)
            _check_unknown(pdata, {"port", "proto"}, pctx, strict)
            ports.append(
                PublishedPort(
                    port=_as_int(_require(pdata, "port", pctx), f"{pctx}.port"),
                    proto=_l4_proto(_require(pdata, "proto", pctx), f"{pctx}.proto"),
                )
            )
        hardening = HardeningSpec()
        if "hardening" in sdata:
            hardening = _parse_hardening(sdata["hardening"], f"{ctx}.hardening", strict)
        services.append(
            ServiceSpec(
                name=_name(_require(sdata, "name", ctx), f"{ctx}.name"),
                attachments=tuple(
                    _name(a, f"{ctx}.attachments")
                    for a in _as_list(_require(sdata, "attachments", ctx), f"{ctx}.attachments")
                ),
                published_ports=tuple(ports),
                hardening=hardening,
            )
        )

    links = []
    for i, l in enumerate(_as_list(data.get("service_links", []), "service_links")):
        ctx = f"service_links[{i}]"
        ldata = _as_dict(l, ctx)
        _check_unknown(ldata, {"from", "to", "port", "proto"}, ctx, strict)
        links.append(
            ServiceLink(
                from_service=_name(_require(ldata, "from", ctx), f"{ctx}.from"),
                to_service=_name(_require(ldata, "to", ctx), f"{ctx}.to"),
                port=_as_int(_require(ldata, "port", ctx), f"{ctx}.port"),
                proto=_l4_proto(_require(ldata, "proto", ctx), f"{ctx}.proto"),
            )
        )

    airlocks = []
    for i, a in enumerate(_as_list(data.get("airlocks", []), "airlocks")):
        ctx = f"airlocks[{i}]"
        adata = _as_dict(a, ctx)
        _check_unknown(
            adata,
            {"name", "from_service", "via_zone", "target_ip", "target_port", "proto",
             "require_upstream_tls_verification"},
            ctx,
            strict,
        )
        airlocks.append(
            Airlock(
                name=_name(_require(adata, "name", ctx), f"{ctx}.name"),
                from_service=_name(_require(adata, "from_service", ctx), f"{ctx}.from_service"),
                via_zone=_name(_require(adata, "via_zone", ctx), f"{ctx}.via_zone"),
                target_ip=_ip(_require(adata, "target_ip", ctx), f"{ctx}.target_ip"),
                target_port=_as_int(_require(adata, "target_port", ctx), f"{ctx}.target_port"),
                proto=_l4_proto(_require(adata, "proto", ctx), f"{ctx}.proto"),
                require_upstream_tls_verification=_as_bool(
                    _require(adata, "require_upstream_tls_verification", ctx),
                    f"{ctx}.require_upstream_tls_verification",
                ),
            )
        )

    ingress = []
    for i, r in enumerate(_as_list(data.get("ingress", []), "ingress")):
        ctx = f"ingress[{i}]"
        rdata = _as_dict(r, ctx)
        _check_unknown(rdata, {"source", "to_service", "port", "proto"}, ctx, strict)
        ingress.append(
            IngressRule(
                source=_cidr(_require(rdata, "source", ctx), f"{ctx}.source"),
                to_service=_name(_require(rdata, "to_service", ctx), f"{ctx}.to_service"),
                port=_as_int(_require(rdata, "port", ctx), f"{ctx}.port"),
                proto=_l4_proto(_require(rdata, "proto", ctx), f"{ctx}.proto"),
            )
        )

    tdata = _as_dict(_require(data, "tls", "policy"), "tls")
    _check_unknown(tdata, {"min_version"}, "tls", strict)
    try:
        tls = TlsPolicy(min_version=TlsVersion.from_label(_as_str(_require(tdata, "min_version", "tls"), "tls.min_version")))
    except ValueError as exc:
        raise PolicySyntaxError(f"tls.min_version: {exc}") from None

    return IsolationPolicy(
        zones=tuple(zones),
        services=tuple(services),
        service_links=tuple(links),
        airlocks=tuple(airlocks),
        ingress=tuple(ingress),
        tls=tls,
    )


def render_policy(policy: IsolationPolicy) -> str:
    """Render a policy back to its document form (inverse of parse_policy)."""
    return json.dumps(policy.to_json_dict(), indent=2) + "\n"


# --- validation --------------------------------------------------------------


def _port_ok(port: int) -> bool:
    return 1 <= port <= 65535


def validate_policy(policy: IsolationPolicy) -> list[Violation]:
    """Check every semantic invariant; return all violations, sorted.

    The returned list is empty iff the policy is valid. Violations are
    collected exhaustively (no fail-fast) and sorted by (code, subject) so
    identical inputs always give identical output. Codes: INTERNAL_ROUTED,
    ZONE_PUBLIC_SUBNET, ZONE_OVERLAP, INTERNAL_ZONE_COUNT, INGRESS_ZONE_COUNT,
    DUPLICATE_NAME, EMPTY_ATTACHMENTS, UNKNOWN_ZONE, UNKNOWN_SERVICE,
    DUPLICATE_PUBLISHED_PORT, PORT_OUT_OF_RANGE, PRIVILEGED_CONTAINER,
    LINK_NO_SHARED_ZONE, AIRLOCK_PUBLIC_TARGET, AIRLOCK_TARGET_IN_TOPOLOGY,
    AIRLOCK_VIA_NOT_EGRESS, AIRLOCK_SERVICE_NOT_IN_ZONE, INGRESS_TARGET_NOT_DMZ.
    """
    out: list[Violation] = []
    zone_names = [z.name for z in policy.zones]
    service_names = [s.name for s in policy.services]
    zones_by_name = {z.name: z for z in policy.zones}
    services_by_name = {s.name: s for s in policy.services}

    def dup_names(names: list[str], category: str) -> None:
        seen: set[str] = set()
        for name in names:
            if name in seen:
                out.append(
                    Violation("DUPLICATE_NAME", f"{category}:{name}", f"duplicate {category} name {name!r}")
                )
            seen.add(name)

    dup_names(zone_names, "zone")
    dup_names(service_names, "service")
    dup_names([a.name for a in policy.airlocks], "airlock")

    internal = [z for z in policy.zones if z.kind is ZoneKind.INTERNAL]
    if len(internal) != 1:
        out.append(
            Violation(
                "INTERNAL_ZONE_COUNT",
                "zones",
                f"expected exactly one internal zone, found {len(internal)}",
            )
        )
    ingress_zones = [z for z in policy.zones if z.kind is ZoneKind.INGRESS_DMZ]
    if len(ingress_zones) > 1:
        out.append(
            Violation(
                "INGRESS_ZONE_COUNT",
                "zones",
                f"at most one ingress DMZ zone is allowed, found {len(ingress_zones)}",
            )
        )

    for zone in policy.zones:
        subject = f"zone:{zone.name}"
        if zone.kind is ZoneKind.INTERNAL and zone.routed_gateway:
            out.append(
                Violation("INTERNAL_ROUTED", subject, "internal zone must not have a routed gateway")
            )
        if not is_private_ip(zone.subnet.network_address):
            out.append(
                Violation("ZONE_PUBLIC_SUBNET", subject, f"zone subnet {zone.subnet} is not a private range")
            )
    for i, a in enumerate(policy.zones):
        for b in policy.zones[i + 1 :]:
            if a.subnet.version == b.subnet.version and a.subnet.overlaps(b.subnet):
                out.append(
                    Violation(
                        "ZONE_OVERLAP",
                        f"zone:{a.name}|zone:{b.name}",
                        f"zone subnets {a.subnet} and {b.subnet} overlap",
                    )
                )

    for svc in policy.services:
        subject = f"service:{svc.name}"
        if not svc.attachments:
            out.append(Violation("EMPTY_ATTACHMENTS", subject, "service is attached to no zone"))
        for zone_name in svc.attachments:
            if zone_name not in zones_by_name:
                out.append(Violation("UNKNOWN_ZONE", subject, f"attachment names unknown zone {zone_name!r}"))
        seen_ports: set[tuple[int, Proto]] = set()
        for p in svc.published_ports:
            if (p.port, p.proto) in seen_ports:
                out.append(
                    Violation(
                        "DUPLICATE_PUBLISHED_PORT", subject, f"published port {p.port}/{p.proto.value} repeated"
                    )
                )
            seen_ports.add((p.port, p.proto))
            if not _port_ok(p.port):
                out.append(
                    Violation("PORT_OUT_OF_RANGE", subject, f"published port {p.port} outside [1, 65535]")
                )
        if svc.hardening.privileged:
            out.append(Violation("PRIVILEGED_CONTAINER", subject, "service runs privileged"))

    for link in policy.service_links:
        subject = f"link:{link.from_service}->{link.to_service}:{link.port}/{link.proto.value}"
        src = services_by_name.get(link.from_service)
        dst = services_by_name.get(link.to_service)
        if src is None:
            out.append(Violation("UNKNOWN_SERVICE", subject, f"unknown service {link.from_service!r}"))
        if dst is None:
            out.append(Violation("UNKNOWN_SERVICE", subject, f"unknown service {link.to_service!r}"))
        if src is not None and dst is not None:
            if not set(src.attachments) & set(dst.attachments):
                out.append(
                    Violation("LINK_NO_SHARED_ZONE", subject, "linked services share no zone attachment")
                )
        if not _port_ok(link.port):
            out.append(Violation("PORT_OUT_OF_RANGE", subject, f"port {link.port} outside [1, 65535]"))

    for airlock in policy.airlocks:
        subject = f"airlock:{airlock.name}"
        if airlock.from_service not in services_by_name:
            out.append(Violation("UNKNOWN_SERVICE", subject, f"unknown service {airlock.from_service!r}"))
        via = zones_by_name.get(airlock.via_zone)
        if via is None:
            out.append(Violation("UNKNOWN_ZONE", subject, f"unknown zone {airlock.via_zone!r}"))
        else:
            if via.kind is not ZoneKind.EGRESS_DMZ:
                out.append(
                    Violation("AIRLOCK_VIA_NOT_EGRESS", subject, f"via zone {via.name!r} is not an egress DMZ")
                )
            svc = services_by_name.get(airlock.from_service)
            if svc is not None and airlock.via_zone not in svc.attachments:
                out.append(
                    Violation(
                        "AIRLOCK_SERVICE_NOT_IN_ZONE",
                        subject,
                        f"service {airlock.from_service!r} is not attached to {airlock.via_zone!r}",
                    )
                )
        if not is_private_ip(airlock.target_ip):
            out.append(
                Violation("AIRLOCK_PUBLIC_TARGET", subject, f"target {airlock.target_ip} is not a private address")
            )
        for zone in policy.zones:
            if airlock.target_ip.version == zone.subnet.version and airlock.target_ip in zone.subnet:
                out.append(
                    Violation(
                        "AIRLOCK_TARGET_IN_TOPOLOGY",
                        subject,
                        f"target {airlock.target_ip} lies inside zone {zone.name!r}",
                    )
                )
        if not _port_ok(airlock.target_port):
            out.append(
                Violation("PORT_OUT_OF_RANGE", subject, f"target port {airlock.target_port} outside [1, 65535]")
            )

    for rule in policy.ingress:
        subject = f"ingress:{rule.source}->{rule.to_service}:{rule.port}/{rule.proto.value}"
        svc = services_by_name.get(rule.to_service)
        if svc is None:
            out.append(Violation("UNKNOWN_SERVICE", subject, f"unknown service {rule.to_service!r}"))
        else:
            exposed = any(
                zones_by_name.get(z) is not None and zones_by_name[z].kind is ZoneKind.INGRESS_DMZ
                for z in svc.attachments
            )
            if not exposed:
                out.append(
                    Violation(
                        "INGRESS_TARGET_NOT_DMZ",
                        subject,
                        f"service {rule.to_service!r} is not attached to an ingress DMZ zone",
                    )
                )
        if not _port_ok(rule.port):
            out.append(Violation("PORT_OUT_OF_RANGE", subject, f"port {rule.port} outside [1, 65535]"))

    return sorted(out, key=lambda v: (v.code, v.subject, v.message))


# --- reference fixture --------------------------------------------------------


def reference_policy_path() -> Path:
    """Filesystem path of the packaged reference policy document."""
    return Path(str(resources.files("egress_warden").joinpath("data/reference_policy.json")))


def reference_policy() -> IsolationPolicy:
    """The packaged three-zone reference deployment, parsed."""
    return parse_policy(reference_policy_path().read_text(encoding="utf-8"))
