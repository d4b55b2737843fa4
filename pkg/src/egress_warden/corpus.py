"""Randomized policy and event-stream generation for verification sweeps.

Policies are valid by construction and drawn from the deployment shapes the
model targets: one internal zone, an optional ingress DMZ fronted by a proxy,
and zero or more egress DMZs each hosting a single proxy with one pinned
airlock. Zone subnets come from 172.16.0.0/12 and airlock pins from 10.0.0.0/8
with generous spacing, so pin neighbours never collide with zones, other pins,
or ingress sources.
"""

from __future__ import annotations

import json
import random
from typing import Iterator

from .flows import SWEEP_PORTS
from .policy import IsolationPolicy, parse_policy

DEFAULT_SEED = 20260810

_CAPS = ("NET_BIND_SERVICE", "CHOWN", "SETUID")
_TLS_LABELS = ("1.1", "1.2", "1.3")


def random_policy(rng: random.Random) -> IsolationPolicy:
    """One random valid policy; structure varies with the generator state."""
    n_egress = rng.choice((0, 1, 1, 1, 2))
    with_ingress = rng.random() < 0.85

    third_octets = rng.sample(range(0, 200), k=1 + n_egress + (1 if with_ingress else 0))
    zones = [
        {
            "name": "internal",
            "kind": "internal",
            "subnet": f"172.{rng.choice((17, 28, 19))}.{third_octets[0]}.0/24",
            "routed_gateway": False,
        }
    ]
    octet_iter = iter(third_octets[1:])
    if with_ingress:
        zones.append(
            {
                "name": "ingress-dmz",
                "kind": "ingress_dmz",
                "subnet": f"172.26.{next(octet_iter)}.0/24",
                "routed_gateway": True,
            }
        )
    for k in range(n_egress):
        zones.append(
            {
                "name": f"egress-dmz-{k}",
                "kind": "egress_dmz",
                "subnet": f"172.30.{next(octet_iter)}.0/24",
                "routed_gateway": True,
            }
        )

    def hardening() -> dict:
        mounts = []
        if rng.random() < 0.6:
            mounts.append({"path": "/app/config", "mode": "read_only"})
        if rng.random() < 0.5:
            mounts.append({"path": "/tmp", "mode": "writable_ephemeral"})
        secrets = []
        if rng.random() < 0.4:
            secrets.append({"name": "api-token", "delivery": "in_memory"})
        if mounts and mounts[0]["mode"] == "read_only" and rng.random() < 0.3:
            secrets.append(
                {"name": "client-cert", "delivery": "file", "path": "/app/config/cert.pem"}
            )
        return {
            "retained_capabilities": [],
            "mounts": mounts,
            "secrets": secrets,
            "privileged": False,
        }

    n_apps = rng.randint(1, 3)
    services = []
    if with_ingress:
        services.append(
            {
                "name": "edge-proxy",
                "attachments": ["ingress-dmz", "internal"],
                "published_ports": [{"port": 443, "proto": "tcp"}],
                "hardening": hardening(),
            }
        )
    for i in range(n_apps):
        services.append(
            {
                "name": f"app-{i}",
                "attachments": ["internal"],
                "published_ports": [],
                "hardening": hardening(),
            }
        )
    for k in range(n_egress):
        services.append(
            {
                "name": f"egress-proxy-{k}",
                "attachments": ["internal", f"egress-dmz-{k}"],
                "published_ports": [],
                "hardening": hardening(),
            }
        )

    links = []
    seen_links = set()

    def add_link(src: str, dst: str) -> None:
        port = rng.choice(SWEEP_PORTS)
        key = (src, dst, port)
        if src != dst and key not in seen_links:
            seen_links.add(key)
            links.append({"from": src, "to": dst, "port": port, "proto": "tcp"})

    app_names = [f"app-{i}" for i in range(n_apps)]
    if with_ingress:
        add_link("edge-proxy", rng.choice(app_names))
    for _ in range(rng.randint(0, 3)):
        add_link(rng.choice(app_names), rng.choice(app_names))
    for k in range(n_egress):
        add_link(rng.choice(app_names), f"egress-proxy-{k}")

    airlocks = []
    for k in range(n_egress):
        airlocks.append(
            {
                "name": f"pin-{k}",
                "from_service": f"egress-proxy-{k}",
                "via_zone": f"egress-dmz-{k}",
                "target_ip": f"10.{rng.randint(1, 200)}.{50 + 10 * k}.10",
                "target_port": rng.choice(SWEEP_PORTS),
                "proto": rng.choice(("tcp", "tcp", "udp")),
                "require_upstream_tls_verification": True,
            }
        )

    ingress = []
    if with_ingress:
        ingress.append(
            {
                "source": rng.choice(("192.168.0.0/16", "10.0.0.0/8", "192.168.40.0/24")),
                "to_service": "edge-proxy",
                "port": 443,
                "proto": "tcp",
            }
        )

    document = {
        "zones": zones,
        "services": services,
        "service_links": links,
        "airlocks": airlocks,
        "ingress": ingress,
        "tls": {"min_version": rng.choice(_TLS_LABELS)},
    }
    return parse_policy(json.dumps(document))


def policy_corpus(count: int, seed: int = DEFAULT_SEED) -> Iterator[IsolationPolicy]:
    """Deterministic stream of random valid policies."""
    rng = random.Random(seed)
    for _ in range(count):
        yield random_policy(rng)


def nominal_events(
    policy: IsolationPolicy,
    count: int,
    rng: random.Random,
    beacon_positions: tuple[int, ...] = (),
) -> list[str]:
    """JSONL lines of policy-conformant traffic, with optional beacons.

    Nominal events replay declared service links (new and established states).
    A beacon at 1-based position ``p`` is a forbidden HTTPS attempt to 8.8.8.8
    from a random internal endpoint.
    """
    from .policy import ZoneKind, endpoints_for

    endpoint_ip = {(e.zone, e.service): e.ip for e in endpoints_for(policy)}
    services = {s.name: s for s in policy.services}
    choices = []
    for link in policy.service_links:
        shared = sorted(
            set(services[link.from_service].attachments)
            & set(services[link.to_service].attachments)
        )
        for zone in shared:
            choices.append(
                (link.from_service, endpoint_ip[(zone, link.from_service)],
                 endpoint_ip[(zone, link.to_service)], link.port, link.proto.value)
            )
    if not choices:
        raise ValueError("policy declares no service links to replay")
    internal = next(z for z in policy.zones if z.kind is ZoneKind.INTERNAL)
    internal_eps = [
        (svc, ip) for (zone, svc), ip in endpoint_ip.items() if zone == internal.name
    ]

    lines = []
    beacons = set(beacon_positions)
    for position in range(1, count + 1):
        ts = f"2026-01-01T{(position // 3600) % 24:02d}:{(position // 60) % 60:02d}:{position % 60:02d}Z"
        if position in beacons:
            svc, ip = rng.choice(internal_eps)
            event = {
                "ts": ts, "src_service": svc, "src_ip": str(ip),
                "dst_ip": "8.8.8.8", "dst_port": 443, "proto": "tcp", "state": "new",
            }
        else:
            svc, src, dst, port, proto = rng.choice(choices)
            event = {
                "ts": ts, "src_service": svc, "src_ip": str(src), "dst_ip": str(dst),
                "dst_port": port, "proto": proto,
                "state": rng.choice(("new", "established")),
            }
        lines.append(json.dumps(event))
    return lines
