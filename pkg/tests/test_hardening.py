"""Capability/secret hardening checks, exposure matching, TLS negotiation."""

import json
import random
from itertools import product

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from egress_warden.corpus import random_policy
from egress_warden.hardening import (
    CAP_RETAINED,
    MISSING_SERVICE,
    SECRET_ON_PERSISTENT_PATH,
    UNEXPECTED_ATTACHMENT,
    UNEXPECTED_PORT,
    WRITABLE_PERSISTENT_MOUNT,
    ObservedExposure,
    TlsOffer,
    check_exposure,
    check_hardening,
    check_tls_floor,
    declared_exposure,
    negotiate_tls,
)
from egress_warden.policy import Proto, PublishedPort, TlsVersion, parse_policy


def _with_service_hardening(ref_policy, service, hardening):
    doc = ref_policy.to_json_dict()
    for svc in doc["services"]:
        if svc["name"] == service:
            svc["hardening"] = hardening
    return parse_policy(json.dumps(doc))


# ---------------------------------------------------------------------------
# check_hardening
# ---------------------------------------------------------------------------


def test_reference_policy_has_no_findings(ref_policy):
    assert check_hardening(ref_policy) == []


def test_retained_capability_flagged(ref_policy):
    policy = _with_service_hardening(
        ref_policy, "backend",
        {"retained_capabilities": ["NET_ADMIN"], "mounts": [], "secrets": [], "privileged": False},
    )
    findings = check_hardening(policy)
    assert [f.code for f in findings] == [CAP_RETAINED]
    assert findings[0].service == "backend"


def test_explicit_allow_set_suppresses_capability_finding(ref_policy):
    policy = _with_service_hardening(
        ref_policy, "backend",
        {"retained_capabilities": ["NET_BIND_SERVICE"], "mounts": [], "secrets": [], "privileged": False},
    )
    assert check_hardening(policy, allowed_capabilities=frozenset({"NET_BIND_SERVICE"})) == []
    assert check_hardening(policy) != []


def test_secret_on_writable_persistent_mount(ref_policy):
    policy = _with_service_hardening(
        ref_policy, "backend",
        {
            "retained_capabilities": [],
            "mounts": [{"path": "/data", "mode": "writable_persistent"}],
            "secrets": [{"name": "db-key", "delivery": "file", "path": "/data/key.pem"}],
            "privileged": False,
        },
    )
    findings = check_hardening(policy)
    assert [f.code for f in findings] == [SECRET_ON_PERSISTENT_PATH]


def test_secret_without_covering_mount_flagged(ref_policy):
    policy = _with_service_hardening(
        ref_policy, "backend",
        {
            "retained_capabilities": [],
            "mounts": [],
            "secrets": [{"name": "db-key", "delivery": "file", "path": "/stray/key.pem"}],
            "privileged": False,
        },
    )
    assert [f.code for f in check_hardening(policy)] == [SECRET_ON_PERSISTENT_PATH]


def test_persistent_mount_shadowing_a_read_only_secret(ref_policy):
    # the specific read-only mount governs the path, but an enclosing
    # writable-persistent mount still reaches it
    policy = _with_service_hardening(
        ref_policy, "backend",
        {
            "retained_capabilities": [],
            "mounts": [
                {"path": "/data", "mode": "writable_persistent"},
                {"path": "/data/secrets", "mode": "read_only"},
            ],
            "secrets": [{"name": "db-key", "delivery": "file", "path": "/data/secrets/key.pem"}],
            "privileged": False,
        },
    )
    assert [f.code for f in check_hardening(policy)] == [WRITABLE_PERSISTENT_MOUNT]


def test_in_memory_secrets_need_no_mount(ref_policy):
    policy = _with_service_hardening(
        ref_policy, "backend",
        {
            "retained_capabilities": [],
            "mounts": [],
            "secrets": [{"name": "token", "delivery": "in_memory"}],
            "privileged": False,
        },
    )
    assert check_hardening(policy) == []


def test_check_hardening_is_monotone_in_retained_caps(ref_policy):
    base = _with_service_hardening(
        ref_policy, "frontend",
        {"retained_capabilities": ["SYS_ADMIN"], "mounts": [], "secrets": [], "privileged": False},
    )
    more = _with_service_hardening(
        base, "backend",
        {"retained_capabilities": ["NET_RAW"], "mounts": [], "secrets": [], "privileged": False},
    )
    base_findings = {(f.code, f.service) for f in check_hardening(base)}
    more_findings = {(f.code, f.service) for f in check_hardening(more)}
    assert base_findings <= more_findings


# ---------------------------------------------------------------------------
# negotiate_tls
# ---------------------------------------------------------------------------


def test_negotiates_highest_mutual_version():
    offer = TlsOffer(TlsVersion.V10, TlsVersion.V13)
    assert negotiate_tls(TlsVersion.V12, offer) is TlsVersion.V13


def test_rejects_offer_below_floor():
    offer = TlsOffer(TlsVersion.V10, TlsVersion.V11)
    assert negotiate_tls(TlsVersion.V12, offer) is None


def test_boundary_equality_accepted():
    offer = TlsOffer(TlsVersion.V13, TlsVersion.V13)
    assert negotiate_tls(TlsVersion.V13, offer) is TlsVersion.V13


def test_offer_with_inverted_range_rejected_at_construction():
    with pytest.raises(ValueError):
        TlsOffer(TlsVersion.V13, TlsVersion.V10)


def test_full_version_lattice_never_negotiates_below_floor():
    versions = list(TlsVersion)
    for policy_min, lo, hi in product(versions, versions, versions):
        if lo > hi:
            with pytest.raises(ValueError):
                TlsOffer(lo, hi)
            continue
        outcome = negotiate_tls(policy_min, TlsOffer(lo, hi))
        if hi < policy_min:
            assert outcome is None
        else:
            assert outcome is not None
            assert outcome >= policy_min
            assert lo <= outcome <= hi


def test_tls_floor_check_flags_weak_runtime():
    assert check_tls_floor(TlsVersion.V12, TlsOffer(TlsVersion.V12, TlsVersion.V13)) == []
    findings = check_tls_floor(TlsVersion.V12, TlsOffer(TlsVersion.V10, TlsVersion.V13))
    assert [f.code for f in findings] == ["TLS_BELOW_MIN"]


# ---------------------------------------------------------------------------
# check_exposure
# ---------------------------------------------------------------------------


def test_exposure_identity(ref_policy):
    assert check_exposure(ref_policy, declared_exposure(ref_policy)) == []


def test_unexpected_attachment_flagged(ref_policy):
    observed = declared_exposure(ref_policy)
    patched = [
        ObservedExposure(o.service, o.attachments + ("egress-dmz",), o.published_ports)
        if o.service == "backend" else o
        for o in observed
    ]
    findings = check_exposure(ref_policy, patched)
    assert len(findings) == 1
    assert findings[0].code == UNEXPECTED_ATTACHMENT
    assert findings[0].service == "backend"


def test_unexpected_port_flagged(ref_policy):
    observed = declared_exposure(ref_policy)
    patched = [
        ObservedExposure(o.service, o.attachments,
                         o.published_ports + (PublishedPort(8080, Proto.TCP),))
        if o.service == "frontend" else o
        for o in observed
    ]
    findings = check_exposure(ref_policy, patched)
    assert [f.code for f in findings] == [UNEXPECTED_PORT]


def test_missing_service_flagged(ref_policy):
    observed = [o for o in declared_exposure(ref_policy) if o.service != "monitoring"]
    findings = check_exposure(ref_policy, observed)
    assert [f.code for f in findings] == [MISSING_SERVICE]
    assert findings[0].service == "monitoring"


@settings(max_examples=40)
@given(seed=st.integers(0, 10**9))
def test_declared_exposure_always_matches_itself(seed):
    policy = random_policy(random.Random(seed))
    assert check_exposure(policy, declared_exposure(policy)) == []
