"""egress-warden: policy-driven egress isolation toolchain.

Compiles a declarative isolation policy for a containerized service stack
into a deterministic host-firewall ruleset, verifies the deployed controls
through an automated test battery and threat-scenario suite, and monitors
connection events with fail-safe kill-switch semantics.
"""

from .flows import (
    Decision,
    FlowQuery,
    Verdict,
    decide_by_policy,
    differential_sweep,
    enumerate_allowed_egress,
    evaluate_flow,
    flow_universe,
)
from .hardening import (
    HardeningFinding,
    ObservedExposure,
    TlsOffer,
    check_exposure,
    check_hardening,
    negotiate_tls,
)
from .harness import (
    LiveBackend,
    SimulatedBackend,
    apply_mutation,
    run_battery,
    run_threat_suite,
)
from .monitor import (
    Classification,
    ConnectionEvent,
    KillDirective,
    Monitor,
    MonitorMode,
    check_rule_drift,
    export_metrics,
    replay,
)
from .policy import (
    IsolationPolicy,
    TlsVersion,
    Violation,
    endpoints_for,
    is_private_ip,
    parse_policy,
    reference_policy,
    reference_policy_path,
    render_policy,
    validate_policy,
)
from .rules import (
    FirewallRule,
    FirewallRuleSet,
    RuleDiff,
    compile_policy,
    diff_rulesets,
    parse_ruleset,
    render_ruleset,
)

__version__ = "0.1.0"
