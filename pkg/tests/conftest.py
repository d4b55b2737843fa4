import pytest

from egress_warden.harness import SimulatedBackend
from egress_warden.policy import reference_policy, reference_policy_path
from egress_warden.rules import compile_policy


@pytest.fixture(scope="session")
def ref_policy():
    return reference_policy()


@pytest.fixture(scope="session")
def ref_policy_path():
    return reference_policy_path()


@pytest.fixture(scope="session")
def ref_ruleset(ref_policy):
    return compile_policy(ref_policy)


@pytest.fixture()
def sim_backend(ref_policy):
    return SimulatedBackend(ref_policy)
