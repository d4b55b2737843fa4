#!/usr/bin/env python3
"""Print which battery/threat tests each cataloged mutation flips to fail.

Example:
    python scripts/mutation_matrix.py
    python scripts/mutation_matrix.py --policy my-policy.json
"""

import argparse
import sys
from pathlib import Path

from egress_warden.harness import MUTATION_NAMES, Status, apply_mutation, run_battery, run_threat_suite
from egress_warden.policy import parse_policy, reference_policy


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--policy", help="policy document; defaults to the packaged reference")
    args = parser.parse_args()

    if args.policy:
        policy = parse_policy(Path(args.policy).read_text(encoding="utf-8"))
    else:
        policy = reference_policy()

    all_caught = True
    print(f"{'mutation':<22} failing tests")
    for name in MUTATION_NAMES:
        mutated_policy, backend = apply_mutation(name, policy)
        battery = run_battery(mutated_policy, backend)
        threats = run_threat_suite(mutated_policy, backend)
        failing = [t.test_id for t in battery.battery if t.status is Status.FAIL]
        failing += [s.scenario_id for s in threats.scenarios if s.status is Status.FAIL]
        all_caught &= bool(failing)
        print(f"{name:<22} {', '.join(failing) or '(none!)'}")
    return 0 if all_caught else 1


if __name__ == "__main__":
    sys.exit(main())
