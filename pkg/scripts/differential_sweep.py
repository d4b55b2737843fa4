#!/usr/bin/env python3
"""Sweep randomized policies through both flow oracles and report agreement.

Example:
    python scripts/differential_sweep.py --policies 2000 --seed 7
"""

import argparse
import sys
import time

from egress_warden.corpus import policy_corpus
from egress_warden.flows import differential_sweep, enumerate_allowed_egress


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--policies", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=20260810)
    parser.add_argument("--show-failures", type=int, default=5,
                        help="how many disagreements to print in full")
    args = parser.parse_args()

    started = time.time()
    flows = disagreements = public_allows = egress_mismatches = 0
    shown = 0
    for index, policy in enumerate(policy_corpus(args.policies, seed=args.seed)):
        result = differential_sweep(policy)
        flows += result.flows
        disagreements += len(result.disagreements)
        public_allows += len(result.public_allows)
        pins = {(a.from_service, a.target_ip, a.target_port, a.proto) for a in policy.airlocks}
        if enumerate_allowed_egress(policy) != pins:
            egress_mismatches += 1
        for flow, by_ruleset, by_policy in result.disagreements[: args.show_failures - shown]:
            print(f"policy {index}: {flow} ruleset={by_ruleset.value} policy={by_policy.value}")
            shown += 1
    elapsed = time.time() - started

    print(f"policies          {args.policies}")
    print(f"flows             {flows}")
    print(f"disagreements     {disagreements}")
    print(f"public allows     {public_allows}")
    print(f"egress mismatches {egress_mismatches}")
    print(f"elapsed           {elapsed:.2f}s ({flows / elapsed:,.0f} flows/s)")
    return 0 if disagreements == public_allows == egress_mismatches == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
