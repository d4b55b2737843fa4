#!/usr/bin/env python3
"""Generate a JSONL connection-event stream for monitor replay.

Nominal events follow the policy's declared service links; beacons inject
forbidden HTTPS attempts to 8.8.8.8 at the given 1-based positions.

Example:
    python scripts/generate_events.py --policy src/egress_warden/data/reference_policy.json \
        --count 500 --beacon 250 --out events.jsonl
"""

import argparse
import random
import sys
from pathlib import Path

from egress_warden.corpus import nominal_events
from egress_warden.policy import parse_policy


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--policy", required=True)
    parser.add_argument("--count", type=int, default=100)
    parser.add_argument("--beacon", type=int, action="append", default=[],
                        help="1-based stream position of an injected beacon (repeatable)")
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--out", default="-", help="output path, '-' for stdout")
    args = parser.parse_args()

    policy = parse_policy(Path(args.policy).read_text(encoding="utf-8"))
    lines = nominal_events(policy, args.count, random.Random(args.seed),
                           beacon_positions=tuple(args.beacon))
    text = "\n".join(lines) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text, encoding="utf-8")
    return 0


if __name__ == "__main__":
    sys.exit(main())
