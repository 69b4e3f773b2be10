"""Run every adversary scenario over several seeds and tally the verdicts.

    python scripts/run_attacks.py --seeds 20
"""

import argparse
import sys
from collections import defaultdict

from cke.bignum import Rng
from cke.harness import SCENARIOS, attack_state_reveal_random


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--random-groups", type=int, default=100, help="extra state-reveal runs on fresh 64-bit groups")
    args = ap.parse_args(argv)

    totals = defaultdict(lambda: [0, 0, 0])  # runs, successes, failed verdicts
    for seed in range(args.seeds):
        for name, run in SCENARIOS.items():
            for label, rep in zip(("normal", "inverted"), run(Rng(f"run-attacks/{name}/{seed}"))):
                t = totals[f"{name} ({label})"]
                t[0] += rep.runs
                t[1] += rep.successes
                t[2] += rep.verdict != "pass"
    rep = attack_state_reveal_random(args.random_groups, rng=Rng("run-attacks/random"))
    totals["state-reveal (random groups)"] = [rep.runs, rep.successes, int(rep.verdict != "pass")]

    print(f"{'scenario':<34} {'runs':>7} {'successes':>10} {'bad':>4}")
    for name, (runs, wins, bad) in totals.items():
        print(f"{name:<34} {runs:>7} {wins:>10} {bad:>4}")
    return 1 if any(t[2] for t in totals.values()) else 0


if __name__ == "__main__":
    sys.exit(main())
