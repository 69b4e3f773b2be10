"""Regenerate src/cke/data/groups.txt.

The small test groups are fixed; the bench groups are drawn from a seeded
generator so the output is reproducible (slow: minutes for 2048 bits).

    python scripts/gen_groups.py > src/cke/data/groups.txt
"""

import argparse
import sys
import time

from cke.bignum import Rng
from cke.groups import DomainParams, dump_fixture, generate_group, require_valid


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", default="cke-bench-groups-v1")
    ap.add_argument("--bits", type=int, nargs="*", default=[1024, 2048])
    args = ap.parse_args(argv)

    out = [
        "# name, hex p, hex g, decimal n. Loader re-validates every record.\n",
        dump_fixture("test5", require_valid(DomainParams.make(23, 5))),
        dump_fixture("test6", require_valid(DomainParams.make(47, 5))),
    ]
    used_g = {5}
    for bits in args.bits:
        rng = Rng(f"{args.seed}/{bits}")
        t0 = time.perf_counter()
        params = generate_group(bits, rng)
        while params.g in used_g:
            params = generate_group(bits, rng)
        used_g.add(params.g)
        print(f"bench{bits}: {time.perf_counter() - t0:.1f}s", file=sys.stderr)
        out.append(dump_fixture(f"bench{bits}", require_valid(params)))
    sys.stdout.write("\n".join(out))


if __name__ == "__main__":
    main()
