"""Recompute the test6 worked example with plain integer loops, no package imports.

Root of trust on (23, 7) with secrets 2 and 7, then link 0 on (47, 5)
with secrets 10 and 19.  Exits non-zero if any value differs.
"""

import sys


def power(x, e, p):
    acc = 1
    for _ in range(e):
        acc = acc * x % p
    return acc


def main():
    root_p, root_g, root_along, root_busu = 23, 7, 2, 7
    key_crt = power(power(root_g, root_busu, root_p), root_along, root_p)
    assert key_crt == power(power(root_g, root_along, root_p), root_busu, root_p)

    p, g, along_secret, busu_secret = 47, 5, 10, 19
    along_public, busu_public = power(g, along_secret, p), power(g, busu_secret, p)
    k_init = power(busu_public, along_secret, p) * power(g, key_crt, p) % p
    k_resp = power(along_public, busu_secret, p) * power(g, key_crt, p) % p

    got = {"root key": key_crt, "offer public": along_public, "reply public": busu_public, "link key (along)": k_init, "link key (busu)": k_resp}
    want = {"root key": 2, "offer public": 12, "reply public": 10, "link key (along)": 8, "link key (busu)": 8}
    for name, value in got.items():
        print(f"{name:<18} {value:>3}  {'ok' if value == want[name] else 'MISMATCH'}")
    return 0 if got == want else 1


if __name__ == "__main__":
    sys.exit(main())
