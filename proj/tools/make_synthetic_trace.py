#!/usr/bin/env python3
"""Generate the synthetic 20-user GPS trace used by the trace-driven tests.

Topology of who meets whom:
  * two overlapping friend groups, users 1-6 and 5-10; every pair inside a
    group meets on a given day with probability CLIQUE_P
  * a commuter chain 10-11-...-20; neighbours on the chain meet with
    probability CHAIN_P per day
  * any other pair bumps into each other with probability STRAY_P per day,
    too rarely to reach the default contact-graph weight threshold

Every meeting produces one fix per participant at the same time and place.
Meeting places are spread 1 km apart so unrelated users are never in range.
The first QUIET_DAYS days run at half the usual rates, so the most active
100-day window starts after them.

Output is planar (`# coords=xy`) and fully determined by SEED.
"""

import argparse
import random

SEED = 20240101
USERS = 20
DAYS = 120
QUIET_DAYS = 20
START = 1704067200  # 2024-01-01T00:00:00Z
CLIQUE_P = 0.25
CHAIN_P = 0.5
STRAY_P = 0.002

GROUP_A = list(range(1, 7))
GROUP_B = list(range(5, 11))
CHAIN = list(range(10, 21))


def pairs_of(group):
    return [(a, b) for i, a in enumerate(group) for b in group[i + 1:]]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("output")
    args = ap.parse_args()

    rng = random.Random(SEED)
    clique_pairs = sorted(set(pairs_of(GROUP_A)) | set(pairs_of(GROUP_B)))
    chain_pairs = list(zip(CHAIN, CHAIN[1:]))
    known = set(clique_pairs) | set(chain_pairs)
    stray_pairs = [p for p in pairs_of(list(range(1, USERS + 1))) if p not in known]

    rows = []
    place = 0
    for day in range(DAYS):
        scale = 0.5 if day < QUIET_DAYS else 1.0
        for pair_set, p in ((clique_pairs, CLIQUE_P), (chain_pairs, CHAIN_P), (stray_pairs, STRAY_P)):
            for a, b in pair_set:
                if rng.random() >= p * scale:
                    continue
                t = START + day * 86400 + rng.randrange(8 * 3600, 20 * 3600)
                x = 1000.0 * place
                place += 1
                y = 0.0
                # two people standing a few metres apart
                rows.append((a, t, x, y))
                rows.append((b, t, x + rng.uniform(1.0, 10.0), y + rng.uniform(1.0, 10.0)))

    rows.sort(key=lambda r: (r[1], r[0]))
    with open(args.output, "w", newline="\n") as f:
        f.write("# coords=xy\n")
        f.write("user,timestamp,x,y\n")
        for u, t, x, y in rows:
            f.write(f"{u},{t},{x:.1f},{y:.1f}\n")


if __name__ == "__main__":
    main()
