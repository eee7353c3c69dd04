"""
Every method needs at least m queries
=====================================

The adversary answers toll queries on m parallel links while deciding the
hidden ordering of the links lazily: each query fixes the rank of one more
link, and unranked links never carry flow.  Until m - 1 links are ranked some
link has never been seen with flow, so no method can be sure of the target
(one unit on every link).  Afterwards the adversary replays its answers under
one fixed ordering to show it never contradicted itself.
"""

import argparse

from netinduce.bench import run_adversary

parser = argparse.ArgumentParser(description="query counts against the adaptive adversary")
parser.add_argument("--sizes", type=int, nargs="*", default=[3, 5, 8])
parser.add_argument("--methods", nargs="*", default=["sepa", "linear1c", "ellipsoid"])
args = parser.parse_args()

print(f"{'method':10s} {'m':>3} {'queries':>8} {'replay':>7}")
for m in args.sizes:
    for method in args.methods:
        q, consistent, verdict = run_adversary(m, method)
        print(f"{method:10s} {m:3d} {q:8d} {'ok' if consistent else 'BROKEN':>7}  {verdict}")
