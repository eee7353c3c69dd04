"""
Three ways to price Pigou's network
===================================

Two parallel links from s to t with delays x and x + 1 and one unit of demand.
Left alone, everyone takes the first link.  We want an even split and only
see equilibrium flows, never the delay functions.  Each method below asks the
hidden game for equilibria under tolls of its choosing and stops once the
target is reached.
"""

import argparse

import numpy as np

from netinduce.core import Flow
from netinduce.ellipsoid import induce_tolls_linear
from netinduce.generators import pigou
from netinduce.linear1c import induce_tolls_linear1c
from netinduce.oracle import TollOracle
from netinduce.sepa import decompose_graph, default_uprime, induce_tolls_sepa

parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
parser.add_argument("--split", type=float, default=0.5, help="share of demand wanted on the first link")
args = parser.parse_args()

game = pigou()
target = Flow.single([args.split, 1 - args.split])
U = 4

# Without tolls the first link is never slower, so it takes everything.
free = TollOracle(game, eps=0.0).query([0, 0])
print("no tolls:", free.aggregate)

# Ellipsoid search over (delays, tolls): cuts come from the target and from responses.
o = TollOracle(game, eps=1e-13, U=U)
res = induce_tolls_linear(game.network, target, o, U)
print(f"ellipsoid  tolls {np.round(res.tolls, 6)}  queries {res.queries}")

# Series-parallel search: binary search on one label per parallel join, sign answers only.
o = TollOracle(game, eps=1e-14, U=U)
tree = decompose_graph(game.graph)
sres = induce_tolls_sepa(tree, target, o, default_uprime(U, game.m, U, 1.0))
print(f"sepa       tolls {sres.float_tolls()}  queries {sres.queries}")

# Linear response map: grow the support, probe each edge once, solve.
o = TollOracle(game, eps=1e-14, research=True, U=U)
lres = induce_tolls_linear1c(o, target, U=U)
print(f"linear1c   tolls {np.round(lres.tolls, 6)}  queries {lres.queries}")

# All three differ in level but agree on the difference, which is what the split depends on.
check = TollOracle(game, eps=0.0)
for name, t in (("ellipsoid", res.tolls), ("sepa", sres.float_tolls()), ("linear1c", lres.tolls)):
    print(f"{name:10s} induced {check.verify(t).aggregate}  t1 - t2 = {t[0] - t[1]:.6f}")
