"""
A Stackelberg leader on a series-parallel network
=================================================

Instead of tolls, a leader controls part of the demand and routes it
centrally; the rest equilibrates around it.  The leader wants the overall
flow to equal a target while controlling as little demand as possible.
"""

import argparse

import numpy as np

from netinduce.core import Commodity
from netinduce.generators import make_rng, random_game, random_grid_path_flow, random_series_parallel
from netinduce.oracle import StackelbergOracle
from netinduce.sepa import decompose_graph, induce_stackelberg_sepa

parser = argparse.ArgumentParser(description="least-value Stackelberg flows on random series-parallel games")
parser.add_argument("--m", type=int, default=6)
parser.add_argument("--seed", type=int, default=1)
parser.add_argument("--alpha", type=float, default=0.8)
args = parser.parse_args()

rng = make_rng(args.seed)
graph = random_series_parallel(rng, args.m)
game = random_game(rng, graph, (Commodity("s", "t", 2.0),), 4)
target = random_grid_path_flow(rng, game, 4)
tree = decompose_graph(graph)
print("decomposition:", tree.to_text())
print("target:", target.aggregate)

oracle = StackelbergOracle(game, args.alpha)
res = induce_stackelberg_sepa(tree, target, args.alpha, oracle)
print(f"verdict {res.verdict} after {res.queries} queries; least leader value {res.min_value:.4f}"
      f" (budget {args.alpha * 2.0:.4f})")
if res.found:
    follower = oracle.verify(res.g)
    print("leader:  ", np.round(res.g.aggregate, 4))
    print("follower:", np.round(follower.aggregate, 4))
    print("sum:     ", np.round((follower + res.g).aggregate, 4))
else:
    print(res.note)
