"""
When does a Braess bridge carry flow?
=====================================

With outer edges x^2 + x, cross edges a x and a constant bridge b, choosing
a = 1 + (d1 + d2)/2 and b = d1 d2 / 4 makes the bridge useful exactly for
demands strictly between d1 and d2.  This sweeps the demand and prints the
bridge flow next to the closed-form value from the equal-cost equation.
"""

import argparse
import math

import numpy as np

from netinduce.equilibrium import solve_epsilon_equilibrium
from netinduce.generators import BraessParams, braess_instance

parser = argparse.ArgumentParser(description="bridge flow of the Braess fixture across demands")
parser.add_argument("--d1", type=float, default=2.0)
parser.add_argument("--d2", type=float, default=8.0)
parser.add_argument("--points", type=int, default=13)
args = parser.parse_args()

p = BraessParams(args.d1, args.d2)
print(f"a = {p.a:g}, b = {p.b:g}")


def closed_form(d):
    # symmetric split, so both outer edges carry (d + x)/2 and both cross edges (d - x)/2;
    # the bridge path costs the same as a straight path when
    # ((d+x)/2)^2 + (d+x)/2 + b = a (d-x)/2
    A = 0.25
    B = 0.5 * d + 0.5 + 0.5 * p.a
    C = 0.25 * d * d + 0.5 * d + p.b - 0.5 * p.a * d
    x = (-B + math.sqrt(B * B - 4 * A * C)) / (2 * A)
    return max(0.0, min(d, x))


print(f"{'d':>6} {'solver':>10} {'closed form':>12}")
for d in np.linspace(max(1.0, p.d1 - 1), p.d2 + 1, args.points):
    f = solve_epsilon_equilibrium(braess_instance(args.d1, args.d2, demand=d), None, 1e-10).flow.aggregate
    print(f"{d:6.2f} {f[2]:10.5f} {closed_form(d):12.5f}")
