"""Polynomial edge latencies and the standardness constants U, r and K."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class PolyLatency:
    """Latency ``l(x) = a_0 + a_1 x + ... + a_r x^r`` with nonnegative coefficients."""

    coefficients: tuple[float, ...]

    def __init__(self, coefficients: Sequence[float]):
        coeffs = tuple(coefficients)
        if not coeffs:
            raise ValueError("latency needs at least one coefficient")
        if any(c < 0 for c in coeffs):
            raise ValueError(f"latency coefficients must be nonnegative, got {coeffs}")
        # trailing zeros carry no information and would inflate the degree
        while len(coeffs) > 1 and coeffs[-1] == 0:
            coeffs = coeffs[:-1]
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def linear(cls, slope: float, intercept: float = 0.0) -> "PolyLatency":
        return cls((intercept, slope))

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, x):
        return evaluate(self, x)

    def derivative(self, x):
        acc = 0.0 * np.asarray(x, dtype=float)
        for j in range(self.degree, 0, -1):
            acc = acc * x + j * self.coefficients[j]
        return acc

    def integral(self, x):
        """``∫_0^x l(t) dt`` in closed form."""
        acc = 0.0 * np.asarray(x, dtype=float)
        for j in range(self.degree, -1, -1):
            acc = acc * x + self.coefficients[j] / (j + 1)
        return acc * x

    def shifted(self, offset: float) -> "PolyLatency":
        """The latency ``x ↦ l(x + offset)``, used for Stackelberg-loaded edges."""
        r = self.degree
        out = [0.0] * (r + 1)
        for j, a in enumerate(self.coefficients):
            for i in range(j + 1):
                out[i] += a * math.comb(j, i) * offset ** (j - i)
        return PolyLatency(out)

    def __str__(self) -> str:
        terms = []
        for j, a in enumerate(self.coefficients):
            if a == 0:
                continue
            terms.append(f"{a:g}" if j == 0 else f"{a:g}x" if j == 1 else f"{a:g}x^{j}")
        return " + ".join(terms) or "0"


def evaluate(l: PolyLatency, x):
    """Horner evaluation of ``l`` at ``x >= 0`` (scalar or array)."""
    if np.any(np.asarray(x) < 0):
        raise ValueError("latency evaluated at negative flow")
    acc = 0.0 * np.asarray(x, dtype=float)
    for a in reversed(l.coefficients):
        acc = acc * x + a
    return acc if np.ndim(acc) else float(acc)


@dataclass(frozen=True)
class StandardnessParams:
    U: float
    r: int
    total_demand: float = 1.0

    @property
    def K(self) -> float:
        return k_constant(self.r, self.U, self.total_demand)


def k_constant(r: int, U: float, total_demand: float) -> float:
    """``K = max{U, 2^r, r U (Σd)^(r-1)}``, the constant behind the standard latency bounds."""
    if r < 1 or U <= 0 or total_demand <= 0:
        raise ValueError("k_constant needs r >= 1, U > 0 and positive total demand")
    return float(max(U, 2.0**r, r * U * total_demand ** (r - 1)))


def _on_grid(value: float, U: float, tol: float = 1e-9) -> bool:
    scaled = value * U
    return abs(scaled - round(scaled)) <= tol * max(1.0, abs(scaled))


def check_standard(l: PolyLatency, params: StandardnessParams) -> list[str]:
    """Return the list of standardness violations of ``l`` (empty when standard)."""
    problems = []
    if l.degree > params.r:
        problems.append(f"degree {l.degree} exceeds r={params.r}")
    for j, a in enumerate(l.coefficients):
        if not 0 <= a <= params.U:
            problems.append(f"coefficient a_{j}={a:g} outside [0, {params.U:g}]")
        if not _on_grid(a, params.U):
            problems.append(f"coefficient a_{j}={a:g} is not a multiple of 1/{params.U:g}")
    slope = l.coefficients[1] if l.degree >= 1 else 0.0
    if slope < 1.0 / params.U - 1e-12:
        problems.append(f"slope at 0 is {slope:g} < 1/U = {1.0 / params.U:g}")
    return problems


def grid_value(value: float, U: float) -> Fraction:
    """Exact rational for a float lying on the 1/U grid."""
    return Fraction(round(value * U)) / Fraction(U).limit_denominator()
