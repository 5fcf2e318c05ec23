"""Discretized oracle for the variance-minimizing capped density.

Minimize ``sum t_j^2 x_j`` over cell masses ``0 <= x_j <= h B / t_j`` with
``sum x_j = q`` and ``sum t_j x_j = A``. By the Lagrangian (tilt)
characterization the optimum fills the cap exactly where
``t^2 - l2 t - l1 < 0``, which is an interval of cells, with fractional
fill at its two end cells. Writing the filled set as ``[alpha, beta]`` in
continuous cell coordinates, the mean constraint fixes ``beta - alpha``
(each fully filled cell carries mean ``h B``) and the mass is decreasing
in ``alpha``, so a single bisection solves both constraints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..numerics import DomainError


@dataclass(frozen=True)
class BathtubOracleResult:
    feasible: bool
    variance: float
    second_moment: float
    alpha: float
    beta: float
    grid_max: float
    grid_resolution: int
    note: str = ""

    @property
    def support(self) -> tuple[float, float]:
        h = self.grid_max / self.grid_resolution
        return self.alpha * h, self.beta * h


def _fill(alpha: float, beta: float, n: int) -> np.ndarray:
    # overlap of cell j (center j, width 1) with [alpha, beta], j = 1..n
    left = np.arange(1, n + 1) - 0.5
    return np.clip(np.minimum(left + 1.0, beta) - np.maximum(left, alpha), 0.0, 1.0)


def bathtub_lp_oracle(B: float, q: float, A: float, grid_resolution: int = 10_000,
                      grid_max: float | None = None) -> BathtubOracleResult:
    """Minimal variance of a law with an atom ``1 - q`` at zero and density
    ``<= B/t`` carrying mass ``q`` and mean ``A`` on a grid of ``(0, grid_max]``.

    ``grid_max`` defaults to ``2 (A/B + A/q)``, which always contains the
    support of the continuous minimizer.
    """
    if not (B > 0 and A > 0 and 0 < q <= 1):
        raise DomainError("need B > 0, A > 0 and q in (0, 1]")
    n = int(grid_resolution)
    if n < 10:
        raise DomainError("grid_resolution must be at least 10")
    T = float(grid_max) if grid_max is not None else 2.0 * (A / B + A / q)
    h = T / n
    t = h * np.arange(1, n + 1)
    cap = h * B / t
    width = A / (B * h)

    def mass(alpha: float) -> float:
        return float(np.dot(_fill(alpha, alpha + width, n), cap))

    lo, hi = 0.5, n + 0.5 - width
    if hi < lo:
        return BathtubOracleResult(False, math.nan, math.nan, math.nan, math.nan, T, n,
                                   "infeasible: mean too large for the grid")
    if mass(lo) < q:
        return BathtubOracleResult(False, math.nan, math.nan, math.nan, math.nan, T, n,
                                   "infeasible: cap cannot carry mass q with this mean")
    if mass(hi) > q:
        return BathtubOracleResult(False, math.nan, math.nan, math.nan, math.nan, T, n,
                                   "infeasible: grid too short")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mass(mid) > q:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    alpha = 0.5 * (lo + hi)
    x = _fill(alpha, alpha + width, n) * cap
    second = float(np.dot(t * t, x))
    return BathtubOracleResult(True, second - A * A, second, alpha, alpha + width, T, n)
