"""Nozzle tour optimization: penalty matrix, simulated annealing and exact oracles."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PenaltyMatrix",
    "AnnealSchedule",
    "AnnealResult",
    "build_penalty_matrix",
    "tour_cost",
    "simulated_annealing",
    "brute_force_tour",
    "raster_tour",
    "line_metric_optimum",
    "validate_tour",
]

# Stop costs are snapped to a dyadic grid 2**-_MANTISSA_BITS below the largest
# magnitude, so every difference, and every sum of up to 2**10 differences,
# is exact in float64.
_MANTISSA_BITS = 40


@dataclass
class PenaltyMatrix:
    C: np.ndarray
    costs: np.ndarray
    provenance: str = ""

    @property
    def n(self) -> int:
        return self.C.shape[0]


def _quantize(s: np.ndarray) -> np.ndarray:
    top = float(np.max(np.abs(s)))
    if top == 0.0:
        return s.copy()
    # floor at the smallest subnormal so tiny costs never divide by zero
    unit = math.ldexp(1.0, max(math.frexp(top)[1] - _MANTISSA_BITS, -1074))
    return np.round(s / unit) * unit


def build_penalty_matrix(stop_costs, provenance: str = "") -> PenaltyMatrix:
    """``C[i, j] = |s_i - s_j|`` with symmetry and the triangle inequality exact."""
    s = np.asarray(stop_costs, dtype=float).ravel()
    if s.size < 3:
        raise ValueError(f"need at least 3 stops, got {s.size}")
    if not np.all(np.isfinite(s)):
        raise ValueError("stop costs must be finite")
    if np.any(s < 0):
        raise ValueError("stop costs must be nonnegative")
    q = _quantize(s)
    C = np.abs(q[:, None] - q[None, :])
    return PenaltyMatrix(C, q, provenance)


def _matrix(C):
    return C.C if isinstance(C, PenaltyMatrix) else np.asarray(C, dtype=float)


def validate_tour(tour, n: int) -> np.ndarray:
    t = np.asarray(tour, dtype=np.int64).ravel()
    if t.size != n or not np.array_equal(np.sort(t), np.arange(n)):
        raise ValueError(f"tour is not a permutation of 0..{n - 1}")
    return t


def tour_cost(tour, C) -> float:
    """Closed-cycle cost, including the edge back to the start."""
    M = _matrix(C)
    t = validate_tour(tour, M.shape[0])
    return float(np.sum(M[t, np.roll(t, -1)]))


def line_metric_optimum(stop_costs) -> float:
    s = np.asarray(stop_costs, dtype=float)
    return 2.0 * float(s.max() - s.min())


def raster_tour(m: int = 16) -> np.ndarray:
    """Boustrophedon sweep of an ``m`` x ``m`` lattice (0-based stop indices)."""
    rows = np.arange(m * m).reshape(m, m)
    rows[1::2] = rows[1::2, ::-1]
    return rows.ravel()


@dataclass
class AnnealSchedule:
    """Geometric cooling. ``t0=None`` means the std of the off-diagonal entries;
    ``proposals=None`` means one proposal per city per sweep."""

    t0: float | None = None
    cooling: float = 0.995
    sweeps: int = 2000
    proposals: int | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.cooling < 1.0:
            raise ValueError("cooling factor must lie in (0, 1)")
        if self.t0 is not None and not self.t0 > 0:
            raise ValueError("initial temperature must be > 0")
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")

    def to_dict(self):
        return {"t0": self.t0, "cooling": self.cooling, "sweeps": self.sweeps,
                "proposals": self.proposals, "seed": self.seed}


@dataclass
class AnnealResult:
    tour: np.ndarray
    cost: float
    initial_cost: float
    trace: np.ndarray = field(repr=False, default=None)  # best cost after each sweep


def simulated_annealing(C, schedule: AnnealSchedule = AnnealSchedule(), initial=None) -> AnnealResult:
    """2-opt simulated annealing on a symmetric cost matrix.

    A proposal reverses ``tour[i..k]``; it is taken when the cost change is
    <= 0, otherwise with probability ``exp(-delta / T)``. The best tour seen
    is returned.
    """
    M = _matrix(C)
    n = M.shape[0]
    tour = list(range(n)) if initial is None else validate_tour(initial, n).tolist()
    cur = tour_cost(tour, M)
    start_cost = cur
    best, best_cost = tour[:], cur
    trace = np.empty(schedule.sweeps)
    if n < 4:
        trace[:] = cur
        return AnnealResult(np.array(best), best_cost, start_cost, trace)

    off = M[~np.eye(n, dtype=bool)]
    T = schedule.t0 if schedule.t0 is not None else float(np.std(off))
    if not T > 0:
        # flat matrix: every tour has the same cost
        trace[:] = cur
        return AnnealResult(np.array(best), best_cost, start_cost, trace)
    per_sweep = schedule.proposals or n
    rng = np.random.default_rng(schedule.seed)
    D = M.tolist()
    for sweep in range(schedule.sweeps):
        ii = rng.integers(0, n, size=per_sweep).tolist()
        kk = rng.integers(0, n - 1, size=per_sweep).tolist()
        uu = rng.random(per_sweep).tolist()
        for i, k, u in zip(ii, kk, uu):
            # draw k != i, then order the pair
            if k >= i:
                k += 1
            if i > k:
                i, k = k, i
            if i == 0 and k == n - 1:
                continue
            a, b, c, d = tour[i - 1], tour[i], tour[k], tour[(k + 1) % n]
            delta = D[a][c] + D[b][d] - D[a][b] - D[c][d]
            if delta <= 0 or u < math.exp(-delta / T):
                tour[i:k + 1] = tour[i:k + 1][::-1]
                cur += delta
                if cur < best_cost:
                    best_cost = cur
                    best = tour[:]
        trace[sweep] = best_cost
        T *= schedule.cooling
    best = np.array(best)
    return AnnealResult(best, tour_cost(best, M), start_cost, trace)


def brute_force_tour(C) -> tuple[np.ndarray, float]:
    """Exact optimum by enumeration with city 0 fixed first (n <= 10)."""
    M = _matrix(C)
    n = M.shape[0]
    if n > 10:
        raise ValueError(f"brute force refused for n={n} > 10")
    if n <= 3:
        t = np.arange(n)
        return t, tour_cost(t, M)
    D = M.tolist()
    best, best_cost = None, math.inf
    for perm in itertools.permutations(range(1, n)):
        # each cycle appears twice (both directions); keep one
        if perm[0] > perm[-1]:
            continue
        cost = D[0][perm[0]] + D[perm[-1]][0]
        for a, b in zip(perm, perm[1:]):
            cost += D[a][b]
        if cost < best_cost:
            best_cost, best = cost, perm
    t = np.array((0,) + best)
    return t, tour_cost(t, M)
