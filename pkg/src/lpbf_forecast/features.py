"""Sub-domain statistics of heat maps and the plate control objective."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .heatsim import GridSpec, RunRecord

__all__ = [
    "SubdomainPartition",
    "SubdomainStats",
    "gradient_field",
    "subdomain_stats",
    "stop_cost",
    "objective_J",
    "objective_from_arrays",
]


class SubdomainPartition:
    """Split the interior nodes into ``parts`` x ``parts`` blocks.

    Block ``l = a * parts + b`` holds the nodes whose interior axis-0 index
    falls in chunk ``a`` and axis-1 index in chunk ``b`` (row-major over the
    array layout). Chunks come from ``np.array_split`` so sizes differ by at
    most one node when the interior does not divide evenly.
    """

    def __init__(self, grid: GridSpec, parts: int = 4):
        self.grid = grid
        self.parts = parts
        ni, nj = grid.nx - 2, grid.ny - 2
        a = np.concatenate([np.full(len(c), k) for k, c in enumerate(np.array_split(np.arange(ni), parts))])
        b = np.concatenate([np.full(len(c), k) for k, c in enumerate(np.array_split(np.arange(nj), parts))])
        self.labels = (a[:, None] * parts + b[None, :]).astype(np.int64)
        self.counts = np.bincount(self.labels.ravel(), minlength=self.n)

    @property
    def n(self) -> int:
        return self.parts * self.parts

    def reduce(self, interior_values: np.ndarray) -> np.ndarray:
        """Sum a per-node interior quantity (trailing dims allowed) per block."""
        flat = interior_values.reshape(self.labels.size, -1)
        out = np.zeros((self.n, flat.shape[1]))
        np.add.at(out, self.labels.ravel(), flat)
        return out.reshape((self.n,) + interior_values.shape[2:])


@dataclass
class SubdomainStats:
    psi: np.ndarray  # (L, 2) summed gradient vectors
    lam: np.ndarray  # (L,) mean temperature
    grad_sq: np.ndarray  # (L,) summed squared gradient magnitudes
    window: tuple[float, float]


def gradient_field(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Gradient on the interior nodes as an ``(nx-2, ny-2, 2)`` array.

    Central differences inside; second-order one-sided differences on the ring
    next to the boundary, so the clamped boundary never enters the stencil.
    """
    values = getattr(values, "values", values)
    inner = np.asarray(values, dtype=float)[1:-1, 1:-1]
    gx, gy = np.gradient(inner, grid.hx, grid.hy, edge_order=2)
    return np.stack([gx, gy], axis=-1)


def subdomain_stats(snapshots, part: SubdomainPartition, literal_lambda=False, window=None) -> SubdomainStats:
    """Aggregate gradients and temperatures over a window of heat maps.

    Sums run over snapshots in the given order, then over nodes in label
    order. ``lam`` is the per-block mean temperature averaged over the window;
    with ``literal_lambda`` the time average is replaced by a time sum.
    """
    snaps = list(snapshots)
    if not snaps:
        raise ValueError("snapshot window is empty")
    grid = part.grid
    psi = np.zeros((part.n, 2))
    tsum = np.zeros(part.n)
    gsq = np.zeros(part.n)
    for s in snaps:
        vals = getattr(s, "values", s)
        g = gradient_field(vals, grid)
        psi += part.reduce(g)
        gsq += part.reduce(np.sum(g * g, axis=-1))
        tsum += part.reduce(np.asarray(vals, dtype=float)[1:-1, 1:-1])
    lam = tsum / part.counts
    if not literal_lambda:
        lam = lam / len(snaps)
    if window is None:
        t0 = getattr(snaps[0], "t_start", 0.0)
        t1 = getattr(snaps[-1], "t_end", 0.0)
        window = (t0, t1)
    return SubdomainStats(psi, lam, gsq, window)


def stop_cost(stats: SubdomainStats, u_g: float = 600.0, norm: str = "summed") -> float:
    """Per-stop penalty: sum over blocks of gradient energy plus squared offset from ``u_g``.

    ``norm="summed"`` squares the 2-norm of the summed gradient vector;
    ``norm="cellwise"`` uses the sum of squared node gradients instead.
    """
    if norm == "summed":
        g = np.sum(stats.psi**2, axis=1)
    elif norm == "cellwise":
        g = stats.grad_sq
    else:
        raise ValueError(f"unknown norm {norm!r}")
    return float(np.sum(g + (stats.lam - u_g) ** 2))


def _trapezoid_weights(n, h):
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    return w


def objective_from_arrays(maps: np.ndarray, times: np.ndarray, grid: GridSpec, u_g: float = 600.0) -> float:
    """Half the space-time integral of ``|grad u|^2 + (u - u_g)^2``.

    Space uses the tensor trapezoid rule on all nodes (weights sum to the plate
    area 4) with gradients from ``np.gradient`` at second order; time uses the
    trapezoid rule over the snapshot times.
    """
    maps = np.asarray(maps, dtype=float)
    times = np.asarray(times, dtype=float)
    w = np.outer(_trapezoid_weights(grid.nx, grid.hx), _trapezoid_weights(grid.ny, grid.hy))
    per_t = np.empty(len(maps))
    for k, u in enumerate(maps):
        gx, gy = np.gradient(u, grid.hx, grid.hy, edge_order=2)
        per_t[k] = np.sum(w * (gx * gx + gy * gy + (u - u_g) ** 2))
    if len(maps) < 2:
        return 0.0
    dt = np.diff(times)
    return 0.5 * float(np.sum(dt * (per_t[1:] + per_t[:-1]) / 2))


def objective_J(run: RunRecord, u_g: float = 600.0) -> float:
    if len(run) == 0:
        raise ValueError("run has no snapshots")
    return objective_from_arrays(run.stack(), run.times, run.grid, u_g)
