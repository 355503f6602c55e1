"""Explicit finite-difference solver for the plate heat equation.

The plate is the square [-1, 1] x [-1, 1] sampled on an ``nx`` by ``ny`` node
grid. Arrays are indexed ``values[i, j]`` with ``i`` running along x and ``j``
along y; flattening is row-major over that layout. The outer ring of nodes is
held at the ambient temperature (Dirichlet), the interior is advanced with
forward Euler and the 5-point Laplacian, and a Gaussian laser acts as the
volumetric source.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

__all__ = [
    "GridSpec",
    "MaterialParams",
    "LaserParams",
    "TemperatureField",
    "Snapshot",
    "RunRecord",
    "StabilityError",
    "gaussian_intensity",
    "max_stable_dt",
    "step",
    "traverse",
    "analytic_mode_field",
    "stop_positions",
    "simulate_tour",
]


class StabilityError(ValueError):
    """Time step exceeds the explicit scheme's stability limit."""

    def __init__(self, dt, dt_max):
        super().__init__(
            f"dt={dt:.6g} s violates the explicit stability bound; "
            f"maximum admissible dt is {dt_max:.6g} s"
        )
        self.dt = dt
        self.dt_max = dt_max


@dataclass(frozen=True)
class GridSpec:
    nx: int = 128
    ny: int = 128

    def __post_init__(self):
        if self.nx < 16 or self.ny < 16:
            raise ValueError(f"grid must be at least 16x16, got {self.nx}x{self.ny}")

    @property
    def hx(self) -> float:
        return 2.0 / (self.nx - 1)

    @property
    def hy(self) -> float:
        return 2.0 / (self.ny - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.nx)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.ny)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    def to_dict(self) -> dict:
        return {"nx": self.nx, "ny": self.ny}


@dataclass(frozen=True)
class MaterialParams:
    """Thermal properties; defaults are handbook values for aluminium."""

    kappa: float = 237.0
    c_heat: float = 897.0
    rho: float = 2700.0

    def __post_init__(self):
        for name in ("kappa", "c_heat", "rho"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v}")

    @property
    def alpha(self) -> float:
        return self.kappa / (self.c_heat * self.rho)

    @property
    def beta(self) -> float:
        return 1.0 / (self.c_heat * self.rho)

    def to_dict(self) -> dict:
        return {"kappa": self.kappa, "c_heat": self.c_heat, "rho": self.rho}


@dataclass(frozen=True)
class LaserParams:
    """Gaussian beam. ``omega`` is the waist radius in domain units.

    ``power=0`` switches the source off.
    """

    power: float = 4200.0
    omega: float = 35 * 2.0 / 127
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not (math.isfinite(self.power) and self.power >= 0):
            raise ValueError(f"laser power must be >= 0, got {self.power}")
        if not (math.isfinite(self.omega) and self.omega > 0):
            raise ValueError(f"beam waist must be > 0, got {self.omega}")
        xc, yc = self.center
        if not (-1.0 < xc < 1.0 and -1.0 < yc < 1.0):
            raise ValueError(f"laser center {self.center} is not strictly interior")

    @classmethod
    def from_cells(cls, grid: GridSpec, power=4200.0, omega_cells=35.0, center=(0.0, 0.0)):
        return cls(power=power, omega=omega_cells * grid.hx, center=tuple(center))

    @property
    def peak(self) -> float:
        return 2.0 * self.power / (math.pi * self.omega**2)

    def moved(self, center) -> "LaserParams":
        return LaserParams(self.power, self.omega, (float(center[0]), float(center[1])))


def gaussian_intensity(x, y, laser: LaserParams):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("coordinates must be finite")
    xc, yc = laser.center
    r2 = ((x - xc) / laser.omega) ** 2 + ((y - yc) / laser.omega) ** 2
    return laser.peak * np.exp(-2.0 * r2)


@dataclass
class TemperatureField:
    grid: GridSpec
    values: np.ndarray
    theta0: float = 20.0
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("temperature field contains non-finite values")

    @classmethod
    def uniform(cls, grid: GridSpec, theta0=20.0, u0=None):
        """Field at rest. ``u0`` overrides the initial interior value (e.g. 0)."""
        fill = theta0 if u0 is None else u0
        return cls(grid, np.full(grid.shape, float(fill)), theta0, 0.0)

    def copy(self) -> "TemperatureField":
        return TemperatureField(self.grid, self.values.copy(), self.theta0, self.time)

    @property
    def interior(self) -> np.ndarray:
        return self.values[1:-1, 1:-1]


def max_stable_dt(grid: GridSpec, material: MaterialParams) -> float:
    # von Neumann limit of forward Euler with the 5-point stencil; equals
    # hx*hy/(4 alpha) on square cells and is the tighter bound otherwise.
    hx2, hy2 = grid.hx**2, grid.hy**2
    return hx2 * hy2 / (2.0 * material.alpha * (hx2 + hy2))


def _check_dt(dt, grid, material):
    if not (math.isfinite(dt) and dt > 0):
        raise ValueError(f"dt must be finite and > 0, got {dt}")
    dt_max = max_stable_dt(grid, material)
    if dt > dt_max * (1 + 1e-12):
        raise StabilityError(dt, dt_max)


def _advance(u, grid, material, laser, dt, X, Y):
    """One in-place-free Euler update of the raw array ``u``."""
    a = material.alpha
    c = u[1:-1, 1:-1]
    lap = (u[2:, 1:-1] - 2.0 * c + u[:-2, 1:-1]) / grid.hx**2 + (
        u[1:-1, 2:] - 2.0 * c + u[1:-1, :-2]
    ) / grid.hy**2
    rhs = a * lap
    if laser is not None and laser.power > 0:
        rhs = rhs + material.beta * gaussian_intensity(X, Y, laser)
    out = u.copy()
    out[1:-1, 1:-1] = c + dt * rhs
    return out


def _clamp(u, theta0):
    u[0, :] = theta0
    u[-1, :] = theta0
    u[:, 0] = theta0
    u[:, -1] = theta0


def step(field: TemperatureField, laser: LaserParams | None, dt: float,
         material: MaterialParams = MaterialParams()) -> TemperatureField:
    """Advance ``field`` by ``dt`` seconds; returns a new field."""
    _check_dt(dt, field.grid, material)
    X, Y = field.grid.mesh()
    u = _advance(field.values, field.grid, material, laser, dt, X[1:-1, 1:-1], Y[1:-1, 1:-1])
    _clamp(u, field.theta0)
    return TemperatureField(field.grid, u, field.theta0, field.time + dt)


@dataclass
class Snapshot:
    """Heat map recorded at the end of one nozzle move."""

    stop: int
    values: np.ndarray
    t_start: float
    t_end: float


def traverse(field: TemperatureField, start, end, tau: float, substeps: int,
             laser: LaserParams, material: MaterialParams = MaterialParams(), stop=-1):
    """Sweep the beam along the straight segment ``start`` -> ``end``.

    Each of the ``substeps`` Euler steps of ``dt = tau / substeps`` uses the
    beam position at the midpoint of its sub-interval. Returns the new field
    and a :class:`Snapshot` of it tagged with the move's time window.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    dt = tau / substeps
    grid = field.grid
    _check_dt(dt, grid, material)
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    for p in (start, end):
        if not np.all(np.abs(p) < 1.0):
            raise ValueError(f"stop {tuple(p)} is not strictly interior")
    X, Y = grid.mesh()
    Xi, Yi = X[1:-1, 1:-1], Y[1:-1, 1:-1]
    u = field.values
    for k in range(substeps):
        s = (k + 0.5) / substeps
        beam = laser.moved(start + s * (end - start))
        u = _advance(u, grid, material, beam, dt, Xi, Yi)
        _clamp(u, field.theta0)
    t0 = field.time
    # t0 + k*dt accumulated once keeps timestamps reproducible
    t1 = t0 + substeps * dt
    out = TemperatureField(grid, u, field.theta0, t1)
    return out, Snapshot(stop, u.copy(), t0, t1)


def analytic_mode_field(grid: GridSpec, k: int, t: float, amplitude: float = 1.0,
                        material: MaterialParams = MaterialParams(), theta0: float = 20.0):
    """Separable Dirichlet eigenmode ``sin(k pi (x+1)/2) sin(k pi (y+1)/2)`` at time ``t``."""
    if k < 1:
        raise ValueError("mode index must be >= 1")
    X, Y = grid.mesh()
    decay = math.exp(-material.alpha * k * k * math.pi**2 / 2.0 * t)
    shape = np.sin(k * math.pi * (X + 1) / 2) * np.sin(k * math.pi * (Y + 1) / 2)
    values = theta0 + amplitude * decay * shape
    f = TemperatureField(grid, values, theta0, t)
    _clamp(f.values, theta0)
    return f


def stop_positions(m: int = 16) -> np.ndarray:
    """Centers of an ``m`` x ``m`` lattice of cells covering the plate.

    Stop ``k`` sits in lattice row ``k // m`` (y) and column ``k % m`` (x);
    returns an ``(m*m, 2)`` array of (x, y).
    """
    c = -1.0 + (2.0 * np.arange(m) + 1.0) / m
    rows, cols = np.divmod(np.arange(m * m), m)
    return np.column_stack([c[cols], c[rows]])


@dataclass
class RunRecord:
    grid: GridSpec
    material: MaterialParams
    laser: LaserParams
    theta0: float
    tau: float
    substeps: int
    trajectory: list
    stops: np.ndarray
    snapshots: list = dc_field(default_factory=list)

    def __len__(self):
        return len(self.snapshots)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t_end for s in self.snapshots])

    def fields(self) -> list:
        return [TemperatureField(self.grid, s.values, self.theta0, s.t_end) for s in self.snapshots]

    def stack(self) -> np.ndarray:
        return np.stack([s.values for s in self.snapshots])


def simulate_tour(order, grid: GridSpec = GridSpec(), material: MaterialParams = MaterialParams(),
                  laser: LaserParams | None = None, stops=None, tau=None, substeps=20,
                  theta0=20.0, u0=None) -> RunRecord:
    """Drive the beam through ``order`` and record one heat map per move.

    The first move is a dwell on ``order[0]``; move ``k`` ends at stop
    ``order[k]``. ``tau`` defaults to ``substeps`` steps at the largest stable dt.
    """
    if laser is None:
        laser = LaserParams.from_cells(grid)
    if stops is None:
        stops = stop_positions(16)
    stops = np.asarray(stops, dtype=float)
    if tau is None:
        tau = substeps * max_stable_dt(grid, material)
    order = [int(i) for i in order]
    field = TemperatureField.uniform(grid, theta0, u0)
    run = RunRecord(grid, material, laser, theta0, tau, substeps, order, stops)
    prev = order[0]
    for idx in order:
        field, snap = traverse(field, stops[prev], stops[idx], tau, substeps, laser, material, stop=idx)
        run.snapshots.append(snap)
        prev = idx
    return run
