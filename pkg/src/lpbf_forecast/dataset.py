"""Gradient-feature series and sliding windows for next-value regression."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .features import SubdomainPartition, subdomain_stats
from .heatsim import RunRecord

__all__ = [
    "FeatureSeries",
    "NormStats",
    "Windows",
    "extract_features",
    "normalize",
    "window",
    "batches",
]

log = logging.getLogger(__name__)


@dataclass
class FeatureSeries:
    """One scalar per (map, sub-domain); ``table[m, l]`` for 0-based map ``m``."""

    table: np.ndarray
    mu: int = 14

    def __post_init__(self):
        self.table = np.asarray(self.table, dtype=float)
        if self.table.ndim != 2:
            raise ValueError("feature table must be 2-D (maps x sub-domains)")

    @property
    def width(self) -> int:
        return self.table.shape[1]

    @property
    def num_maps(self) -> int:
        return self.table.shape[0]

    @property
    def nu(self) -> int:
        return self.mu * self.width

    @property
    def X(self) -> np.ndarray:
        return self.table.ravel()

    @classmethod
    def from_flat(cls, X, width=16, mu=14) -> "FeatureSeries":
        X = np.asarray(X, dtype=float)
        if X.size % width:
            raise ValueError(f"series length {X.size} is not a multiple of {width}")
        return cls(X.reshape(-1, width), mu)

    def history(self, zeta: int) -> np.ndarray:
        """Flattened ground truth of maps ``zeta-mu .. zeta-1`` (1-based ``zeta``)."""
        if zeta <= self.mu or zeta > self.num_maps + 1:
            raise ValueError(f"map {zeta} has no full history of {self.mu} maps")
        return self.table[zeta - 1 - self.mu:zeta - 1].ravel()


def extract_features(run: RunRecord, part: SubdomainPartition | None = None, mu: int = 14,
                     scalar: str = "squared") -> FeatureSeries:
    """Per-map gradient feature ``||psi||^2`` (or ``||psi||`` with ``scalar="norm"``)."""
    if part is None:
        part = SubdomainPartition(run.grid)
    if scalar not in ("squared", "norm"):
        raise ValueError(f"unknown scalar {scalar!r}")
    if len(run) < mu + 1:
        raise ValueError(f"run has {len(run)} maps; at least mu+1={mu + 1} are required")
    rows = []
    for snap in run.snapshots:
        psi = subdomain_stats([snap], part).psi
        sq = np.sum(psi * psi, axis=1)
        rows.append(sq if scalar == "squared" else np.sqrt(sq))
    return FeatureSeries(np.array(rows), mu)


@dataclass
class NormStats:
    shift: float = 0.0
    scale: float = 1.0
    scheme: str = "zscore"

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("normalization scale must be > 0")

    def apply(self, x):
        return (np.asarray(x, dtype=float) - self.shift) / self.scale

    def invert(self, z):
        return np.asarray(z, dtype=float) * self.scale + self.shift

    def to_dict(self):
        return {"shift": self.shift, "scale": self.scale, "scheme": self.scheme}


def normalize(series: FeatureSeries, scheme: str = "zscore", split: float = 0.7):
    """Fit statistics on the first ``split`` fraction of maps, apply to all."""
    n_fit = max(1, int(split * series.num_maps))
    fit = series.table[:n_fit].ravel()
    if scheme == "none":
        stats = NormStats(0.0, 1.0, "none")
    elif scheme == "zscore":
        sd = float(np.std(fit))
        if sd > 0:
            stats = NormStats(float(np.mean(fit)), sd, "zscore")
        else:
            log.warning("zero variance in fit split; falling back to shift-only normalization")
            stats = NormStats(float(np.mean(fit)), 1.0, "shift")
    else:
        raise ValueError(f"unknown normalization scheme {scheme!r}")
    return FeatureSeries(stats.apply(series.table), series.mu), stats


@dataclass
class Windows:
    """Teacher-forced samples: ``targets[s]`` is ``inputs[s]`` shifted one value ahead."""

    inputs: np.ndarray  # (S, T)
    targets: np.ndarray  # (S, T)
    eval_maps: list  # 1-based map indices that can be forecast
    n_train_maps: int

    def __len__(self):
        return len(self.inputs)


def window(series: FeatureSeries, mu: int | None = None, split: float = 0.7, stride: int = 1,
           scope: str = "all") -> Windows:
    """Slide a ``mu``-map window over the training maps.

    A sample starts at every ``stride``-th map boundary; its input covers
    ``mu`` maps and its target is the same span shifted by one value, so the
    final target is the first value of the following map. Every value touched
    lies in the first ``split`` fraction of maps. ``scope`` selects the
    forecastable maps: ``all`` gives ``mu+1 .. num_maps``, ``holdout`` only
    those after the training split.
    """
    mu = series.mu if mu is None else mu
    if not 0.0 < split <= 1.0:
        raise ValueError(f"split must lie in (0, 1], got {split}")
    if mu >= series.num_maps:
        raise ValueError(f"mu={mu} must be smaller than the number of maps ({series.num_maps})")
    w = series.width
    X = series.X
    n_train = int(split * series.num_maps)
    limit = n_train * w  # values X[:limit] are training data
    T = mu * w
    starts = [m * w for m in range(0, n_train, stride) if m * w + T + 1 <= limit]
    idx = np.asarray(starts, dtype=np.int64)[:, None] + np.arange(T)[None, :]
    inputs = X[idx] if len(starts) else np.empty((0, T))
    targets = X[idx + 1] if len(starts) else np.empty((0, T))
    first = mu + 1 if scope == "all" else max(mu + 1, n_train + 1)
    if scope not in ("all", "holdout"):
        raise ValueError(f"unknown evaluation scope {scope!r}")
    return Windows(inputs, targets, list(range(first, series.num_maps + 1)), n_train)


def batches(win: Windows, batch_size: int = 6, rng=None):
    """Yield ``(inputs, targets)`` as ``(T, b, 1)`` arrays; shuffled when ``rng`` is given."""
    order = np.arange(len(win))
    if rng is not None:
        rng.shuffle(order)
    for s in range(0, len(order), batch_size):
        sel = order[s:s + batch_size]
        yield win.inputs[sel].T[:, :, None], win.targets[sel].T[:, :, None]
