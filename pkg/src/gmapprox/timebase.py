"""Uniform time grids, sampled curves and reproducible random streams.

Everything downstream shares three conventions fixed here: curves hold node
values on a uniform grid, integrals between nodes are trapezoidal, and every
source of randomness is a counter-derived stream that is a pure function of
``(master_seed, path_index)`` so ensembles are reproducible under any
execution schedule.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

__all__ = [
    "TimeGrid",
    "Curve",
    "PathEnsemble",
    "trapezoid",
    "exp_weighted_running_integral",
    "derive_stream",
    "split_stream",
    "child_seed",
    "fill_rows",
    "stable_exp_diff",
]

_CSV_FMT = "%.17g"  # full double precision round-trip


@dataclass(frozen=True)
class TimeGrid:
    """Uniform discretization of [0, T] with nodes t_k = k*dt, k = 0..n_steps."""

    horizon_T: float
    dt: float
    n_steps: int

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.horizon_T <= 0:
            raise ValueError(f"horizon_T must be positive, got {self.horizon_T}")
        if abs(self.n_steps * self.dt - self.horizon_T) > 1e-9 * self.horizon_T:
            raise ValueError(
                f"inconsistent grid: n_steps*dt = {self.n_steps * self.dt} "
                f"!= horizon_T = {self.horizon_T}"
            )

    @classmethod
    def from_step(cls, horizon_T: float, dt: float) -> "TimeGrid":
        """Grid with the given step; T must be an integer multiple of dt."""
        n = int(round(horizon_T / dt))
        return cls(horizon_T=n * dt, dt=dt, n_steps=n)

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    def times(self) -> np.ndarray:
        return np.arange(self.n_nodes) * self.dt


@dataclass(frozen=True)
class Curve:
    """Real-valued function sampled at the nodes of a TimeGrid."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.shape != (self.grid.n_nodes,):
            raise ValueError(
                f"curve has {v.shape} values for a grid with {self.grid.n_nodes} nodes"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("curve values must be finite")

    @classmethod
    def from_function(cls, grid: TimeGrid, fn) -> "Curve":
        return cls(grid, np.asarray(fn(grid.times()), dtype=float))

    def to_csv(self, path) -> None:
        t = self.grid.times()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "value"])
            for tk, vk in zip(t, self.values):
                w.writerow([_CSV_FMT % tk, _CSV_FMT % vk])

    @classmethod
    def from_csv(cls, path) -> "Curve":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if rows[0] != ["t", "value"]:
            raise ValueError(f"unexpected curve CSV header: {rows[0]}")
        t = np.array([float(r[0]) for r in rows[1:]])
        v = np.array([float(r[1]) for r in rows[1:]])
        if len(t) < 2:
            raise ValueError("curve CSV needs at least two nodes")
        dt = t[1] - t[0]
        grid = TimeGrid(horizon_T=t[-1], dt=dt, n_steps=len(t) - 1)
        return cls(grid, v)


@dataclass(frozen=True)
class PathEnsemble:
    """Matrix of sample paths, one row per path, on a shared grid.

    Regenerating with the same ``master_seed`` reproduces the values
    bit-for-bit because row i is drawn from ``derive_stream(master_seed, i)``
    regardless of the order in which rows are filled.
    """

    grid: TimeGrid
    n_paths: int
    values: np.ndarray
    master_seed: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if v.shape != (self.n_paths, self.grid.n_nodes):
            raise ValueError(
                f"ensemble shape {v.shape} does not match "
                f"({self.n_paths}, {self.grid.n_nodes})"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("ensemble values must be finite")

    def to_csv(self, path) -> None:
        t = self.grid.times()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"path_{i}" for i in range(self.n_paths)])
            for k, tk in enumerate(t):
                w.writerow([_CSV_FMT % tk] + [_CSV_FMT % v for v in self.values[:, k]])


def trapezoid(curve: Curve) -> float:
    """Composite trapezoidal approximation of the integral of the curve over [0, T]."""
    return trapezoid_values(curve.values, curve.grid.dt)


def trapezoid_values(values: np.ndarray, dt: float) -> float | np.ndarray:
    """Trapezoid rule along the last axis of a node-value array."""
    v = np.asarray(values, dtype=float)
    return dt * (v.sum(axis=-1) - 0.5 * (v[..., 0] + v[..., -1]))


def exp_weighted_running_integral(g: Curve, theta: float) -> Curve:
    """Running integral H(t) = e^{-theta t} * int_0^t g(s) e^{theta s} ds.

    Computed by the per-step exact recursion

        H(t_{k+1}) = e^{-theta dt} H(t_k)
                     + trapezoid of g(s) e^{theta (s - t_{k+1})} over [t_k, t_{k+1}],

    so the exponential decay carries no discretization error and the only
    approximation is the per-step trapezoid of g.
    """
    if theta <= 0:
        raise ValueError(f"theta must be positive, got {theta}")
    return Curve(g.grid, exp_weighted_values(g.values, g.grid.dt, theta))


def exp_weighted_values(values: np.ndarray, dt: float, theta: float) -> np.ndarray:
    """Array form of :func:`exp_weighted_running_integral` along the last axis."""
    if theta <= 0:
        raise ValueError(f"theta must be positive, got {theta}")
    g = np.asarray(values, dtype=float)
    a = np.exp(-theta * dt)
    x = np.zeros_like(g)
    x[..., 1:] = 0.5 * dt * (a * g[..., :-1] + g[..., 1:])
    # linear recurrence H_k = a H_{k-1} + x_k with H_0 = 0
    return lfilter([1.0], [1.0, -a], x, axis=-1)


def derive_stream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent, reproducible random stream for a given (seed, index...) key.

    Counter-based derivation: the stream is a pure function of its arguments,
    so ensembles assembled in any order (or on any number of threads) are
    identical. Streams with distinct keys are statistically independent.
    """
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def split_stream(stream: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Derive n independent sub-streams without consuming draws from the parent."""
    return stream.spawn(n)


def child_seed(master_seed: int, *key: int) -> int:
    """Deterministic 64-bit sub-seed, used to key derived ensembles."""
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def fill_rows(build_row, n_paths: int, n_nodes: int, threads: int = 1) -> np.ndarray:
    """Assemble a (n_paths, n_nodes) matrix with row i = build_row(i).

    ``build_row`` must be a pure function of the row index (each row draws
    from its own derived stream), so the result is identical for any number
    of threads.
    """
    out = np.empty((n_paths, n_nodes), dtype=float)
    if threads is None:
        threads = 1
    if threads <= 1 or n_paths < 2 * threads:
        for i in range(n_paths):
            out[i] = build_row(i)
        return out

    bounds = np.linspace(0, n_paths, threads + 1).astype(int)

    def run_block(lo_hi):
        lo, hi = lo_hi
        for i in range(lo, hi):
            out[i] = build_row(i)

    with ThreadPoolExecutor(max_workers=threads) as ex:
        list(ex.map(run_block, zip(bounds[:-1], bounds[1:])))
    return out


def stable_exp_diff(a: float, b: float, t: np.ndarray | float):
    """(e^{-a t} - e^{-b t}) / (b - a), stable for b close to a.

    Written as e^{-a t} * (1 - e^{-(b-a) t})/(b-a) with expm1, whose relative
    error stays small uniformly in |b - a|; the b == a limit is t e^{-a t}.
    """
    t = np.asarray(t, dtype=float)
    delta = b - a
    if delta == 0.0:
        return t * np.exp(-a * t)
    return np.exp(-a * t) * (-np.expm1(-delta * t)) / delta
