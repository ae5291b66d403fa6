"""Fractional Brownian motion on uniform grids and its level-2 geometric lift.

Paths are stored as ``(n_steps + 1, dim)`` arrays on a :class:`TimeGrid`.
A :class:`RoughLift` adds the area tensor ``X[l, k] = int x^l dx^k`` of the
piecewise-linear interpolation, kept dense for small grids and rebuilt on
demand from the running area otherwise.
"""

from __future__ import annotations

import csv
import functools
import hashlib
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg

__all__ = [
    "TimeGrid", "Regime", "HurstParam", "GridPath", "RoughLift",
    "FactorizationError", "sample_fbm", "lift_geometric", "fgn_autocovariance",
    "fbm_covariance", "read_path_csv",
]

#: largest grid for which the lift stores every pair densely
DENSE_AREA_LIMIT = 1024
#: grids up to this size are factorized by Cholesky
CHOLESKY_LIMIT = 1024


class FactorizationError(ValueError):
    """The fBm covariance could not be factorized for this H and grid."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_i = a + i*h`` with ``h = (b - a)/n_steps``."""

    a: float
    b: float
    n_steps: int

    def __post_init__(self):
        if isinstance(self.n_steps, bool) or int(self.n_steps) != self.n_steps:
            raise ValueError(f"n_steps must be an integer, got {self.n_steps!r}")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if not (np.isfinite(self.a) and np.isfinite(self.b)) or not self.a < self.b:
            raise ValueError(f"need finite a < b, got a={self.a}, b={self.b}")

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return self.a + self.h * np.arange(self.n_steps + 1)

    def time(self, i) -> float:
        return self.a + self.h * i

    def sub(self, i0: int, i1: int) -> "TimeGrid":
        """Grid of the index range ``[i0, i1]``."""
        return TimeGrid(self.time(i0), self.time(i1), i1 - i0)

    def coarsen(self, k: int) -> "TimeGrid":
        if k < 1 or self.n_steps % k:
            raise ValueError(f"cannot coarsen {self.n_steps} steps by {k}")
        return TimeGrid(self.a, self.b, self.n_steps // k)


class Regime(Enum):
    YOUNG = "young"
    ROUGH = "rough"


@dataclass(frozen=True)
class HurstParam:
    """Hurst index in (1/3, 1). H = 1/2 belongs to the rough regime."""

    h_value: float

    def __post_init__(self):
        h = float(self.h_value)
        if not (1.0 / 3.0 < h < 1.0):
            raise ValueError(f"Hurst index must lie in (1/3, 1), got {h}")
        object.__setattr__(self, "h_value", h)

    @property
    def regime(self) -> Regime:
        return Regime.YOUNG if self.h_value > 0.5 else Regime.ROUGH

    @classmethod
    def coerce(cls, value) -> "HurstParam":
        return value if isinstance(value, cls) else cls(value)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GridPath:
    """A path sampled at every point of a grid; ``values`` has shape (n+1, dim)."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2:
            raise ValueError(f"values must be (n+1, dim), got shape {v.shape}")
        if v.shape[0] != self.grid.n_steps + 1:
            raise ValueError(
                f"expected {self.grid.n_steps + 1} grid values, got {v.shape[0]}")
        if v.shape[1] < 1:
            raise ValueError("dim must be >= 1")
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def n_steps(self) -> int:
        return self.grid.n_steps

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @functools.cached_property
    def increments(self) -> np.ndarray:
        inc = np.diff(self.values, axis=0)
        inc.setflags(write=False)
        return inc

    @functools.cached_property
    def fingerprint(self) -> str:
        """Short content hash used to tie results to the driver that made them."""
        hsh = hashlib.sha256()
        hsh.update(np.array([self.grid.a, self.grid.b, self.grid.n_steps], float).tobytes())
        hsh.update(np.ascontiguousarray(self.values).tobytes())
        return hsh.hexdigest()[:16]

    def increment(self, i: int, j: int) -> np.ndarray:
        return self.values[j] - self.values[i]

    def restrict(self, i0: int, i1: int) -> "GridPath":
        return GridPath(self.grid.sub(i0, i1), self.values[i0:i1 + 1])

    def decimate(self, k: int) -> "GridPath":
        """Keep every k-th point, so coarse and fine levels share one realization."""
        return GridPath(self.grid.coarsen(k), self.values[::k])

    def to_csv(self, path) -> None:
        _write_rows(path, ["t"] + [f"x{c}" for c in range(self.dim)],
                    np.column_stack([self.times, self.values]))


@dataclass(frozen=True, eq=False)
class RoughLift:
    """Level-2 lift of a grid path.

    Only the per-step areas are inputs; every other area follows from the
    relation ``X_{ik} = X_{ij} + X_{jk} + x_{ij} (x) x_{jk}``.
    """

    base: GridPath
    step_areas: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.step_areas, dtype=float)
        d = self.base.dim
        if a.shape != (self.base.n_steps, d, d):
            raise ValueError(
                f"step areas must have shape {(self.base.n_steps, d, d)}, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("areas must be finite")
        object.__setattr__(self, "step_areas", _readonly(a))

    @property
    def grid(self) -> TimeGrid:
        return self.base.grid

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def n_steps(self) -> int:
        return self.base.n_steps

    @functools.cached_property
    def running_area(self) -> np.ndarray:
        """``X_{0,j}`` for every grid index j, shape (n+1, d, d)."""
        x = self.base.values
        inc = self.base.increments
        per = np.einsum("nl,nk->nlk", x[:-1] - x[0], inc) + self.step_areas
        out = np.zeros((self.n_steps + 1, self.dim, self.dim))
        np.cumsum(per, axis=0, out=out[1:])
        out.setflags(write=False)
        return out

    @property
    def is_dense(self) -> bool:
        return self.n_steps <= DENSE_AREA_LIMIT

    def dense_areas(self) -> np.ndarray:
        """All pair areas ``X[i, j]`` (zero for j <= i), shape (n+1, n+1, d, d).

        Each row is summed from its own start point, so small areas are not
        obtained as differences of large running sums.
        """
        if not self.is_dense:
            raise MemoryError(f"dense storage is limited to {DENSE_AREA_LIMIT} steps")
        return self._all_pairs

    @functools.cached_property
    def _all_pairs(self) -> np.ndarray:
        x = self.base.values
        inc = self.base.increments
        n, d = self.n_steps, self.dim
        out = np.zeros((n + 1, n + 1, d, d))
        for i in range(n):
            terms = np.einsum("nl,nk->nlk", x[i:-1] - x[i], inc[i:]) + self.step_areas[i:]
            np.cumsum(terms, axis=0, out=out[i, i + 1:])
        out.setflags(write=False)
        return out

    def area(self, i: int, j: int) -> np.ndarray:
        """Area over ``[t_i, t_j]`` for ``i <= j``."""
        if not 0 <= i <= j <= self.n_steps:
            raise IndexError(f"need 0 <= i <= j <= {self.n_steps}, got ({i}, {j})")
        if self.is_dense:
            return self.dense_areas()[i, j]
        return self.areas_ending_at(j, np.array([i]))[0]

    def areas_ending_at(self, j: int, starts) -> np.ndarray:
        """Areas ``X_{s, j}`` for each s in ``starts`` (all <= j)."""
        starts = np.asarray(starts, dtype=int)
        if self.is_dense:
            return self.dense_areas()[starts, j]
        x = self.base.values
        run = self.running_area
        out = run[j] - run[starts] - np.einsum("sl,sk->slk", x[starts] - x[0], x[j] - x[starts])
        out[starts == j] = 0.0
        return out

    def restrict(self, i0: int, i1: int) -> "RoughLift":
        return RoughLift(self.base.restrict(i0, i1), self.step_areas[i0:i1])

    @functools.cached_property
    def fingerprint(self) -> str:
        hsh = hashlib.sha256(self.base.fingerprint.encode())
        hsh.update(np.ascontiguousarray(self.step_areas).tobytes())
        return hsh.hexdigest()[:16]

    def _pair_scale(self) -> float:
        x = self.base.values
        best = 0.0
        for j in range(1, x.shape[0]):
            best = max(best, float(np.max(np.sum((x[j] - x[:j]) ** 2, axis=1))))
        return best

    def chen_residual(self) -> float:
        """Largest Chen defect over all grid triples, relative to the squared
        largest pair increment (0 for a constant path)."""
        n = self.n_steps
        x = self.base.values
        areas = self.dense_areas() if self.is_dense else None
        worst = 0.0
        for j in range(1, n):
            left = areas[:j, j] if areas is not None else self.areas_ending_at(j, np.arange(j))
            for k in range(j + 1, n + 1):
                full = areas[:j, k] if areas is not None else self.areas_ending_at(k, np.arange(j))
                right = areas[j, k] if areas is not None else self.area(j, k)
                cross = np.einsum("il,k->ilk", x[j] - x[:j], x[k] - x[j])
                res = full - left - right - cross
                worst = max(worst, float(np.max(np.abs(res))))
        scale = self._pair_scale()
        return worst / scale if scale > 0 else worst

    def symmetric_residual(self) -> float:
        """Largest defect of ``Sym(X_ij) = x_ij (x) x_ij / 2``, relative as above."""
        x = self.base.values
        worst = 0.0
        for j in range(1, self.n_steps + 1):
            a = self.areas_ending_at(j, np.arange(j))
            dx = x[j] - x[:j]
            res = 0.5 * (a + np.swapaxes(a, 1, 2)) - 0.5 * np.einsum("il,ik->ilk", dx, dx)
            worst = max(worst, float(np.max(np.abs(res))))
        scale = self._pair_scale()
        return worst / scale if scale > 0 else worst

    def to_csv(self, path, all_pairs: bool = False) -> None:
        """Write areas as rows ``(i, j, flattened tensor)``.

        By default only the per-step areas are written (they determine all
        others); ``all_pairs`` writes every pair.
        """
        d = self.dim
        header = ["i", "j"] + [f"a{l}{k}" for l in range(d) for k in range(d)]
        rows = []
        if all_pairs:
            for j in range(1, self.n_steps + 1):
                a = self.areas_ending_at(j, np.arange(j))
                for i in range(j):
                    rows.append([i, j, *a[i].ravel()])
        else:
            for i in range(self.n_steps):
                rows.append([i, i + 1, *self.step_areas[i].ravel()])
        _write_rows(path, header, rows, int_cols=2)


def _fmt(v: float) -> str:
    return repr(float(v))


def _write_rows(path, header, rows, int_cols: int = 0) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([str(int(v)) for v in row[:int_cols]]
                       + [_fmt(v) for v in row[int_cols:]])


def read_path_csv(path) -> GridPath:
    """Inverse of :meth:`GridPath.to_csv`."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t = data[:, 0]
    grid = TimeGrid(t[0], t[-1], len(t) - 1)
    return GridPath(grid, data[:, 1:])


def fgn_autocovariance(hurst: float, n: int, h: float = 1.0) -> np.ndarray:
    """Autocovariance of fBm increments over steps of length h at lags 0..n-1."""
    k = np.arange(n, dtype=float)
    two_h = 2.0 * hurst
    gam = 0.5 * (np.abs(k + 1) ** two_h - 2.0 * k ** two_h + np.abs(k - 1) ** two_h)
    return gam * h ** two_h


def fbm_covariance(hurst: float, s, t, a: float = 0.0):
    """``R(s,t) = (|s-a|^2H + |t-a|^2H - |t-s|^2H) / 2``."""
    s = np.asarray(s, float) - a
    t = np.asarray(t, float) - a
    two_h = 2.0 * hurst
    return 0.5 * (np.abs(s) ** two_h + np.abs(t) ** two_h - np.abs(t - s) ** two_h)


@functools.lru_cache(maxsize=16)
def _cholesky_factor(hurst: float, n: int) -> np.ndarray:
    # unit-step increments; the step scaling is applied by the caller
    gam = fgn_autocovariance(hurst, n)
    cov = scipy.linalg.toeplitz(gam)
    try:
        low = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(
            f"fBm increment covariance is not positive definite (H={hurst}, n={n})") from exc
    low.setflags(write=False)
    return low


@functools.lru_cache(maxsize=16)
def _circulant_sqrt_eigs(hurst: float, n: int):
    gam = fgn_autocovariance(hurst, n + 1)
    row = np.concatenate([gam[:n + 1], gam[n - 1:0:-1]])
    eig = np.fft.fft(row).real
    if eig.min() < -1e-10 * eig.max():
        return None
    out = np.sqrt(np.clip(eig, 0.0, None) / row.size)
    out.setflags(write=False)
    return out


def _fgn_unit(hurst: float, n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    if n > CHOLESKY_LIMIT:
        lam = _circulant_sqrt_eigs(hurst, n)
        if lam is not None:
            m = lam.size
            out = np.empty((n, dim))
            for c in range(dim):
                z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
                out[:, c] = np.fft.fft(lam * z)[:n].real
            return out
    low = _cholesky_factor(hurst, n)
    return low @ rng.standard_normal((n, dim))


def sample_fbm(hurst, grid: TimeGrid, dim: int, seed: int) -> GridPath:
    """Sample a ``dim``-dimensional fBm on ``grid`` with independent components.

    The path starts at 0. Grids above 1024 steps use circulant embedding and
    fall back to Cholesky if the embedding is not nonnegative definite.
    """
    hp = HurstParam.coerce(hurst)
    if isinstance(dim, bool) or int(dim) != dim or dim < 1:
        raise ValueError(f"dim must be a positive integer, got {dim!r}")
    if isinstance(seed, bool) or int(seed) != seed or not 0 <= int(seed) < 2 ** 64:
        raise ValueError(f"seed must be an integer in [0, 2**64), got {seed!r}")
    rng = np.random.default_rng(int(seed))
    inc = _fgn_unit(hp.h_value, grid.n_steps, int(dim), rng) * grid.h ** hp.h_value
    values = np.zeros((grid.n_steps + 1, int(dim)))
    np.cumsum(inc, axis=0, out=values[1:])
    return GridPath(grid, values)


def lift_geometric(path: GridPath) -> RoughLift:
    """Lift of the piecewise-linear interpolation: each step carries ``dx (x) dx / 2``."""
    inc = path.increments
    return RoughLift(path, 0.5 * np.einsum("nl,nk->nlk", inc, inc))
