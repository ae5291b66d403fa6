"""Young and rough integrals as grid sums, with their local remainder checks.

Young integrals are left-point sums ``sum y_i x_{i,i+1}``; rough integrals add
the compensator ``y'_i X_{i,i+1}``. Integrands act on the driver increment:
``y_i`` is an ``(m, d)`` matrix and ``y'_i`` an ``(m, d, d)`` array with
``y'[., k, l] = d y_k / d x_l``, so the compensator is ``sum_{k,l} y'[., k, l] X[l, k]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._report import Report
from .paths import GridPath, RoughLift, _write_rows
from .variation import p_variation, holder_seminorm, _resolve_interval

__all__ = [
    "ControlledPath", "young_integral", "rough_integral", "young_sums", "rough_sums",
    "check_young_loeve", "check_rough_remainder", "refinement_order",
    "YoungLoeveReport", "RoughRemainderReport", "DimensionError", "ForeignDriverError",
]


class DimensionError(ValueError):
    """Integrand and integrator shapes do not compose."""


class ForeignDriverError(ValueError):
    """A controlled path was built against a different driver."""


def _values(y) -> np.ndarray:
    return y.values if isinstance(y, GridPath) else np.asarray(y, dtype=float)


def _as_matrix_integrand(y, n_points: int, d: int) -> np.ndarray:
    """Bring integrand values to shape (n+1, m, d)."""
    v = _values(y)
    if v.shape[0] != n_points:
        raise DimensionError(f"integrand has {v.shape[0]} points, driver has {n_points}")
    if v.ndim == 1:
        if d != 1:
            raise DimensionError("scalar integrand needs a scalar driver")
        return v[:, None, None]
    if v.ndim == 2:
        if d == 1:
            return v[:, :, None]
        if v.shape[1] == d:
            return v[:, None, :]
        raise DimensionError(f"integrand of width {v.shape[1]} against a {d}-dim driver")
    if v.ndim == 3 and v.shape[2] == d:
        return v
    raise DimensionError(f"integrand shape {v.shape} does not act on a {d}-dim driver")


def _same_grid(a: GridPath, b: GridPath) -> bool:
    return a.grid == b.grid


def young_sums(y, x: GridPath) -> np.ndarray:
    """Cumulative left-point sums: entry i is the integral over ``[t_0, t_i]``."""
    if isinstance(y, GridPath) and not _same_grid(y, x):
        raise DimensionError("integrand and driver live on different grids")
    ym = _as_matrix_integrand(y, x.n_steps + 1, x.dim)
    terms = np.einsum("nmd,nd->nm", ym[:-1], x.increments)
    out = np.zeros((x.n_steps + 1, ym.shape[1]))
    np.cumsum(terms, axis=0, out=out[1:])
    return out


def young_integral(y, x: GridPath, interval=None) -> np.ndarray:
    """Left-point Riemann sum of ``y dx`` over the grid ``interval`` (index pair)."""
    i0, i1 = _resolve_interval(x.n_steps, interval)
    if isinstance(y, GridPath) and not _same_grid(y, x):
        raise DimensionError("integrand and driver live on different grids")
    ym = _as_matrix_integrand(y, x.n_steps + 1, x.dim)
    return np.einsum("nmd,nd->m", ym[i0:i1], x.increments[i0:i1])


@dataclass(frozen=True, eq=False)
class ControlledPath:
    """A path ``y`` with Gubinelli derivative ``y_prime`` relative to ``driver``.

    ``y`` values have shape (n+1, m, d) (or anything :func:`young_integral`
    accepts) and ``y_prime`` shape (n+1, m, d, d).
    """

    y: np.ndarray
    y_prime: np.ndarray
    driver: GridPath

    def __post_init__(self):
        d = self.driver.dim
        n1 = self.driver.n_steps + 1
        ym = _as_matrix_integrand(self.y, n1, d)
        yp = np.asarray(_values(self.y_prime), dtype=float)
        if yp.ndim == 1 and ym.shape[1:] == (1, 1):
            yp = yp[:, None, None, None]
        elif yp.ndim == 2 and d == 1:
            yp = yp.reshape(n1, ym.shape[1], 1, 1)
        if yp.shape != (n1, ym.shape[1], d, d):
            raise DimensionError(
                f"derivative shape {yp.shape} does not match {(n1, ym.shape[1], d, d)}")
        if not (np.all(np.isfinite(ym)) and np.all(np.isfinite(yp))):
            raise ValueError("controlled path values must be finite")
        for name, arr in (("y", ym), ("y_prime", yp)):
            arr = np.array(arr, copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def m(self) -> int:
        return self.y.shape[1]

    def remainder(self, s: int, t: int) -> np.ndarray:
        """``R_{s,t} = y_{s,t} - y'_s x_{s,t}`` as an (m, d) array."""
        dx = self.driver.increment(s, t)
        return self.y[t] - self.y[s] - np.einsum("mkl,l->mk", self.y_prime[s], dx)


def _check_driver(controlled: ControlledPath, lift: RoughLift) -> None:
    if controlled.driver is lift.base:
        return
    if (controlled.driver.grid != lift.base.grid
            or controlled.driver.fingerprint != lift.base.fingerprint):
        raise ForeignDriverError("controlled path refers to a different driver than the lift")


def _compensated_terms(controlled: ControlledPath, lift: RoughLift) -> np.ndarray:
    x = lift.base
    first = np.einsum("nmd,nd->nm", controlled.y[:-1], x.increments)
    second = np.einsum("nmkl,nlk->nm", controlled.y_prime[:-1], lift.step_areas)
    return first + second


def rough_sums(controlled: ControlledPath, lift: RoughLift) -> np.ndarray:
    """Cumulative compensated sums: entry i is the integral over ``[t_0, t_i]``."""
    _check_driver(controlled, lift)
    terms = _compensated_terms(controlled, lift)
    out = np.zeros((lift.n_steps + 1, controlled.m))
    np.cumsum(terms, axis=0, out=out[1:])
    return out


def rough_integral(controlled: ControlledPath, lift: RoughLift, interval=None) -> np.ndarray:
    """Compensated sum ``sum y_i x_{i,i+1} + y'_i X_{i,i+1}`` over ``interval``."""
    _check_driver(controlled, lift)
    i0, i1 = _resolve_interval(lift.n_steps, interval)
    return _compensated_terms(controlled, lift)[i0:i1].sum(axis=0)


def _dyadic_intervals(i0: int, i1: int, min_len: int):
    """Aligned dyadic sub-intervals of ``[i0, i1]`` with at least ``min_len`` steps."""
    n = i1 - i0
    length = n
    while length >= min_len:
        for s in range(i0, i1 - length + 1, length):
            yield s, s + length
        if length % 2:
            break
        length //= 2


@dataclass
class YoungLoeveReport(Report):
    p: float
    q: float
    n_intervals: int
    admissible_C: float
    flagged: bool
    rows: list = field(default_factory=list, repr=False)
    limit: float = 100.0

    @property
    def passed(self) -> bool:
        return not self.flagged

    def to_csv(self, path) -> None:
        _write_rows(path, ["s", "t", "lhs", "rhs", "admissible_C"], self.rows, int_cols=2)


def check_young_loeve(y, x: GridPath, p: float, q: float, interval=None,
                      refine: int = 4, limit: float = 100.0) -> YoungLoeveReport:
    """Smallest ``C >= 1`` with ``|int_s^t y dx - y_s x_{s,t}| <= C |||x|||_p |||y|||_q``.

    ``y`` and ``x`` are given on a fine grid; the inequality is tested on the
    dyadic intervals of the grid coarsened ``refine`` times, with the integral
    summed over the fine grid. ``y`` must be a path (vector or matrix valued).
    """
    if isinstance(y, GridPath) and not _same_grid(y, x):
        raise DimensionError("integrand and driver live on different grids")
    i0, i1 = _resolve_interval(x.n_steps, interval)
    ym = _as_matrix_integrand(y, x.n_steps + 1, x.dim)
    sums = young_sums(ym, x)
    ypath = GridPath(x.grid, ym.reshape(ym.shape[0], -1))
    worst, rows = 0.0, []
    for s, t in _dyadic_intervals(i0, i1, refine):
        lhs = float(np.linalg.norm(sums[t] - sums[s] - ym[s] @ x.increment(s, t)))
        rhs = p_variation(x, p, (s, t)) * p_variation(ypath, q, (s, t))
        c = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else np.inf)
        worst = max(worst, c)
        rows.append([s, t, lhs, rhs, c])
    c_adm = max(1.0, worst)
    return YoungLoeveReport(p=p, q=q, n_intervals=len(rows), admissible_C=c_adm,
                            flagged=c_adm > limit, rows=rows, limit=limit)


@dataclass
class RoughRemainderReport(Report):
    alpha: float
    lengths: np.ndarray
    max_remainder: np.ndarray
    rms_remainder: np.ndarray
    fitted_exponent: float
    admissible_C: float
    expected_min: float

    @property
    def passed(self) -> bool:
        if not np.any(self.max_remainder > 0):
            return True
        return self.fitted_exponent >= self.expected_min


def check_rough_remainder(controlled: ControlledPath, lift: RoughLift, alpha: float,
                          interval=None, min_steps: int = 2,
                          fit_fraction: float = 1 / 16) -> RoughRemainderReport:
    """Local remainder ``|int_s^t y dx - y_s x_{s,t} - y'_s X_{s,t}|`` on dyadic intervals.

    The integral is the compensated sum over the full grid. The exponent is
    the slope of log(rms remainder per level) against log(interval length)
    across the dyadic levels no longer than ``fit_fraction`` of the interval;
    the admissible constant is measured against
    ``|t-s|^{3 alpha} (|||x|||_alpha |||R|||_{2alpha} + |||y'|||_alpha |||X|||_{2alpha})``
    with the seminorms taken over the whole interval.
    """
    _check_driver(controlled, lift)
    i0, i1 = _resolve_interval(lift.n_steps, interval)
    sums = rough_sums(controlled, lift)
    x = lift.base
    h = x.grid.h
    by_len: dict[int, list] = {}
    for s, t in _dyadic_intervals(i0, i1, min_steps):
        approx = (controlled.y[s] @ x.increment(s, t)
                  + np.einsum("mkl,lk->m", controlled.y_prime[s], lift.area(s, t)))
        by_len.setdefault(t - s, []).append(float(np.linalg.norm(sums[t] - sums[s] - approx)))
    keys = sorted(by_len)
    lengths = np.array(keys, dtype=float)
    rem = np.array([max(by_len[k]) for k in keys])
    rms = np.array([np.sqrt(np.mean(np.square(by_len[k]))) for k in keys])
    # the maximum over a level grows with the number of intervals in it, so
    # the exponent is read off the root mean square; long intervals are few
    # and far from the small-scale regime and are left out of the fit
    ok = (rms > 0) & (lengths <= max(lengths[0], (i1 - i0) * fit_fraction))
    if ok.sum() >= 2:
        slope = float(np.polyfit(np.log(lengths[ok] * h), np.log(rms[ok]), 1)[0])
    else:
        slope = np.inf
    n1 = x.n_steps + 1
    sub = (i0, i1)
    xh = holder_seminorm(x, alpha, sub)
    yp = GridPath(x.grid, controlled.y_prime.reshape(n1, -1))
    yph = holder_seminorm(yp, alpha, sub)
    rh = _remainder_holder(controlled, 2 * alpha, i0, i1)
    ah = _area_holder(lift, 2 * alpha, i0, i1)
    scale = xh * rh + yph * ah
    c_adm = 0.0
    for k, r in zip(lengths, rem):
        denom = (k * h) ** (3 * alpha) * scale
        if denom > 0:
            c_adm = max(c_adm, r / denom)
    return RoughRemainderReport(alpha=alpha, lengths=lengths * h, max_remainder=rem,
                                rms_remainder=rms, fitted_exponent=slope, admissible_C=max(1.0, c_adm),
                                expected_min=3 * alpha - 0.2)


def _remainder_holder(controlled: ControlledPath, beta: float, i0: int, i1: int) -> float:
    t = controlled.driver.times
    y = controlled.y
    x = controlled.driver.values
    best = 0.0
    for j in range(i0 + 1, i1 + 1):
        s = np.arange(i0, j)
        r = y[j] - y[s] - np.einsum("smkl,sl->smk", controlled.y_prime[s], x[j] - x[s])
        nr = np.sqrt(np.sum(r * r, axis=(1, 2))) / (t[j] - t[s]) ** beta
        best = max(best, float(nr.max()))
    return best


def _area_holder(lift: RoughLift, beta: float, i0: int, i1: int) -> float:
    t = lift.base.times
    best = 0.0
    for j in range(i0 + 1, i1 + 1):
        s = np.arange(i0, j)
        a = lift.areas_ending_at(j, s)
        na = np.sqrt(np.sum(a * a, axis=(1, 2))) / (t[j] - t[s]) ** beta
        best = max(best, float(na.max()))
    return best


def refinement_order(steps, values) -> float:
    """Observed convergence order from a dyadic refinement study.

    ``values[k]`` is the quantity computed with step ``steps[k]``; the order
    is the slope of log|v_k - v_{k+1}| against log h_k.
    """
    steps = np.asarray(steps, dtype=float)
    vals = np.asarray(values, dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    diffs = np.linalg.norm(np.diff(vals, axis=0), axis=1)
    hs = steps[:-1]
    ok = diffs > 0
    if ok.sum() < 2:
        return np.inf
    return float(np.polyfit(np.log(hs[ok]), np.log(diffs[ok]), 1)[0])
