"""Discrete p-variation and Hölder seminorms, control checks, greedy partitions.

Every seminorm here is exact over partitions made of grid points. The
p-variation uses the recursion ``V[j] = max_{i<j} V[i] + |x_j - x_i|^p``,
which is the best grid partition of ``[t_0, t_j]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import _vardp
from ._report import Report
from .paths import GridPath, RoughLift, _write_rows

__all__ = [
    "PVar", "Holder", "GreedyPartition", "p_variation", "p_variation_power",
    "pvar_power_table", "holder_seminorm", "check_control_superadditivity",
    "check_lemma21", "greedy_times", "greedy_count", "holder_count_bound",
    "SuperadditivityReport", "PartitionBoundReport",
]

PathLike = Union[GridPath, RoughLift]


@dataclass(frozen=True)
class PVar:
    """Partition functional: p-variation seminorm."""

    p: float

    def __post_init__(self):
        if not self.p >= 1.0:
            raise ValueError(f"p must be >= 1, got {self.p}")


@dataclass(frozen=True)
class Holder:
    """Partition functional: ``(t - s)^alpha`` plus the alpha-Hölder seminorm."""

    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")


def _resolve_interval(n_steps: int, interval) -> tuple[int, int]:
    if interval is None:
        return 0, n_steps
    i0, i1 = (int(interval[0]), int(interval[1]))
    if not 0 <= i0 <= i1 <= n_steps:
        raise ValueError(f"interval {interval} outside grid [0, {n_steps}]")
    return i0, i1


def _coords(path: GridPath) -> np.ndarray:
    return np.ascontiguousarray(path.values)


def p_variation_power(path: PathLike, p: float, interval=None) -> float:
    """``|||x|||_p^p`` on the interval. For a lift this adds the area term
    ``|||X|||_{p/2}^{p/2}`` so that the result is the p-th power of the
    rough-path variation norm."""
    if not p >= 1.0:
        raise ValueError(f"p must be >= 1, got {p}")
    i0, i1 = _resolve_interval(path.n_steps, interval)
    if isinstance(path, RoughLift):
        x = _coords(path.base)
        base = _vardp.pvar_dp(x, i0, i1, float(p))[-1]
        area = _vardp.area_pvar_dp(x, np.ascontiguousarray(path.running_area), i0, i1, p / 2.0)[-1]
        return float(base + area)
    return float(_vardp.pvar_dp(_coords(path), i0, i1, float(p))[-1])


def p_variation(path: PathLike, p: float, interval=None) -> float:
    """p-variation seminorm over grid partitions of ``interval`` (index pair).

    A :class:`RoughLift` input gives ``(|||x|||_p^p + |||X|||_{p/2}^{p/2})^{1/p}``.
    """
    return p_variation_power(path, p, interval) ** (1.0 / p)


def pvar_power_table(path: GridPath, p: float) -> np.ndarray:
    """``P[s, t] = |||x|||_p^p`` over ``[t_s, t_t]`` for every grid pair (s <= t)."""
    n = path.n_steps
    out = np.zeros((n + 1, n + 1))
    for s in range(n):
        out[s, s:] = _vardp.pvar_dp(_coords(path), s, n, float(p))
    return out


def holder_seminorm(path: GridPath, alpha: float, interval=None) -> float:
    """``max |x_t - x_s| / (t - s)^alpha`` over grid pairs in the interval."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    i0, i1 = _resolve_interval(path.n_steps, interval)
    return float(_vardp.holder_max(_coords(path), path.times, i0, i1, float(alpha)))


@dataclass
class SuperadditivityReport(Report):
    p: float
    n_points: int
    max_violation: float
    worst_triple: tuple
    tol: float = 1e-12

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tol


def check_control_superadditivity(path: GridPath, p: float, tol: float = 1e-12) -> SuperadditivityReport:
    """Check ``w(s,u) + w(u,t) <= w(s,t)`` for ``w = |||x|||_p^p`` on all grid triples.

    The violation is measured relative to ``max(1, w(s,t))``. Cost is cubic in
    the number of points, intended for small paths.
    """
    w = pvar_power_table(path, p)
    n = path.n_steps
    worst, where = 0.0, ()
    for s in range(n - 1):
        for t in range(s + 2, n + 1):
            u = np.arange(s + 1, t)
            gap = (w[s, u] + w[u, t] - w[s, t]) / max(1.0, w[s, t])
            k = int(np.argmax(gap))
            if gap[k] > worst:
                worst, where = float(gap[k]), (s, int(u[k]), t)
    return SuperadditivityReport(p=p, n_points=n + 1, max_violation=worst,
                                 worst_triple=where, tol=tol)


@dataclass
class PartitionBoundReport(Report):
    p: float
    n_blocks: int
    block_sum: float
    total: float
    upper: float
    tol: float = 1e-12

    @property
    def lower_holds(self) -> bool:
        return self.block_sum <= self.total * (1 + self.tol) + self.tol

    @property
    def upper_holds(self) -> bool:
        return self.total <= self.upper * (1 + self.tol) + self.tol

    @property
    def passed(self) -> bool:
        return self.lower_holds and self.upper_holds


def check_lemma21(path: GridPath, p: float, partition) -> PartitionBoundReport:
    """Compare the whole-interval ``|||x|||^p`` with the sum over the blocks of a
    partition: ``sum <= total <= N^(p-1) * sum``.

    ``partition`` is an increasing sequence of grid indices including both ends.
    """
    idx = [int(i) for i in partition]
    if len(idx) < 2 or any(b <= a for a, b in zip(idx, idx[1:])):
        raise ValueError("partition must be strictly increasing with at least two points")
    blocks = [p_variation_power(path, p, (a, b)) for a, b in zip(idx, idx[1:])]
    n = len(blocks)
    total = p_variation_power(path, p, (idx[0], idx[-1]))
    s = float(sum(blocks))
    return PartitionBoundReport(p=p, n_blocks=n, block_sum=s, total=total,
                                upper=n ** (p - 1) * s)


@dataclass
class GreedyPartition:
    """Greedy partition of the grid into blocks whose functional stays below gamma."""

    indices: np.ndarray
    times: np.ndarray
    gamma: float
    flavor: Union[PVar, Holder]
    block_values: np.ndarray
    flagged: list = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.indices) - 1

    def count_bound(self, total_norm: float) -> float:
        """``1 + gamma^-p * total_norm^p`` for the p-variation flavor."""
        if not isinstance(self.flavor, PVar):
            raise TypeError("the count bound is stated for the p-variation flavor")
        p = self.flavor.p
        return 1.0 + (total_norm / self.gamma) ** p

    def to_csv(self, path) -> None:
        rows = [[i, t, v] for i, t, v in
                zip(self.indices, self.times, np.append(self.block_values, np.nan))]
        _write_rows(path, ["index", "tau", "interval_seminorm"], rows, int_cols=1)


def greedy_times(path: PathLike, gamma: float, flavor: Union[PVar, Holder]) -> GreedyPartition:
    """Greedy stopping times on the grid.

    From each ``tau_i`` the next time is the last grid point at which the
    interval functional is still strictly below ``gamma``. If a single step
    already reaches ``gamma`` that step is taken anyway and recorded in
    ``flagged``.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if isinstance(flavor, Holder):
        if not gamma < 1:
            raise ValueError(f"the Hölder flavor needs gamma in (0, 1), got {gamma}")
        if isinstance(path, RoughLift):
            path = path.base
    elif not isinstance(flavor, PVar):
        raise TypeError(f"unknown flavor {flavor!r}")
    if isinstance(path, RoughLift):
        x, run, use_area = _coords(path.base), np.ascontiguousarray(path.running_area), True
        grid = path.grid
    else:
        x, run, use_area = _coords(path), np.zeros((1, 1, 1)), False
        grid = path.grid
    holder = isinstance(flavor, Holder)
    expo = flavor.alpha if holder else flavor.p
    idx, vals, flagged = _vardp.greedy_scan(x, run, grid.times, use_area, holder,
                                            float(expo), float(gamma))
    return GreedyPartition(indices=idx, times=grid.time(idx), gamma=float(gamma),
                           flavor=flavor, block_values=vals,
                           flagged=[int(i) for i in flagged])


def greedy_count(path: PathLike, gamma: float, p: float) -> int:
    """Number of greedy p-variation blocks at threshold gamma."""
    return greedy_times(path, gamma, PVar(p)).count


def holder_count_bound(path: GridPath, gamma: float, alpha: float, alpha_prime: float) -> float:
    """Upper bound on the Hölder-flavor greedy count from an exponent ``alpha' > alpha``.

    On a block that was stopped, the functional reaches gamma on the block
    extended by one step, an interval J inside ``[tau_i, tau_{i+2}]``. With
    ``S`` the ``alpha'`` seminorm, ``gamma <= |J|^alpha + S |J|^(alpha'-alpha)``,
    so ``|J| >= l = min(1, (gamma / (1 + S))^(1/beta))``, ``beta = min(alpha, alpha'-alpha)``.
    Even and odd blocks give disjoint families, hence ``N <= 1 + 2 (b - a) / l``.
    """
    if not 0 < alpha < alpha_prime < 1:
        raise ValueError("need 0 < alpha < alpha' < 1")
    semi = holder_seminorm(path, alpha_prime)
    beta = min(alpha, alpha_prime - alpha)
    ell = min(1.0, (gamma / (1.0 + semi)) ** (1.0 / beta))
    return 1.0 + 2.0 * (path.grid.b - path.grid.a) / ell
