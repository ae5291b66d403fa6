"""Drift specifications and probe-based checks of the structural assumptions.

A drift ``f`` is dissipative with constants ``(D1, D2)`` when
``<y, f(y)> <= |y| (D1 - D2 |y|)``, and has perpendicular growth ``C_fg``
when ``|f(y) - (<y, f(y)>/|y|^2) y| <= C_fg (|y| + 1)`` for ``y != 0``. The
diffusion condition asks ``sigma`` and its first three derivatives to be
bounded by ``C_sigma``. All of these are checked on finite probe sets, so a
PASS certifies the probes only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from ._report import Report
from .flows import VectorFieldSpec

__all__ = [
    "DriftSpec", "SyncBoundParams", "check_a1", "check_a2", "averaged_drift",
    "estimate_sup_constant", "probe_points", "double_well", "linear_drift",
    "A1Report", "A2Report", "DOUBLE_WELL_D1",
]

#: smallest admissible D1 for x - x^3 with D2 = 1: max_r (2r - r^3) = (4/3) sqrt(2/3)
DOUBLE_WELL_D1 = 4.0 / 3.0 * np.sqrt(2.0 / 3.0)


@dataclass(frozen=True, eq=False)
class DriftSpec:
    """Drift ``f: R^m -> R^m`` with its dissipativity and growth constants."""

    m: int
    f: Callable
    d1: float
    d2: float
    c_fg: float
    r_probe: float = 10.0
    name: str = "custom"

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"dimension must be positive, got {self.m}")
        if not self.d1 >= 0:
            raise ValueError(f"D1 must be >= 0, got {self.d1}")
        if not self.d2 > 0:
            raise ValueError(f"D2 must be > 0, got {self.d2}")
        if not self.c_fg >= 0:
            raise ValueError(f"C_fg must be >= 0, got {self.c_fg}")
        if not self.r_probe > 0:
            raise ValueError(f"probe radius must be > 0, got {self.r_probe}")

    def __call__(self, y) -> np.ndarray:
        return np.asarray(self.f(np.asarray(y, dtype=float)), dtype=float).reshape(self.m)


@dataclass(frozen=True)
class SyncBoundParams:
    """Constants of the absorbing and decay bounds for one run."""

    lam: float
    delta_lambda: float
    cbar_lambda: float
    c_fg_sup: float
    radius: float

    def __post_init__(self):
        if not 0 < self.lam < 1:
            raise ValueError(f"lambda must lie in (0, 1), got {self.lam}")
        if not self.delta_lambda > 0:
            raise ValueError(f"delta must be > 0, got {self.delta_lambda}")
        if not self.cbar_lambda > 0:
            raise ValueError(f"Cbar must be > 0, got {self.cbar_lambda}")
        if not self.c_fg_sup >= 0:
            raise ValueError(f"C(f,g) must be >= 0, got {self.c_fg_sup}")
        if not self.radius > 0:
            raise ValueError(f"radius must be > 0, got {self.radius}")


def probe_points(m: int, radius: float, n_probes: int, seed: int) -> np.ndarray:
    """Uniform points in the ball plus 0, the unit axis vectors (both signs),
    the axis points on the boundary and random boundary points."""
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_probes, m))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    inner = dirs * (radius * rng.random(n_probes) ** (1.0 / m))[:, None]
    eye = np.eye(m)
    axes = np.concatenate([eye, -eye])
    nb = max(1, n_probes // 10)
    bd = rng.standard_normal((nb, m))
    bd *= radius / np.linalg.norm(bd, axis=1, keepdims=True)
    return np.concatenate([np.zeros((1, m)), axes, radius * axes, bd, inner])


@dataclass
class A1Report(Report):
    n_probes: int
    dissipative_margin: float
    perpendicular_margin: float
    worst_dissipative_point: np.ndarray
    tol: float = 1e-12

    @property
    def passed(self) -> bool:
        return self.dissipative_margin >= -self.tol and self.perpendicular_margin >= -self.tol


def check_a1(drift: DriftSpec, n_probes: int = 2000, seed: int = 0) -> A1Report:
    """Worst margins of the dissipativity and perpendicular-growth inequalities."""
    pts = probe_points(drift.m, drift.r_probe, n_probes, seed)
    worst_d, worst_p, where = np.inf, np.inf, pts[0]
    for y in pts:
        fy = drift(y)
        r = float(np.linalg.norm(y))
        inner = float(y @ fy)
        margin = r * (drift.d1 - drift.d2 * r) - inner
        if margin < worst_d:
            worst_d, where = margin, y
        if r > 0:
            perp = fy - inner / (r * r) * y
            worst_p = min(worst_p, drift.c_fg * (r + 1) - float(np.linalg.norm(perp)))
    return A1Report(n_probes=len(pts), dissipative_margin=float(worst_d),
                    perpendicular_margin=float(worst_p), worst_dissipative_point=where)


def _op_norm(t: np.ndarray, m: int, d: int) -> float:
    """Spectral norm of ``sigma`` itself, or of a derivative tensor flattened to
    (m*d) x (inputs), which bounds the multilinear operator norm from above."""
    mat = t.reshape(m, d) if t.size == m * d else t.reshape(m * d, -1)
    return float(np.linalg.norm(mat, 2))


@dataclass
class A2Report(Report):
    n_probes: int
    c_sigma: float
    sup_sigma: float
    sup_d1: float
    sup_d2: float
    sup_d3: float
    worst_point: np.ndarray

    @property
    def max_bound(self) -> float:
        return max(self.sup_sigma, self.sup_d1, self.sup_d2, self.sup_d3)

    @property
    def passed(self) -> bool:
        return self.max_bound <= self.c_sigma * (1 + 1e-12)


def check_a2(sigma: VectorFieldSpec, n_probes: int = 2000, seed: int = 0,
             r_probe: float = 10.0) -> A2Report:
    """Largest sampled norms of ``sigma`` and its first three derivatives."""
    m, d = sigma.m, sigma.d
    pts = probe_points(m, r_probe, n_probes, seed)
    sups = [0.0, 0.0, 0.0, 0.0]
    worst, worst_pt = -1.0, pts[0]
    evals = (sigma.eval_sigma, sigma.eval_dsigma, sigma.eval_d2sigma, sigma.eval_d3sigma)
    for y in pts:
        for k, ev in enumerate(evals):
            v = _op_norm(ev(y), m, d)
            if not np.isfinite(v):
                v = np.inf
            sups[k] = max(sups[k], v)
            if v > worst:
                worst, worst_pt = v, y
    return A2Report(n_probes=len(pts), c_sigma=sigma.c_sigma, sup_sigma=sups[0],
                    sup_d1=sups[1], sup_d2=sups[2], sup_d3=sups[3], worst_point=worst_pt)


def averaged_drift(f: DriftSpec, g: DriftSpec) -> DriftSpec:
    """``y -> (f(y) + g(y))/2`` with averaged constants (equal to the inputs'
    when they agree); the defining inequalities are convex in the drift."""
    if f.m != g.m:
        raise ValueError("drifts act on different dimensions")
    if f is g:
        return f

    def avg(y):
        return 0.5 * (f(y) + g(y))

    return DriftSpec(m=f.m, f=avg, d1=0.5 * (f.d1 + g.d1), d2=0.5 * (f.d2 + g.d2),
                     c_fg=0.5 * (f.c_fg + g.c_fg), r_probe=min(f.r_probe, g.r_probe),
                     name=f"avg({f.name},{g.name})")


def _ray_sup(fn, u: np.ndarray, radius: float, n_grid: int) -> float:
    r = np.linspace(0.0, radius, n_grid)
    vals = np.array([np.linalg.norm(fn(ri * u)) for ri in r])
    k = int(np.argmax(vals))
    best = float(vals[k])
    if radius > 0 and 0 < k < n_grid - 1:
        res = minimize_scalar(lambda s: -np.linalg.norm(fn(s * u)),
                              bounds=(r[k - 1], r[k + 1]), method="bounded",
                              options={"xatol": 1e-12 * max(1.0, radius)})
        best = max(best, float(-res.fun))
    return best


def estimate_sup_constant(f: DriftSpec, g: DriftSpec, radius: float,
                          n_probes: int = 256, seed: int = 0) -> float:
    """``sup |f| + sup |g|`` over the closed ball of the given radius.

    Each sup is taken along a fixed set of rays (the axes in both directions
    plus random directions in dimension > 1) on a grid of ``n_probes`` radii,
    polished by a bounded 1-d maximization around the best grid point.
    """
    if not radius >= 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    m = f.m
    eye = np.eye(m)
    dirs = [*eye, *(-eye)]
    if m > 1:
        rng = np.random.default_rng(seed)
        extra = rng.standard_normal((4 * m * m, m))
        dirs += list(extra / np.linalg.norm(extra, axis=1, keepdims=True))
    total = 0.0
    for drift in (f, g):
        total += max(_ray_sup(drift, u, radius, n_probes) for u in dirs)
    return total


def double_well(r_probe: float = 10.0) -> DriftSpec:
    """Scalar ``x - x^3`` with ``D2 = 1`` and the smallest admissible ``D1``."""
    return DriftSpec(m=1, f=lambda y: y - y ** 3, d1=DOUBLE_WELL_D1 * (1 + 1e-9), d2=1.0,
                     c_fg=0.0, r_probe=r_probe, name="double_well")


def linear_drift(rate: float = 1.0, m: int = 1) -> DriftSpec:
    """``f(y) = -rate * y``."""
    if not rate > 0:
        raise ValueError("rate must be positive")
    return DriftSpec(m=m, f=lambda y: -rate * y, d1=0.0, d2=rate, c_fg=0.0,
                     name=f"linear({rate:g})")
