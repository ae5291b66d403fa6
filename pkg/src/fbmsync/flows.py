"""Pure-noise flows ``dy = sigma(y) dx`` forward and backward in time, their
Jacobians, and numerical checks of the flow estimates.

A :class:`GridPath` driver is stepped with the level-2 step built from the
area ``dx (x) dx / 2`` (``scheme="milstein"``, the default) or with plain
increments (``scheme="euler"``); a :class:`RoughLift` driver always uses its
own areas. Backward flows run the same step over reversed indices with
negated increments and areas ``dx (x) dx - X``, which for a geometric lift
is the area of the time-reversed path.
"""

from __future__ import annotations

import functools
import math
import weakref
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Union

import numba as nb
import numpy as np

from ._flowkernels import FlowKernels
from ._report import Report
from .paths import GridPath, RoughLift, TimeGrid, _write_rows
from .variation import greedy_count, p_variation

__all__ = [
    "VectorFieldSpec", "FlowResult", "Direction", "FlowDivergenceError",
    "PreconditionError", "solve_forward_flow", "solve_backward_flow",
    "flow_endpoints", "flow_inverse_jacobian_check", "frechet_remainder_check",
    "lipschitz_dependence_check", "solution_pvar_bound_check",
    "small_interval_contraction_check", "zero_field", "sine_field", "linear_field",
    "driver_steps", "default_p", "DEFAULT_CAP",
]

DEFAULT_CAP = 1e8
DriverLike = Union[GridPath, RoughLift]


class FlowDivergenceError(RuntimeError):
    """The state left the ball of radius ``cap`` or became non-finite."""

    def __init__(self, index: int, last_state, cap: float):
        self.index = int(index)
        self.last_state = np.asarray(last_state, dtype=float).copy()
        self.cap = cap
        super().__init__(f"flow diverged at step {self.index} (cap {cap:g}); "
                         f"last finite state {self.last_state}")


class PreconditionError(ValueError):
    """An input does not satisfy the stated precondition of a check."""


class Direction(Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


@dataclass(frozen=True, eq=False)
class VectorFieldSpec:
    """Diffusion field ``sigma: R^m -> R^{m x d}`` with derivatives up to order 3.

    The four callables are fill-style: ``sigma(y, out)`` writes an ``(m, d)``
    array, ``dsigma`` writes ``out[i, k, j] = d sigma_ik / d y_j``, ``d2sigma``
    an ``(m, d, m, m)`` array and ``d3sigma`` an ``(m, d, m, m, m)`` one.
    Passing numba-compiled callables gives compiled flow kernels.
    ``c_sigma`` is the declared bound on all four.
    """

    m: int
    d: int
    sigma: Callable
    dsigma: Callable
    d2sigma: Callable
    d3sigma: Callable
    c_sigma: float
    name: str = "custom"

    def __post_init__(self):
        if self.m < 1 or self.d < 1:
            raise ValueError(f"dimensions must be positive, got {(self.m, self.d)}")
        if not self.c_sigma > 0:
            raise ValueError(f"c_sigma must be positive, got {self.c_sigma}")

    @property
    def dims(self) -> tuple[int, int]:
        return self.m, self.d

    def _eval(self, fn, shape, y):
        out = np.zeros(shape)
        fn(np.ascontiguousarray(y, dtype=float).reshape(self.m), out)
        return out

    def eval_sigma(self, y) -> np.ndarray:
        return self._eval(self.sigma, (self.m, self.d), y)

    def eval_dsigma(self, y) -> np.ndarray:
        return self._eval(self.dsigma, (self.m, self.d, self.m), y)

    def eval_d2sigma(self, y) -> np.ndarray:
        return self._eval(self.d2sigma, (self.m, self.d, self.m, self.m), y)

    def eval_d3sigma(self, y) -> np.ndarray:
        return self._eval(self.d3sigma, (self.m, self.d, self.m, self.m, self.m), y)

    def with_bound(self, c_sigma: float) -> "VectorFieldSpec":
        """Same field with a different declared bound (kernels are shared)."""
        new = VectorFieldSpec(self.m, self.d, self.sigma, self.dsigma, self.d2sigma,
                              self.d3sigma, c_sigma, self.name)
        if "kernels" in self.__dict__:
            new.__dict__["kernels"] = self.__dict__["kernels"]
        return new

    @functools.cached_property
    def kernels(self) -> FlowKernels:
        return FlowKernels(self.sigma, self.dsigma, self.d2sigma, self.m, self.d)

    @classmethod
    def from_arrays(cls, m: int, d: int, sigma, dsigma, d2sigma, d3sigma,
                    c_sigma: float, name: str = "custom") -> "VectorFieldSpec":
        """Build from plain callables that return arrays (runs uncompiled)."""

        def filler(fn):
            def fill(y, out):
                out[...] = np.reshape(fn(y), out.shape)
            return fill

        return cls(m, d, filler(sigma), filler(dsigma), filler(d2sigma),
                   filler(d3sigma), c_sigma, name)


# built-in fields -----------------------------------------------------------

@nb.njit(inline="always")
def _zero_fill(y, out):
    out[...] = 0.0


@nb.njit(inline="always")
def _sin_sigma(y, out):
    for i in range(y.shape[0]):
        out[i, i] = math.sin(y[i])


@nb.njit(inline="always")
def _sin_d1(y, out):
    for i in range(y.shape[0]):
        out[i, i, i] = math.cos(y[i])


@nb.njit(inline="always")
def _sin_d2(y, out):
    for i in range(y.shape[0]):
        out[i, i, i, i] = -math.sin(y[i])


@nb.njit(inline="always")
def _sin_d3(y, out):
    for i in range(y.shape[0]):
        out[i, i, i, i, i] = -math.cos(y[i])


@nb.njit(inline="always")
def _lin_sigma(y, out):
    for i in range(y.shape[0]):
        out[i, 0] = y[i]


@nb.njit(inline="always")
def _lin_d1(y, out):
    for i in range(y.shape[0]):
        out[i, 0, i] = 1.0


@functools.lru_cache(maxsize=None)
def zero_field(m: int = 1, d: int = 1, c_sigma: float = 1.0) -> VectorFieldSpec:
    """``sigma = 0``."""
    return VectorFieldSpec(m, d, _zero_fill, _zero_fill, _zero_fill, _zero_fill,
                           c_sigma, "zero")


@functools.lru_cache(maxsize=None)
def sine_field(m: int = 1, c_sigma: float = 1.0) -> VectorFieldSpec:
    """``sigma(y) = diag(sin y_1, ..., sin y_m)`` driven by an m-dimensional path."""
    return VectorFieldSpec(m, m, _sin_sigma, _sin_d1, _sin_d2, _sin_d3, c_sigma, "sin")


@functools.lru_cache(maxsize=None)
def linear_field(m: int = 1, c_sigma: float = 1.0) -> VectorFieldSpec:
    """``sigma(y) = y`` against a scalar driver; unbounded, so it is only a test field."""
    return VectorFieldSpec(m, 1, _lin_sigma, _lin_d1, _zero_fill, _zero_fill,
                           c_sigma, "linear")


# driver data ---------------------------------------------------------------

_STEP_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def driver_steps(driver: DriverLike, scheme: str = "milstein"):
    """Per-step ``(dW, A_forward, A_backward)`` arrays for the kernels."""
    if scheme not in ("milstein", "euler"):
        raise ValueError(f"unknown scheme {scheme!r}")
    key = "lift" if isinstance(driver, RoughLift) else scheme
    cache = _STEP_CACHE.setdefault(driver, {})
    if key not in cache:
        if isinstance(driver, RoughLift):
            dw = np.ascontiguousarray(driver.base.increments)
            fwd = np.ascontiguousarray(driver.step_areas)
        elif isinstance(driver, GridPath):
            dw = np.ascontiguousarray(driver.increments)
            if scheme == "euler":
                fwd = np.zeros((dw.shape[0], dw.shape[1], dw.shape[1]))
            else:
                fwd = 0.5 * np.einsum("nl,nk->nlk", dw, dw)
        else:
            raise TypeError(f"driver must be a GridPath or RoughLift, got {type(driver)}")
        if key == "euler":
            bwd = np.zeros_like(fwd)
        else:
            bwd = np.einsum("nl,nk->nlk", dw, dw) - fwd
        cache[key] = (dw, fwd, np.ascontiguousarray(bwd), np.ascontiguousarray(-dw))
    return cache[key]


def _grid(driver: DriverLike) -> TimeGrid:
    return driver.grid


def _check_field(sigma: VectorFieldSpec, driver: DriverLike) -> None:
    if sigma.d != driver.dim:
        raise ValueError(f"field expects a {sigma.d}-dim driver, got {driver.dim}")


def default_p(driver: DriverLike) -> float:
    """Variation exponent used when a check is not given one."""
    return 1.0 / 0.35 if isinstance(driver, RoughLift) else 1.0 / 0.55


@dataclass(eq=False)
class FlowResult:
    """Trajectory on the grid sub-range ``[from_index, to_index]`` in time order."""

    trajectory: GridPath
    jacobian: Optional[np.ndarray]
    direction: Direction
    driver_ref: str
    from_index: int
    to_index: int
    near_singular: bool = False

    @property
    def anchor_state(self) -> np.ndarray:
        v = self.trajectory.values
        return v[0] if self.direction is Direction.FORWARD else v[-1]

    @property
    def end_state(self) -> np.ndarray:
        v = self.trajectory.values
        return v[-1] if self.direction is Direction.FORWARD else v[0]

    @property
    def end_jacobian(self) -> np.ndarray:
        if self.jacobian is None:
            raise ValueError("flow was solved without the Jacobian")
        return self.jacobian[-1] if self.direction is Direction.FORWARD else self.jacobian[0]

    def to_csv(self, path) -> None:
        m = self.trajectory.dim
        header = ["t"] + [f"y{i}" for i in range(m)]
        cols = [self.trajectory.times, self.trajectory.values]
        if self.jacobian is not None:
            header += [f"j{i}{p}" for i in range(m) for p in range(m)]
            cols.append(self.jacobian.reshape(len(self.jacobian), -1))
        _write_rows(path, header, np.column_stack(cols))


def _solve(sigma, driver, y, from_index, to_index, with_jacobian, scheme, cap, backward):
    _check_field(sigma, driver)
    n = driver.n_steps
    to_index = n if to_index is None else int(to_index)
    from_index = int(from_index)
    if not 0 <= from_index <= to_index <= n:
        raise ValueError(f"need 0 <= from_index <= to_index <= {n}")
    y = np.ascontiguousarray(y, dtype=float).reshape(-1)
    if y.shape != (sigma.m,):
        raise ValueError(f"state must have {sigma.m} components")
    if not np.all(np.isfinite(y)):
        raise ValueError("initial state must be finite")
    dw, fwd, bwd, ndw = driver_steps(driver, scheme)
    if backward:
        traj, jac, fail = sigma.kernels.trajectory(y, ndw, bwd, from_index, to_index,
                                                   True, bool(with_jacobian), float(cap))
    else:
        traj, jac, fail = sigma.kernels.trajectory(y, dw, fwd, from_index, to_index,
                                                   False, bool(with_jacobian), float(cap))
    if fail >= 0:
        last = traj[fail - from_index + 1] if backward else traj[fail - from_index]
        raise FlowDivergenceError(fail, last, cap)
    grid = _grid(driver).sub(from_index, to_index)
    near_singular = False
    if with_jacobian:
        dets = np.linalg.det(jac)
        near_singular = bool(np.any(np.abs(dets) < 1e-12))
    return FlowResult(trajectory=GridPath(grid, traj), jacobian=jac if with_jacobian else None,
                      direction=Direction.BACKWARD if backward else Direction.FORWARD,
                      driver_ref=driver.fingerprint, from_index=from_index,
                      to_index=to_index, near_singular=near_singular)


def solve_forward_flow(sigma: VectorFieldSpec, driver: DriverLike, y0, from_index: int = 0,
                       to_index: Optional[int] = None, with_jacobian: bool = False,
                       scheme: str = "milstein", cap: float = DEFAULT_CAP) -> FlowResult:
    """Solve ``dy = sigma(y) dx`` from ``y0`` at ``t[from_index]`` to ``t[to_index]``.

    With ``with_jacobian`` the derivative with respect to ``y0`` is carried
    along (identity at the start).
    """
    return _solve(sigma, driver, y0, from_index, to_index, with_jacobian, scheme, cap, False)


def solve_backward_flow(sigma: VectorFieldSpec, driver: DriverLike, h_terminal,
                        from_index: int = 0, to_index: Optional[int] = None,
                        with_jacobian: bool = False, scheme: str = "milstein",
                        cap: float = DEFAULT_CAP) -> FlowResult:
    """Solve the backward equation on ``[t[from_index], t[to_index]]`` with
    terminal value ``h_terminal`` at ``t[to_index]``.

    The Jacobian is the derivative with respect to the terminal value and is
    the identity at ``to_index``.
    """
    return _solve(sigma, driver, h_terminal, from_index, to_index, with_jacobian, scheme,
                  cap, True)


def flow_endpoints(sigma: VectorFieldSpec, driver: DriverLike, states, start: int, stop: int,
                   frac: float = 0.0, backward: bool = False, with_jacobian: bool = False,
                   scheme: str = "milstein", cap: float = DEFAULT_CAP):
    """Batch endpoint solve for several states.

    Forward: from ``t[start]`` to ``t[stop] + frac*h``. Backward: from terminal
    time ``t[stop] + frac*h`` back to ``t[start]``. Inside a step the driver is
    linear, so a fraction ``c`` of step n has increment ``c dW_n`` and area
    ``c^2 A_n``. Returns ``(states, jacobians)``.
    """
    dw, fwd, bwd, ndw = driver_steps(driver, scheme)
    Y0 = np.ascontiguousarray(np.atleast_2d(np.asarray(states, dtype=float)))
    if backward:
        Y, J, fail, row = sigma.kernels.endpoint(Y0, ndw, bwd, int(start), int(stop),
                                                 float(frac), True, bool(with_jacobian),
                                                 float(cap))
    else:
        Y, J, fail, row = sigma.kernels.endpoint(Y0, dw, fwd, int(start), int(stop),
                                                 float(frac), False, bool(with_jacobian),
                                                 float(cap))
    if fail >= 0:
        raise FlowDivergenceError(fail, Y[row], cap)
    return Y, J


# checks --------------------------------------------------------------------

@dataclass
class InverseJacobianReport(Report):
    t_index: int
    deviation: float
    roundtrip_error: float
    tol: float = 1e-3

    @property
    def passed(self) -> bool:
        return self.deviation <= self.tol


def flow_inverse_jacobian_check(sigma: VectorFieldSpec, driver: DriverLike, z, t_index: int,
                                tol: float = 1e-3, scheme: str = "milstein") -> InverseJacobianReport:
    """Frobenius distance of ``(d phi / dy)(t, z) (d psi / dh)(a, phi(t, z))`` from Id,
    plus the round-trip error ``|psi(a, phi(t, z)) - z|``."""
    z = np.asarray(z, dtype=float).reshape(1, -1)
    y, jf = flow_endpoints(sigma, driver, z, 0, t_index, with_jacobian=True, scheme=scheme)
    zb, jb = flow_endpoints(sigma, driver, y, 0, t_index, backward=True, with_jacobian=True,
                            scheme=scheme)
    dev = float(np.linalg.norm(jf[0] @ jb[0] - np.eye(sigma.m)))
    return InverseJacobianReport(t_index=int(t_index), deviation=dev,
                                 roundtrip_error=float(np.linalg.norm(zb[0] - z[0])), tol=tol)


@dataclass
class FrechetReport(Report):
    scales: np.ndarray
    remainders: np.ndarray
    fitted_order: float
    expected_min: float = 1.8
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.fitted_order >= self.expected_min


def frechet_remainder_check(sigma: VectorFieldSpec, driver: DriverLike, y_a, delta,
                            t_index: Optional[int] = None, n_scales: int = 3,
                            scheme: str = "milstein") -> FrechetReport:
    """Fit the order of ``r(D) = sup_t |phi(t, y_a + D) - phi(t, y_a) - J_t D|`` for
    ``D = delta, delta/2, delta/4, ...`` over ``[a, t]``."""
    delta = np.asarray(delta, dtype=float).reshape(-1)
    y_a = np.asarray(y_a, dtype=float).reshape(-1)
    t_index = driver.n_steps if t_index is None else int(t_index)
    scales = 0.5 ** np.arange(n_scales)
    if not np.any(delta):
        return FrechetReport(scales=scales, remainders=np.zeros(n_scales), fitted_order=np.inf,
                             note="zero perturbation")
    base = solve_forward_flow(sigma, driver, y_a, 0, t_index, with_jacobian=True, scheme=scheme)
    ref = base.trajectory.values
    rem = []
    for s in scales:
        pert = solve_forward_flow(sigma, driver, y_a + s * delta, 0, t_index, scheme=scheme)
        lin = np.einsum("tij,j->ti", base.jacobian, s * delta)
        rem.append(float(np.max(np.linalg.norm(pert.trajectory.values - ref - lin, axis=1))))
    rem = np.array(rem)
    floor = 1e3 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(ref))))
    if np.all(rem <= floor):
        return FrechetReport(scales=scales * np.linalg.norm(delta), remainders=rem,
                             fitted_order=np.inf, note="remainder at round-off level")
    ok = rem > floor
    if ok.sum() < 2:
        order = np.inf
    else:
        order = float(np.polyfit(np.log(scales[ok]), np.log(rem[ok]), 1)[0])
    return FrechetReport(scales=scales * np.linalg.norm(delta), remainders=rem,
                         fitted_order=order)


def _big_k(n: int) -> float:
    try:
        return math.ldexp(float(n), n - 1) + 1.0
    except OverflowError:
        return math.inf


@dataclass
class LipschitzReport(Report):
    lhs: float
    rhs: float
    K: float
    n_greedy: int
    gamma: float
    m_tilde: float
    note: str = "norms of computed trajectories include discretization error"

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-12)


def lipschitz_dependence_check(sigma: VectorFieldSpec, driver: DriverLike, y_a, ybar_a,
                               p: Optional[float] = None, generic_c: float = 2.0,
                               scheme: str = "milstein") -> LipschitzReport:
    """``sup |ybar - y| <= K |ybar_a - y_a|`` with ``K = 2^(N-1) N + 1`` and N the
    greedy count of the driver at ``gamma = 1/(2 M)``,
    ``M = 8 C_sigma C (|||ybar|||_p + |||y|||_p + 1)``."""
    p = default_p(driver) if p is None else p
    y = solve_forward_flow(sigma, driver, y_a, scheme=scheme).trajectory
    yb = solve_forward_flow(sigma, driver, ybar_a, scheme=scheme).trajectory
    m_tilde = 8 * sigma.c_sigma * generic_c * (p_variation(yb, p) + p_variation(y, p) + 1)
    gamma = 1.0 / (2 * m_tilde)
    n = greedy_count(driver, gamma, p)
    k = _big_k(n)
    lhs = float(np.max(np.linalg.norm(yb.values - y.values, axis=1)))
    diff0 = float(np.linalg.norm(np.asarray(ybar_a, float) - np.asarray(y_a, float)))
    rhs = k * diff0 if diff0 > 0 else 0.0
    return LipschitzReport(lhs=lhs, rhs=rhs, K=k, n_greedy=n, gamma=gamma, m_tilde=m_tilde)


@dataclass
class SolutionVariationReport(Report):
    lhs: float
    rhs: float
    gamma: float
    p: float
    generic_c: float

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.slack >= 0


def solution_pvar_bound_check(sigma: VectorFieldSpec, driver: DriverLike, y0=None,
                              p: Optional[float] = None, generic_c: float = 2.0,
                              scheme: str = "milstein") -> SolutionVariationReport:
    """``|||y|||_p <= N`` where N is the greedy count of the driver at
    ``gamma = 1/(4 C_sigma C)``. A failure points at the configured C."""
    p = default_p(driver) if p is None else p
    y0 = np.zeros(sigma.m) if y0 is None else y0
    y = solve_forward_flow(sigma, driver, y0, scheme=scheme).trajectory
    gamma = 1.0 / (4 * sigma.c_sigma * generic_c)
    n = greedy_count(driver, gamma, p)
    return SolutionVariationReport(lhs=p_variation(y, p), rhs=float(n), gamma=gamma, p=p,
                                   generic_c=generic_c)


@dataclass
class ContractionReport(Report):
    driver_norm: float
    solution_norm: float
    solution_bound: float
    difference_norm: float
    difference_bound: float

    @property
    def solution_margin(self) -> float:
        return min(self.solution_bound - self.solution_norm, 0.5 - self.solution_bound)

    @property
    def difference_margin(self) -> float:
        return self.difference_bound - self.difference_norm

    @property
    def passed(self) -> bool:
        return self.solution_margin >= 0 and self.difference_margin >= -1e-15


def small_interval_contraction_check(sigma: VectorFieldSpec, driver: DriverLike, y_a, ybar_a,
                                     interval, p: Optional[float] = None,
                                     generic_c: float = 2.0,
                                     scheme: str = "milstein") -> ContractionReport:
    """On an interval with ``32 C_sigma C |||W|||_p <= 1`` check
    ``|||y|||_p <= 4 C_sigma |||W|||_p <= 1/2`` and
    ``|||ybar - y|||_p <= 16 C_sigma C |||W|||_p |ybar_a - y_a|``."""
    p = default_p(driver) if p is None else p
    i0, i1 = int(interval[0]), int(interval[1])
    w = p_variation(driver, p, (i0, i1))
    cs = sigma.c_sigma
    if 32 * cs * generic_c * w > 1:
        raise PreconditionError(
            f"interval too long: 32*C_sigma*C*|||W||| = {32 * cs * generic_c * w:.4g} > 1")
    y = solve_forward_flow(sigma, driver, y_a, i0, i1, scheme=scheme).trajectory
    yb = solve_forward_flow(sigma, driver, ybar_a, i0, i1, scheme=scheme).trajectory
    diff = GridPath(y.grid, yb.values - y.values)
    d0 = float(np.linalg.norm(np.asarray(ybar_a, float) - np.asarray(y_a, float)))
    return ContractionReport(driver_norm=w, solution_norm=p_variation(y, p),
                             solution_bound=4 * cs * w, difference_norm=p_variation(diff, p),
                             difference_bound=16 * cs * generic_c * w * d0)
