"""Stepping kernels for ``dy = sigma(y) dx`` with a level-2 step.

One step from ``y`` over an increment ``w`` with area ``A`` (``A[l, k]``) is

    y' = y + sigma(y) w + sum_{k,l} (Dsigma sigma)(y)[., k, l] A[l, k]

and the Jacobian is propagated by the exact derivative of that map. The
field enters through fill-style callables ``sigma(y, out)`` writing an
``(m, d)`` array, ``dsigma(y, out)`` writing ``(m, d, m)`` and
``d2sigma(y, out)`` writing ``(m, d, m, m)``.

Kernels are generated per field. When the callables are numba dispatchers
the kernels are compiled with the field inlined; otherwise the same code
runs as plain Python.
"""

from __future__ import annotations

import numba as nb
import numpy as np
from numba.core.registry import CPUDispatcher


def is_compiled(fn) -> bool:
    return isinstance(fn, CPUDispatcher)


class FlowKernels:
    """Per-field compiled kernels.

    ``endpoint(Y0, dW, A, start, stop, frac, reverse, with_jac, cap)``
        advances each row of ``Y0`` (shape (B, m)) over steps ``start..stop-1``
        and then a fraction ``frac`` of step ``stop``. With ``reverse`` the
        same steps are taken in the opposite order, the fractional one first,
        so the caller passes the backward increments and areas.
        Returns ``(Y, J, fail, row)``; ``fail`` is the step index where row
        ``row`` left the finite ball of radius ``cap`` (``-1`` if none), and
        ``Y[row]`` then holds its last finite state.
    ``trajectory(y0, dW, A, start, stop, reverse, with_jac, cap)``
        full path over grid indices ``start..stop`` in time order.
    ``step(y, dW, A, n, c)``
        one step over the fraction ``c`` of step ``n``.
    """

    def __init__(self, sig, dsig, d2sig, m: int, d: int, force_generic: bool = False):
        self.m, self.d = m, d
        self.compiled = all(is_compiled(f) for f in (sig, dsig, d2sig))
        scalar = m == 1 and d == 1 and not force_generic
        self.scalar = scalar
        self.endpoint, self.trajectory, self.step = _build(sig, dsig, d2sig, scalar, self.compiled)


def _identity(fn):
    return fn


def _build(sig, dsig, d2sig, scalar: bool, compiled: bool):
    wrap = nb.njit if compiled else _identity
    # the plain step and the step with Jacobian are kept apart: a runtime
    # flag inside one step function blocks register promotion in the loop
    inline = nb.njit(inline="always") if compiled else _identity

    if scalar:
        return _build_scalar(sig, dsig, d2sig, wrap, inline)

    @inline
    def _area_mix(S, A, n, c2, M):
        # M[j, k] = sum_l S[j, l] A[l, k]
        for j in range(S.shape[0]):
            for k in range(S.shape[1]):
                acc = 0.0
                for l in range(S.shape[1]):
                    acc += S[j, l] * A[n, l, k]
                M[j, k] = c2 * acc

    @inline
    def _increment(y, dW, n, c, S, DS, M, ynew):
        m = S.shape[0]
        d = S.shape[1]
        for i in range(m):
            inc = 0.0
            for k in range(d):
                inc += S[i, k] * c * dW[n, k]
                for j in range(m):
                    inc += DS[i, k, j] * M[j, k]
            ynew[i] = y[i] + inc

    @inline
    def advance(y, dW, A, n, c, S, DS, M, ynew):
        sig(y, S)
        dsig(y, DS)
        _area_mix(S, A, n, c * c, M)
        _increment(y, dW, n, c, S, DS, M, ynew)

    @inline
    def advance_jac(y, dW, A, n, c, xi, S, DS, D2, M, NN, JS, ynew):
        m = S.shape[0]
        d = S.shape[1]
        sig(y, S)
        dsig(y, DS)
        d2sig(y, D2)
        c2 = c * c
        _area_mix(S, A, n, c2, M)
        # NN[j, p, k] = sum_l DS[j, l, p] A[l, k]
        for j in range(m):
            for p in range(m):
                for k in range(d):
                    acc = 0.0
                    for l in range(d):
                        acc += DS[j, l, p] * A[n, l, k]
                    NN[j, p, k] = c2 * acc
        for i in range(m):
            for p in range(m):
                v = 1.0 if i == p else 0.0
                for k in range(d):
                    v += DS[i, k, p] * c * dW[n, k]
                    for j in range(m):
                        v += D2[i, k, j, p] * M[j, k] + DS[i, k, j] * NN[j, p, k]
                JS[i, p] = v
        for i in range(m):
            for p in range(m):
                acc = 0.0
                for j in range(m):
                    acc += JS[i, j] * xi[j, p]
                NN[i, p, 0] = acc
        for i in range(m):
            for p in range(m):
                xi[i, p] = NN[i, p, 0]
        _increment(y, dW, n, c, S, DS, M, ynew)

    @inline
    def accept(ynew, cap):
        acc = 0.0
        for i in range(ynew.shape[0]):
            v = ynew[i]
            if not np.isfinite(v):
                return False
            acc += v * v
        return acc <= cap * cap

    @inline
    def which(s, start, stop, nfull, frac, reverse):
        """Grid step and fraction taken at position ``s`` of an endpoint solve."""
        if not reverse:
            if s < nfull:
                return start + s, 1.0
            return stop, frac
        if frac > 0.0:
            if s == 0:
                return stop, frac
            return stop - s, 1.0
        return stop - 1 - s, 1.0

    @wrap
    def endpoint(Y0, dW, A, start, stop, frac, reverse, with_jac, cap):
        B = Y0.shape[0]
        m = Y0.shape[1]
        d = dW.shape[1]
        S = np.zeros((m, d))
        DS = np.zeros((m, d, m))
        D2 = np.zeros((m, d, m, m))
        M = np.zeros((m, d))
        NN = np.zeros((m, max(m, 1), max(d, 1)))
        JS = np.zeros((m, m))
        Y = Y0.copy()
        J = np.zeros((B, m, m))
        ynew = np.zeros(m)
        y = np.zeros(m)
        xi = np.zeros((m, m))
        nfull = stop - start
        total = nfull + (1 if frac > 0.0 else 0)
        fail = -1
        fail_row = -1
        for b in range(B):
            for i in range(m):
                y[i] = Y0[b, i]
                for p in range(m):
                    xi[i, p] = 1.0 if i == p else 0.0
            if with_jac:
                for s in range(total):
                    n, c = which(s, start, stop, nfull, frac, reverse)
                    advance_jac(y, dW, A, n, c, xi, S, DS, D2, M, NN, JS, ynew)
                    if not accept(ynew, cap):
                        fail = n
                        break
                    for i in range(m):
                        y[i] = ynew[i]
            else:
                for s in range(total):
                    n, c = which(s, start, stop, nfull, frac, reverse)
                    advance(y, dW, A, n, c, S, DS, M, ynew)
                    if not accept(ynew, cap):
                        fail = n
                        break
                    for i in range(m):
                        y[i] = ynew[i]
            for i in range(m):
                Y[b, i] = y[i]
                for p in range(m):
                    J[b, i, p] = xi[i, p]
            if fail >= 0:
                fail_row = b
                break
        return Y, J, fail, fail_row

    @wrap
    def trajectory(y0, dW, A, start, stop, reverse, with_jac, cap):
        m = y0.shape[0]
        d = dW.shape[1]
        L = stop - start
        S = np.zeros((m, d))
        DS = np.zeros((m, d, m))
        D2 = np.zeros((m, d, m, m))
        M = np.zeros((m, d))
        NN = np.zeros((m, max(m, 1), max(d, 1)))
        JS = np.zeros((m, m))
        traj = np.zeros((L + 1, m))
        jac = np.zeros((L + 1 if with_jac else 0, m, m))
        ynew = np.zeros(m)
        y = y0.copy()
        xi = np.eye(m)
        pos = L if reverse else 0
        traj[pos] = y
        if with_jac:
            jac[pos] = xi
        fail = -1
        for s in range(L):
            n = stop - 1 - s if reverse else start + s
            if with_jac:
                advance_jac(y, dW, A, n, 1.0, xi, S, DS, D2, M, NN, JS, ynew)
            else:
                advance(y, dW, A, n, 1.0, S, DS, M, ynew)
            if not accept(ynew, cap):
                fail = n
                break
            for i in range(m):
                y[i] = ynew[i]
            pos = n - start if reverse else n + 1 - start
            traj[pos] = y
            if with_jac:
                jac[pos] = xi
        return traj, jac, fail

    @wrap
    def step(y, dW, A, n, c):
        m = y.shape[0]
        d = dW.shape[1]
        S = np.zeros((m, d))
        DS = np.zeros((m, d, m))
        M = np.zeros((m, d))
        ynew = np.zeros(m)
        advance(y, dW, A, n, c, S, DS, M, ynew)
        return ynew

    return endpoint, trajectory, step


def _build_scalar(sig, dsig, d2sig, wrap, inline):
    """Kernels for m = d = 1 with the state and Jacobian held in local scalars."""

    @inline
    def advance(y, dW, A, n, c, yv, S, DS):
        yv[0] = y
        sig(yv, S)
        dsig(yv, DS)
        s = S[0, 0]
        return y + s * c * dW[n, 0] + DS[0, 0, 0] * s * (c * c * A[n, 0, 0])

    @inline
    def advance_jac(y, dW, A, n, c, yv, S, DS, D2):
        yv[0] = y
        sig(yv, S)
        dsig(yv, DS)
        d2sig(yv, D2)
        s = S[0, 0]
        ds = DS[0, 0, 0]
        w = c * dW[n, 0]
        a = c * c * A[n, 0, 0]
        return y + s * w + ds * s * a, 1.0 + ds * w + (D2[0, 0, 0, 0] * s + ds * ds) * a

    @inline
    def ok(v, cap):
        return np.isfinite(v) and abs(v) <= cap

    @inline
    def which(s, start, stop, nfull, frac, reverse):
        if not reverse:
            if s < nfull:
                return start + s, 1.0
            return stop, frac
        if frac > 0.0:
            if s == 0:
                return stop, frac
            return stop - s, 1.0
        return stop - 1 - s, 1.0

    @wrap
    def endpoint(Y0, dW, A, start, stop, frac, reverse, with_jac, cap):
        B = Y0.shape[0]
        yv = np.zeros(1)
        S = np.zeros((1, 1))
        DS = np.zeros((1, 1, 1))
        D2 = np.zeros((1, 1, 1, 1))
        Y = Y0.copy()
        J = np.ones((B, 1, 1))
        nfull = stop - start
        total = nfull + (1 if frac > 0.0 else 0)
        fail = -1
        fail_row = -1
        for b in range(B):
            y = Y0[b, 0]
            xi = 1.0
            if with_jac:
                for s in range(total):
                    n, c = which(s, start, stop, nfull, frac, reverse)
                    yn, fac = advance_jac(y, dW, A, n, c, yv, S, DS, D2)
                    if not ok(yn, cap):
                        fail = n
                        break
                    y = yn
                    xi *= fac
            else:
                for s in range(total):
                    n, c = which(s, start, stop, nfull, frac, reverse)
                    yn = advance(y, dW, A, n, c, yv, S, DS)
                    if not ok(yn, cap):
                        fail = n
                        break
                    y = yn
            Y[b, 0] = y
            J[b, 0, 0] = xi
            if fail >= 0:
                fail_row = b
                break
        return Y, J, fail, fail_row

    @wrap
    def trajectory(y0, dW, A, start, stop, reverse, with_jac, cap):
        L = stop - start
        yv = np.zeros(1)
        S = np.zeros((1, 1))
        DS = np.zeros((1, 1, 1))
        D2 = np.zeros((1, 1, 1, 1))
        traj = np.zeros((L + 1, 1))
        jac = np.ones((L + 1 if with_jac else 0, 1, 1))
        y = y0[0]
        xi = 1.0
        traj[L if reverse else 0, 0] = y
        fail = -1
        for s in range(L):
            n = stop - 1 - s if reverse else start + s
            if with_jac:
                yn, fac = advance_jac(y, dW, A, n, 1.0, yv, S, DS, D2)
            else:
                yn = advance(y, dW, A, n, 1.0, yv, S, DS)
                fac = 1.0
            if not ok(yn, cap):
                fail = n
                break
            y = yn
            xi *= fac
            pos = n - start if reverse else n + 1 - start
            traj[pos, 0] = y
            if with_jac:
                jac[pos, 0, 0] = xi
        return traj, jac, fail

    @wrap
    def step(y, dW, A, n, c):
        yv = np.zeros(1)
        S = np.zeros((1, 1))
        DS = np.zeros((1, 1, 1))
        out = np.empty(1)
        out[0] = advance(y[0], dW, A, n, c, yv, S, DS)
        return out

    return endpoint, trajectory, step
