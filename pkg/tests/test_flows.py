import numpy as np
import pytest

from fbmsync._flowkernels import FlowKernels
from fbmsync.flows import (Direction, FlowDivergenceError, PreconditionError, VectorFieldSpec,
                           flow_endpoints, flow_inverse_jacobian_check, frechet_remainder_check,
                           linear_field, lipschitz_dependence_check, sine_field,
                           small_interval_contraction_check, solution_pvar_bound_check,
                           solve_backward_flow, solve_forward_flow, zero_field)
from fbmsync.paths import GridPath, TimeGrid, lift_geometric, sample_fbm


def _time_path(n=1000):
    g = TimeGrid(0.0, 1.0, n)
    return GridPath(g, g.times[:, None].copy())


def test_zero_field_is_constant(fbm07):
    res = solve_forward_flow(zero_field(), fbm07, [0.3])
    assert np.all(res.trajectory.values == 0.3)


def test_linear_field_matches_exponential():
    x = _time_path()
    res = solve_forward_flow(linear_field(), x, [2.0], with_jacobian=True)
    exact = 2.0 * np.exp(x.times)
    assert np.max(np.abs(res.trajectory.values[:, 0] - exact)) < 1e-5
    assert res.end_jacobian[0, 0] == pytest.approx(np.e, rel=1e-6)


def test_backward_linear_flow():
    x = _time_path()
    res = solve_backward_flow(linear_field(), x, [np.e], with_jacobian=True)
    assert res.direction is Direction.BACKWARD
    assert res.end_state[0] == pytest.approx(1.0, rel=1e-6)
    assert res.trajectory.values[-1, 0] == np.e
    assert res.end_jacobian[0, 0] == pytest.approx(1 / np.e, rel=1e-6)


def test_roundtrip_and_inverse_jacobian(fbm07):
    rep = flow_inverse_jacobian_check(sine_field(), fbm07, [0.4], 4096)
    assert rep.passed
    assert rep.roundtrip_error < 1e-3


def test_rough_roundtrip():
    lift = lift_geometric(sample_fbm(0.4, TimeGrid(0, 1, 2048), 1, 3))
    rep = flow_inverse_jacobian_check(sine_field(), lift, [1.1], 2048, tol=1e-2)
    assert rep.passed, rep.summary()
    assert rep.roundtrip_error < 1e-2


def test_jacobian_matches_finite_differences(fbm07):
    f = sine_field()
    y0, eps = 0.9, 1e-6
    j = solve_forward_flow(f, fbm07, [y0], with_jacobian=True).end_jacobian[0, 0]
    hi = solve_forward_flow(f, fbm07, [y0 + eps]).end_state[0]
    lo = solve_forward_flow(f, fbm07, [y0 - eps]).end_state[0]
    assert j == pytest.approx((hi - lo) / (2 * eps), rel=1e-6)


def test_semigroup_is_exact(fbm07):
    f = sine_field()
    full = solve_forward_flow(f, fbm07, [0.5]).trajectory.values
    mid = solve_forward_flow(f, fbm07, [0.5], 0, 1000).end_state
    rest = solve_forward_flow(f, fbm07, mid, 1000).trajectory.values
    assert np.array_equal(full[1000:], rest)


def test_fractional_step_consistency(fbm07):
    f = sine_field()
    a, _ = flow_endpoints(f, fbm07, [[0.5]], 0, 10, frac=1.0)
    b, _ = flow_endpoints(f, fbm07, [[0.5]], 0, 11)
    assert a[0, 0] == pytest.approx(b[0, 0], abs=1e-15)
    lo, _ = flow_endpoints(f, fbm07, [[0.5]], 0, 10)
    c, _ = flow_endpoints(f, fbm07, [[0.5]], 0, 10, frac=0.5)
    assert min(lo[0, 0], b[0, 0]) < c[0, 0] < max(lo[0, 0], b[0, 0])


def test_batch_endpoints_match_trajectories(fbm07):
    f = sine_field()
    ys, js = flow_endpoints(f, fbm07, [[0.1], [2.0]], 0, 4096, with_jacobian=True)
    for row, y0 in zip(range(2), (0.1, 2.0)):
        ref = solve_forward_flow(f, fbm07, [y0], with_jacobian=True)
        assert ys[row, 0] == ref.end_state[0]
        assert js[row, 0, 0] == ref.end_jacobian[0, 0]


def test_generic_kernel_matches_scalar(fbm07):
    from fbmsync.flows import driver_steps
    f = sine_field()
    dw, fwd, _, _ = driver_steps(fbm07)
    gen = FlowKernels(f.sigma, f.dsigma, f.d2sigma, 1, 1, force_generic=True)
    assert not gen.scalar and f.kernels.scalar
    y0 = np.array([[0.7]])
    a = gen.endpoint(y0, dw, fwd, 0, 4096, 0.0, False, True, 1e8)
    b = f.kernels.endpoint(y0, dw, fwd, 0, 4096, 0.0, False, True, 1e8)
    assert a[0][0, 0] == pytest.approx(b[0][0, 0], rel=1e-13)
    assert a[1][0, 0, 0] == pytest.approx(b[1][0, 0, 0], rel=1e-12)


def test_uncompiled_field_matches_compiled():
    x = sample_fbm(0.7, TimeGrid(0, 1, 256), 2, 1)
    slow = VectorFieldSpec.from_arrays(
        2, 2, lambda y: np.diag(np.sin(y)),
        lambda y: np.einsum("ik,ij->ikj", np.eye(2), np.diag(np.cos(y))),
        lambda y: np.einsum("ik,ij,il->ikjl", np.eye(2), np.eye(2), np.diag(-np.sin(y))),
        lambda y: np.zeros((2, 2, 2, 2, 2)), 1.0)
    assert not slow.kernels.compiled
    fast = sine_field(2)
    a = solve_forward_flow(slow, x, [0.3, 1.2], with_jacobian=True)
    b = solve_forward_flow(fast, x, [0.3, 1.2], with_jacobian=True)
    assert np.allclose(a.trajectory.values, b.trajectory.values, rtol=0, atol=1e-13)
    assert np.allclose(a.jacobian, b.jacobian, rtol=0, atol=1e-12)


def test_divergence_is_reported():
    x = _time_path(100)
    big = GridPath(x.grid, 50 * x.values)
    with pytest.raises(FlowDivergenceError) as err:
        solve_forward_flow(linear_field(), big, [1.0], cap=1e6)
    assert 0 < err.value.index < 100
    assert np.all(np.isfinite(err.value.last_state))
    assert np.abs(err.value.last_state[0]) <= 1e6


def test_dimension_mismatch():
    x = sample_fbm(0.7, TimeGrid(0, 1, 16), 2, 0)
    with pytest.raises(ValueError):
        solve_forward_flow(sine_field(1), x, [0.0])


def test_frechet_order(fbm07):
    rep = frechet_remainder_check(sine_field(), fbm07, [0.5], [0.1], n_scales=4)
    assert rep.fitted_order >= 1.8, rep.summary()
    zero = frechet_remainder_check(sine_field(), fbm07, [0.5], [0.0])
    assert zero.fitted_order == np.inf


def test_lipschitz_and_pvar_bounds(fbm07):
    f = sine_field()
    assert lipschitz_dependence_check(f, fbm07, [0.2], [0.3]).passed
    assert solution_pvar_bound_check(f, fbm07, [0.2]).passed


def test_contraction_precondition(fbm07):
    f = sine_field()
    with pytest.raises(PreconditionError):
        small_interval_contraction_check(f, fbm07, [0.2], [0.3], (0, 4096))
    rep = small_interval_contraction_check(f, fbm07, [0.2], [0.3], (100, 101))
    assert rep.passed, rep.summary()


def test_with_bound_shares_kernels():
    f = sine_field()
    k = f.kernels
    g = f.with_bound(3.0)
    assert g.c_sigma == 3.0 and g.kernels is k
