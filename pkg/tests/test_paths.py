import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fbmsync.paths import (FactorizationError, GridPath, HurstParam, Regime, RoughLift,
                           TimeGrid, fbm_covariance, fgn_autocovariance, lift_geometric,
                           read_path_csv, sample_fbm)


def test_grid_basics():
    g = TimeGrid(0.0, 2.0, 8)
    assert g.h == 0.25
    assert g.times[-1] == 2.0
    assert g.sub(2, 6) == TimeGrid(0.5, 1.5, 4)
    assert g.coarsen(4) == TimeGrid(0.0, 2.0, 2)
    with pytest.raises(ValueError):
        g.coarsen(3)


@pytest.mark.parametrize("bad", [(0.0, 1.0, 0), (1.0, 1.0, 4), (0.0, 1.0, 2.5)])
def test_grid_rejects(bad):
    with pytest.raises(ValueError):
        TimeGrid(*bad)


def test_hurst_regimes():
    assert HurstParam(0.7).regime is Regime.YOUNG
    assert HurstParam(0.5).regime is Regime.ROUGH
    assert HurstParam(0.4).regime is Regime.ROUGH
    for h in (0.3, 1.0, 0.0):
        with pytest.raises(ValueError):
            HurstParam(h)


def test_values_are_read_only():
    p = GridPath(TimeGrid(0, 1, 2), [0.0, 1.0, 0.5])
    assert p.values.shape == (3, 1)
    with pytest.raises(ValueError):
        p.values[0, 0] = 3.0


def test_autocovariance_brownian_case():
    # H = 1/2 gives white noise
    g = fgn_autocovariance(0.5, 5)
    assert np.allclose(g, [1, 0, 0, 0, 0])


def test_fbm_covariance_formula():
    assert fbm_covariance(0.7, 1.0, 1.0) == pytest.approx(1.0)
    assert fbm_covariance(0.5, 0.3, 0.8) == pytest.approx(0.3)


@pytest.mark.parametrize("n", [64, 2048])
def test_sample_covariance_monte_carlo(n):
    # both the Cholesky (n <= 1024) and circulant branches
    grid = TimeGrid(0.0, 1.0, n)
    reps = 4000
    idx = [n // 4, n // 2, n]
    samples = np.array([sample_fbm(0.7, grid, 1, s).values[idx, 0] for s in range(reps)])
    emp = samples.T @ samples / reps
    t = grid.times[idx]
    exact = fbm_covariance(0.7, t[:, None], t[None, :])
    assert np.max(np.abs(emp - exact)) < 0.08


def test_sample_deterministic_and_starts_at_zero():
    g = TimeGrid(0, 1, 100)
    a, b = sample_fbm(0.4, g, 2, 7), sample_fbm(0.4, g, 2, 7)
    assert np.array_equal(a.values, b.values)
    assert np.all(a.values[0] == 0)
    assert not np.array_equal(a.values, sample_fbm(0.4, g, 2, 8).values)


def test_sample_rejects_bad_arguments():
    g = TimeGrid(0, 1, 10)
    with pytest.raises(ValueError):
        sample_fbm(0.7, g, 0, 1)
    with pytest.raises(ValueError):
        sample_fbm(0.7, g, 1, -1)
    assert issubclass(FactorizationError, ValueError)


def _brute_area(x, i, j):
    # sum over steps of (x_k - x_i) (x) dx_k + dx_k (x) dx_k / 2
    d = x.shape[1]
    a = np.zeros((d, d))
    for k in range(i, j):
        dx = x[k + 1] - x[k]
        a += np.outer(x[k] - x[i], dx) + 0.5 * np.outer(dx, dx)
    return a


def test_lift_matches_brute_force_areas():
    path = sample_fbm(0.4, TimeGrid(0, 1, 20), 3, 1)
    lift = lift_geometric(path)
    x = path.values
    for i, j in [(0, 20), (3, 9), (5, 6), (7, 7)]:
        assert np.allclose(lift.area(i, j), _brute_area(x, i, j), atol=1e-14)


def test_dense_and_on_demand_agree():
    path = sample_fbm(0.4, TimeGrid(0, 1, 1500), 2, 3)
    lift = lift_geometric(path)
    assert not lift.is_dense
    small = lift_geometric(path.restrict(0, 1000))
    assert small.is_dense
    for i, j in [(0, 1000), (17, 640), (999, 1000)]:
        assert np.allclose(lift.area(i, j), small.area(i, j), atol=1e-12)


def test_chen_and_symmetric_part():
    lift = lift_geometric(sample_fbm(0.35, TimeGrid(0, 1, 64), 2, 5))
    assert lift.chen_residual() <= 1e-12
    assert lift.symmetric_residual() <= 1e-12


def test_nongeometric_lift_breaks_symmetry():
    path = sample_fbm(0.4, TimeGrid(0, 1, 16), 2, 5)
    lift = RoughLift(path, np.zeros((16, 2, 2)))
    assert lift.symmetric_residual() > 1e-3
    assert lift.chen_residual() <= 1e-12  # Chen holds for any step areas


def test_lift_shape_validation():
    path = sample_fbm(0.4, TimeGrid(0, 1, 4), 2, 0)
    with pytest.raises(ValueError):
        RoughLift(path, np.zeros((3, 2, 2)))


def test_csv_round_trip(tmp_path):
    path = sample_fbm(0.7, TimeGrid(0, 1, 50), 2, 11)
    f = tmp_path / "p.csv"
    path.to_csv(f)
    back = read_path_csv(f)
    assert np.array_equal(back.values, path.values)
    lift = lift_geometric(path)
    lift.to_csv(tmp_path / "a.csv")
    rows = np.loadtxt(tmp_path / "a.csv", delimiter=",", skiprows=1)
    assert rows.shape == (50, 6)
    assert np.array_equal(rows[:, 2:].reshape(50, 2, 2), lift.step_areas)


def test_fingerprint_tracks_content():
    g = TimeGrid(0, 1, 10)
    a = sample_fbm(0.7, g, 1, 0)
    b = GridPath(g, a.values.copy())
    assert a.fingerprint == b.fingerprint
    assert a.fingerprint != sample_fbm(0.7, g, 1, 1).fingerprint


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 30), st.integers(1, 3), st.integers(0, 2 ** 32))
def test_running_area_recovers_pairs(n, d, seed):
    rng = np.random.default_rng(seed)
    path = GridPath(TimeGrid(0, 1, n), rng.standard_normal((n + 1, d)))
    lift = lift_geometric(path)
    j = n
    got = lift.areas_ending_at(j, np.arange(j + 1))
    for s in range(j + 1):
        assert np.allclose(got[s], _brute_area(path.values, s, j), atol=1e-10)
