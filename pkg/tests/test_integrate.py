import numpy as np
import pytest

from fbmsync.integrate import (ControlledPath, DimensionError, ForeignDriverError,
                               check_rough_remainder, check_young_loeve, refinement_order,
                               rough_integral, rough_sums, young_integral, young_sums)
from fbmsync.paths import GridPath, TimeGrid, lift_geometric, sample_fbm


def test_left_sum_of_t_dt():
    for n in (4, 16, 64):
        g = TimeGrid(0, 1, n)
        x = GridPath(g, g.times)
        # sum_i t_i h = (1 - h) / 2
        assert young_integral(x, x)[0] == pytest.approx(0.5 - 0.5 / n)


def test_constant_integrand_gives_increment():
    x = sample_fbm(0.7, TimeGrid(0, 1, 100), 2, 1)
    y = np.tile(np.array([[1.0, -2.0]]), (101, 1))
    assert young_integral(y, x)[0] == pytest.approx(x.values[-1] @ [1.0, -2.0])


def test_young_sums_cumulative_and_interval():
    x = sample_fbm(0.7, TimeGrid(0, 1, 50), 1, 2)
    s = young_sums(x, x)
    assert s[0, 0] == 0.0
    assert young_integral(x, x, (10, 30))[0] == pytest.approx(s[30, 0] - s[10, 0])


def test_young_shape_errors():
    x = sample_fbm(0.7, TimeGrid(0, 1, 10), 2, 2)
    with pytest.raises(DimensionError):
        young_integral(np.zeros(11), x)
    with pytest.raises(DimensionError):
        young_integral(np.zeros((5, 2)), x)
    other = sample_fbm(0.7, TimeGrid(0, 2, 10), 2, 2)
    with pytest.raises(DimensionError):
        young_integral(other, x)


def test_self_integral_converges_to_half_square():
    # Young chain rule: int x dx = x_1^2 / 2 for H > 1/2
    x = sample_fbm(0.8, TimeGrid(0, 1, 4096), 1, 3)
    exact = 0.5 * x.values[-1, 0] ** 2
    errs = [abs(young_integral(x.decimate(k), x.decimate(k))[0] - exact) for k in (16, 1)]
    assert errs[1] < errs[0]
    assert errs[1] < 0.02


def test_compensated_sum_is_exact_for_geometric_lift():
    # sum x_i dx_i + dx_i^2 / 2 telescopes to x_n^2 / 2
    x = sample_fbm(0.4, TimeGrid(0, 1, 256), 1, 4)
    lift = lift_geometric(x)
    cp = ControlledPath(x.values[:, 0], np.ones(257), x)
    assert rough_integral(cp, lift)[0] == pytest.approx(0.5 * x.values[-1, 0] ** 2, abs=1e-12)


def test_rough_integral_of_sine_controlled_path():
    # y = sin(x) with y' = cos(x); int sin(x) dx = 1 - cos(x_1)
    x = sample_fbm(0.4, TimeGrid(0, 1, 4096), 1, 5)
    lift = lift_geometric(x)
    v = x.values[:, 0]
    cp = ControlledPath(np.sin(v), np.cos(v), x)
    exact = 1 - np.cos(v[-1])
    err = abs(rough_integral(cp, lift)[0] - exact)
    plain = abs(young_integral(np.sin(v), x)[0] - exact)
    assert err < 1e-3 < plain
    assert rough_sums(cp, lift)[-1, 0] == pytest.approx(rough_integral(cp, lift)[0])


def test_two_dimensional_area_enters():
    x = sample_fbm(0.4, TimeGrid(0, 1, 64), 2, 6)
    lift = lift_geometric(x)
    # y = x^0 against dx^1 has derivative e_0 in the x^0 direction
    y = np.zeros((65, 1, 2))
    y[:, 0, 1] = x.values[:, 0]
    yp = np.zeros((65, 1, 2, 2))
    yp[:, 0, 1, 0] = 1.0
    got = rough_integral(ControlledPath(y, yp, x), lift)[0]
    assert got == pytest.approx(lift.area(0, 64)[0, 1], abs=1e-13)


def test_foreign_driver_rejected():
    x = sample_fbm(0.4, TimeGrid(0, 1, 16), 1, 1)
    other = lift_geometric(sample_fbm(0.4, TimeGrid(0, 1, 16), 1, 2))
    cp = ControlledPath(x.values[:, 0], np.ones(17), x)
    with pytest.raises(ForeignDriverError):
        rough_integral(cp, other)
    same = lift_geometric(GridPath(x.grid, x.values.copy()))
    rough_integral(cp, same)


def test_controlled_shape_validation():
    x = sample_fbm(0.4, TimeGrid(0, 1, 16), 2, 1)
    with pytest.raises(DimensionError):
        ControlledPath(np.zeros((17, 1, 2)), np.zeros((17, 1, 2, 3)), x)


def test_young_loeve_constant_small():
    x = sample_fbm(0.7, TimeGrid(0, 1, 512), 1, 0)
    rep = check_young_loeve(x, x, 1 / 0.6, 1 / 0.6)
    assert rep.passed
    assert 1.0 <= rep.admissible_C < 10
    assert rep.n_intervals > 0


@pytest.mark.parametrize("seed", [0, 2])
def test_rough_remainder_exponent(seed):
    x = sample_fbm(0.4, TimeGrid(0, 1, 4096), 1, seed)
    v = x.values[:, 0]
    rep = check_rough_remainder(ControlledPath(np.sin(v), np.cos(v), x), lift_geometric(x), 0.35)
    assert rep.passed, rep.summary()


def test_refinement_order_of_known_sequence():
    h = np.array([0.1, 0.05, 0.025, 0.0125])
    v = 1.0 + 3.0 * h ** 2
    assert refinement_order(h, v) == pytest.approx(2.0)
    assert refinement_order(h, np.ones(4)) == np.inf


def test_young_loeve_not_flagged_below_young_regime():
    # for y = x the left-point remainder is half the sum of squared steps,
    # which the p-variation product dominates whenever p <= 2
    x = sample_fbm(0.4, TimeGrid(0, 1, 1024), 1, 1)
    rep = check_young_loeve(x, x, 1 / 0.55, 1 / 0.55)
    assert rep.admissible_C == 1.0 and not rep.flagged
