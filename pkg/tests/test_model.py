import numpy as np
import pytest

from fbmsync.flows import VectorFieldSpec, linear_field, sine_field
from fbmsync.model import (DOUBLE_WELL_D1, DriftSpec, SyncBoundParams, averaged_drift,
                           check_a1, check_a2, double_well, estimate_sup_constant,
                           linear_drift, probe_points)


def test_double_well_constant_is_tight():
    r = np.linspace(0, 3, 300001)
    assert np.max(2 * r - r ** 3) == pytest.approx(DOUBLE_WELL_D1, rel=1e-9)


def test_a1_double_well_passes():
    rep = check_a1(double_well())
    assert rep.passed, rep.summary()
    assert rep.dissipative_margin < 1e-3


def test_a1_understated_d1_fails():
    dw = double_well()
    bad = DriftSpec(1, dw.f, d1=1.0, d2=1.0, c_fg=0.0)
    rep = check_a1(bad)
    assert not rep.passed
    assert abs(abs(rep.worst_dissipative_point[0]) - np.sqrt(2 / 3)) < 0.05


def test_a1_rotation_needs_perpendicular_constant():
    rot = np.array([[-1.0, -2.0], [2.0, -1.0]])
    f = lambda y: rot @ y
    assert not check_a1(DriftSpec(2, f, 0.0, 1.0, 1.0)).passed
    assert check_a1(DriftSpec(2, f, 0.0, 1.0, 2.0)).passed


def test_a2():
    assert check_a2(sine_field()).passed
    assert not check_a2(sine_field().with_bound(0.5)).passed
    assert not check_a2(linear_field()).passed


def test_a2_multidimensional_sine():
    rep = check_a2(sine_field(2))
    assert rep.passed
    assert rep.max_bound == pytest.approx(1.0, abs=1e-3)


@pytest.mark.parametrize("radius,expected", [
    (2.0, 12.0),
    (0.8, 4 / (3 * np.sqrt(3))),
])
def test_sup_constant_against_closed_form(radius, expected):
    dw = double_well()
    assert estimate_sup_constant(dw, dw, radius) == pytest.approx(expected, rel=1e-9)


def test_sup_constant_linear_pair():
    assert estimate_sup_constant(linear_drift(1.0), linear_drift(3.0), 2.0) == pytest.approx(8.0)


def test_averaged_drift():
    f, g = linear_drift(1.0), linear_drift(3.0)
    a = averaged_drift(f, g)
    assert a(np.array([2.0]))[0] == pytest.approx(-4.0)
    assert a.d2 == 2.0
    assert averaged_drift(f, f) is f
    assert check_a1(a).passed


def test_probe_points_include_axes():
    pts = probe_points(2, 5.0, 100, 0)
    assert np.any(np.all(pts == 0, axis=1))
    assert np.any(np.all(pts == [5.0, 0.0], axis=1))
    assert np.max(np.linalg.norm(pts, axis=1)) <= 5.0 + 1e-12


@pytest.mark.parametrize("kw", [dict(lam=1.0), dict(delta_lambda=0.0), dict(cbar_lambda=-1.0),
                                dict(c_fg_sup=-1.0), dict(radius=0.0)])
def test_bound_params_validation(kw):
    base = dict(lam=0.5, delta_lambda=1.0, cbar_lambda=1.0, c_fg_sup=0.0, radius=1.0)
    base.update(kw)
    with pytest.raises(ValueError):
        SyncBoundParams(**base)


def test_drift_validation():
    with pytest.raises(ValueError):
        DriftSpec(1, lambda y: -y, d1=0.0, d2=0.0, c_fg=0.0)
    with pytest.raises(ValueError):
        VectorFieldSpec(0, 1, None, None, None, None, 1.0)
