import math

import numpy as np
import pytest

from weldlab.errors import RangeExhausted
from weldlab.field import BoundaryFieldGrid, default_grid, dyadic_scales, radial_part
from weldlab.measures import truncated_derivative_measure
from weldlab.rng import RngStream
from weldlab.wedges import (
    Q_of,
    _crossing,
    check_parameters,
    radial_batch,
    radial_grid,
    reparametrise,
    rescale_field,
    sample_radial,
    sample_wedge,
    strip_halfplane_change,
    zoom_scale,
)


def test_q_values():
    assert Q_of(2.0) == 2.0
    assert Q_of(1.0) == 2.5
    with pytest.raises(ValueError):
        Q_of(0.0)


def test_parameter_range():
    assert check_parameters(2.0, 2.0) == 2.0
    assert check_parameters(2.0, 1.0) == 2.0
    with pytest.raises(ValueError):
        check_parameters(2.0, 2.5)
    with pytest.raises(ValueError):
        check_parameters(1.0, 2.5)
    with pytest.raises(ValueError):
        check_parameters(2.5, 0.0)


def test_radial_grid_contains_zero():
    s = radial_grid(-1.0, 1.0)
    assert np.any(s == 0.0)
    assert np.allclose(np.diff(s), 2.0**-8)
    assert s[0] <= -1.0 and s[-1] >= 1.0


def test_radial_needs_zero_on_grid():
    with pytest.raises(ValueError):
        radial_batch(2.0, 1.0, "last-exit", np.linspace(0.1, 1, 5), 1, 0)


# -- radial laws against closed forms ------------------------------------------------

N = 4000


@pytest.fixture(scope="module")
def last_exit_21():
    s = radial_grid(-1.0, 1.0, ds=2.0**-6)
    return s, radial_batch(2.0, 1.0, "last-exit", s, N, RngStream(21))


def test_last_exit_left_is_drifted_bm(last_exit_21):
    s, v = last_exit_21
    k = int(np.argmin(np.abs(s + 1.0)))  # s = -1
    x = v[:, k]
    assert x.mean() == pytest.approx(-1.0, abs=5 * math.sqrt(2 / N))
    assert x.var() == pytest.approx(2.0, abs=5 * 2 * math.sqrt(2 / N))


def test_last_exit_right_second_moment(last_exit_21):
    # Q s - rad = |3-d BM of speed 2 with drift Q - alpha|: E X_1^2 = 6 + 1
    s, v = last_exit_21
    x = 2.0 * s[-1] - v[:, -1]
    se = (x**2).std() / math.sqrt(N)
    assert (x**2).mean() == pytest.approx(7.0, abs=5 * se)


def test_last_exit_invariant_and_zero(last_exit_21):
    s, v = last_exit_21
    assert np.all(v[:, s == 0.0] == 0.0)
    assert np.all(v[:, s > 0] < 2.0 * s[s > 0])


def test_critical_22_right_is_bessel():
    s = radial_grid(0.0, 1.0, ds=2.0**-6)
    v = radial_batch(2.0, 2.0, "last-exit", s, N, RngStream(3))
    x = 2.0 * s[-1] - v[:, -1]
    se = (x**2).std() / math.sqrt(N)
    assert (x**2).mean() == pytest.approx(6.0, abs=5 * se)


def test_unit_circle_right_is_drifted_bm():
    s = radial_grid(-0.5, 1.0, ds=2.0**-6)
    v = radial_batch(2.0, 1.0, "unit-circle", s, N, RngStream(4))
    assert v[:, -1].mean() == pytest.approx(1.0, abs=5 * math.sqrt(2 / N))
    assert np.all(v[:, s < 0] > 2.0 * s[s < 0])


def test_strip_radial_is_shifted():
    s = radial_grid(-1.0, 1.0)
    a = sample_radial(2.0, 1.0, "last-exit", s, RngStream(5))
    b = sample_radial(2.0, 1.0, "strip", s, RngStream(5))
    assert np.allclose(b.values, a.values - 2.0 * s)


# -- wedge samples -------------------------------------------------------------------------


@pytest.fixture(scope="module")
def wedge():
    return sample_wedge(2.0, 1.0, "last-exit", xs=default_grid(512, 2.0), scales=dyadic_scales(0, 8),
                        rng=RngStream(6))


def test_radial_part_recovers_radial(wedge):
    rp = radial_part(wedge.field)
    ok = np.exp(-rp.times) >= wedge.field.scales.min()
    assert np.allclose(rp.values[ok], wedge.radial.at(rp.times[ok]))


def test_wedge_reproducible():
    kw = dict(xs=default_grid(64, 2.0), scales=dyadic_scales(0, 4))
    a = sample_wedge(2.0, 1.0, rng=RngStream(8, 1), **kw)
    b = sample_wedge(2.0, 1.0, rng=RngStream(8, 1), **kw)
    assert np.array_equal(a.field.values, b.field.values)


def test_reparametrise_round_trip(wedge):
    uc = reparametrise(wedge, "unit-circle")
    s = uc.radial.times
    assert np.all(uc.radial.values[s < 0] > 2.0 * s[s < 0])
    back = reparametrise(uc, "last-exit")
    assert back.radial.meta["shift"] == pytest.approx(-uc.radial.meta["shift"], abs=2.0**-7)


def test_strip_change_round_trip(wedge):
    st = strip_halfplane_change(wedge, "to-strip")
    hp = strip_halfplane_change(st, "to-halfplane")
    assert np.allclose(hp.radial.values, wedge.radial.values)
    with pytest.raises(ValueError):
        strip_halfplane_change(wedge, "to-halfplane")


def test_rescale_constant_field():
    xs = default_grid(64, 2.0)
    scales = dyadic_scales(0, 3)
    f = BoundaryFieldGrid(xs, scales, np.full((4, 64), 0.7))
    g = rescale_field(f, 0.5, 2.0)
    assert np.allclose(g.values[1:], 0.7 + 2.0 * math.log(0.5))
    assert g.xs.size == 64


def test_crossing_interpolates():
    s = np.array([0.0, 1.0, 2.0, 3.0])
    d = np.array([-1.0, 1.0, -1.0, -2.0])
    assert _crossing(s, d, "last") == pytest.approx(1.5)
    assert _crossing(s, np.array([2.0, 1.0, -1.0, -2.0]), "first") == pytest.approx(1.5)
    with pytest.raises(RangeExhausted):
        _crossing(s, np.array([-1.0, -1.0, -1.0, 1.0]), "last")


def test_zoom_scale_gives_unit_mass(wedge):
    g, r = zoom_scale(wedge.field, C=0.0, eps=2.0**-8)
    m = truncated_derivative_measure(g, 5.0, 2.0**-8).mass(0.0, 1.0)
    assert m == pytest.approx(1.0, abs=1e-6)
    assert r > 0
