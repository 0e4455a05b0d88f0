import math

import numpy as np
import pytest

from weldlab.errors import OutOfRange
from weldlab.field import BoundaryFieldGrid, NeumannModel, default_grid, dyadic_scales, sample_field
from weldlab.measures import (
    BoundaryMeasure,
    cell_edges,
    critical_density,
    critical_measure,
    interval_mass,
    normalized_subcritical,
    quantum_points,
    subcritical_density,
    subcritical_measure,
    truncated_density,
    truncated_derivative_measure,
    truncation_indicator,
    uniform_measure,
)
from weldlab.rng import RngStream


def _flat_field(value=0.0, n=16, j_max=4):
    xs = default_grid(n, 1.0)
    scales = dyadic_scales(0, j_max)
    return BoundaryFieldGrid(xs, scales, np.full((scales.size, xs.size), value))


# -- densities ---------------------------------------------------------------------


def test_subcritical_density_closed_form():
    h = np.array([-1.0, 0.0, 2.0])
    eps = 2.0**-5
    assert np.allclose(subcritical_density(h, 1.2, eps), np.exp(0.6 * h) * eps**0.36)


def test_subcritical_density_unbiased_under_gaussian():
    # E exp(gamma h / 2) = eps^{-gamma^2/4} when Var h = 2 log(1/eps)
    eps, g = 2.0**-6, 1.0
    gen = np.random.default_rng(0)
    h = math.sqrt(2 * math.log(1 / eps)) * gen.standard_normal(200_000)
    d = subcritical_density(h, g, eps)
    assert d.mean() == pytest.approx(1.0, abs=5 * d.std() / math.sqrt(d.size))


def test_critical_density_is_minus_gamma_derivative_at_two():
    h = np.linspace(-3, 3, 7)
    eps, dg = 2.0**-8, 1e-6
    deriv = (subcritical_density(h, 2.0, eps) - subcritical_density(h, 2.0 - dg, eps)) / dg
    assert np.allclose(critical_density(h, eps), -deriv, rtol=1e-4)


def test_truncation_indicator_scalewise():
    scales = dyadic_scales(0, 2)
    beta = 1.0
    ok = np.zeros((3, 1))
    assert truncation_indicator(ok, scales, beta, 0.25).all()
    # at delta = 1/2 the threshold on h/2 is log 2 + beta
    bad = ok.copy()
    bad[1, 0] = 2 * (math.log(2) + beta) + 1e-9
    assert not truncation_indicator(bad, scales, beta, 0.25).any()
    edge = ok.copy()
    edge[1, 0] = 2 * (math.log(2) + beta) - 1e-9
    assert truncation_indicator(edge, scales, beta, 0.25).all()


def test_truncation_needs_dyadic_scales():
    with pytest.raises(ValueError):
        truncation_indicator(np.zeros((2, 1)), np.array([1.0, 0.25]), 1.0, 0.25)


def test_truncated_density_value():
    scales = dyadic_scales(0, 3)
    v = np.zeros((4, 2))
    v[:, 1] = 100.0  # killed
    d = truncated_density(v, scales, 2.0, 0.125)
    assert d[0] == pytest.approx((math.log(8) + 2.0) * 0.125)
    assert d[1] == 0.0


def test_interval_mass_partial_cells():
    edges = np.array([0.0, 1.0, 2.0, 3.0])
    dens = np.array([[1.0, 2.0, 3.0]])
    assert interval_mass(edges, dens, 0.5, 2.5)[0] == pytest.approx(0.5 + 2.0 + 1.5)


# -- BoundaryMeasure ----------------------------------------------------------------------


def test_uniform_cdf_and_quantile():
    m = uniform_measure(-1.0, 3.0, 40, density=0.5)
    assert m.total == pytest.approx(2.0)
    assert m.cdf(1.0) == pytest.approx(1.0)
    assert m.quantile(0.25) == pytest.approx(-0.5)
    assert m.mass(0.0, 2.0) == pytest.approx(1.0)


def test_quantile_inverts_cdf():
    gen = np.random.default_rng(1)
    m = BoundaryMeasure(np.linspace(0, 1, 51), gen.uniform(0.1, 2.0, 50))
    x = np.linspace(0, 1, 33)
    assert np.allclose(m.quantile(m.cdf(x)), x)


def test_quantile_is_left_inverse_on_gaps():
    m = BoundaryMeasure(np.array([0.0, 1.0, 2.0, 3.0]), np.array([1.0, 0.0, 1.0]))
    assert m.quantile(1.0) == pytest.approx(1.0)
    assert m.quantile(1.0 + 1e-9) == pytest.approx(2.0, abs=1e-6)


def test_quantile_out_of_range():
    with pytest.raises(OutOfRange):
        uniform_measure(0, 1, 4).quantile(1.5)


def test_negative_density_rules():
    with pytest.raises(ValueError):
        BoundaryMeasure(np.array([0.0, 1.0]), np.array([-1.0]), kind="subcritical")
    signed = BoundaryMeasure(np.array([0.0, 1.0, 2.0]), np.array([-1.0, 2.0]), kind="critical")
    assert signed.signed and signed.negative_cells.tolist() == [0]
    with pytest.raises(ValueError):
        signed.quantile(0.1)


def test_measure_validation():
    with pytest.raises(ValueError):
        BoundaryMeasure(np.array([0.0, 1.0]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        BoundaryMeasure(np.array([1.0, 0.0]), np.array([1.0]))
    with pytest.raises(ValueError):
        BoundaryMeasure(np.array([0.0, 1.0]), np.array([np.nan]))


def test_csv_exports():
    m = uniform_measure(0, 1, 2)
    assert m.to_csv().splitlines()[0] == "cell_left,cell_right,density"
    assert m.cumulative_csv().splitlines()[-1].startswith("1.0,1.0")


def test_quantum_points_symmetric_uniform():
    m = uniform_measure(-2.0, 2.0, 64)
    x, y = quantum_points(m, np.array([0.5, 1.0, 2.0]))
    assert np.allclose(x, [0.5, 1.0, 2.0]) and np.allclose(y, [-0.5, -1.0, -2.0])
    with pytest.raises(OutOfRange):
        quantum_points(m, 2.5)


# -- constructors on fields ------------------------------------------------------------


def test_flat_field_measures():
    f = _flat_field(0.0)
    eps = 2.0**-4
    assert np.allclose(subcritical_measure(f, 1.0, eps).density, eps**0.25)
    assert np.allclose(critical_measure(f, eps).density, math.log(16) * eps)
    t = truncated_derivative_measure(f, 3.0, eps)
    assert np.allclose(t.density, (math.log(16) + 3.0) * eps)


def test_normalized_subcritical_factor():
    f = _flat_field(0.3)
    a = normalized_subcritical(f, 1.5, 2.0**-4)
    b = subcritical_measure(f, 1.5, 2.0**-4)
    assert np.allclose(a.density * (4 - 2 * 1.5), b.density)


def test_constructor_validation():
    f = _flat_field()
    with pytest.raises(ValueError):
        subcritical_measure(f, 2.0, 0.5)
    with pytest.raises(ValueError):
        subcritical_measure(f, 1.0, 2.0**-9)
    with pytest.raises(ValueError):
        truncated_derivative_measure(f, -1.0, 0.5)


def test_truncated_mass_nonnegative_on_sampled_field():
    f = sample_field(default_grid(256, 2.0), dyadic_scales(0, 8), NeumannModel(), RngStream(2))
    m = truncated_derivative_measure(f, 5.0, 2.0**-8)
    assert np.all(m.density >= 0)
    assert np.allclose(m.cdf(f.xs[-1] + 0.5 * (f.xs[1] - f.xs[0])), m.total)


def test_cell_edges_contain_centres():
    xs = default_grid(10, 1.0)
    e = cell_edges(xs)
    assert np.all(e[:-1] < xs) and np.all(xs < e[1:])
    assert e[0] == pytest.approx(-1.0) and e[-1] == pytest.approx(1.0)
