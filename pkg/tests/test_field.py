import math

import numpy as np
import pytest

from weldlab.field import (
    BoundaryFieldGrid,
    BulkField,
    CovarianceSpec,
    NeumannModel,
    add_constant,
    check_scales,
    default_grid,
    dyadic_scales,
    neumann_noise_batch,
    push_field,
    radial_part,
    sample_field,
)
from weldlab.rng import RngStream

SPEC = CovarianceSpec()


# -- kernel identities (exact oracles) ---------------------------------------


@pytest.mark.parametrize("j", [0, 1, 4, 8, 12, 16])
def test_diagonal_variance_dyadic(j):
    eps = 2.0**-j
    assert SPEC.covariance(0.0, eps) == pytest.approx(2 * math.log(1 / eps), abs=1e-12)


@pytest.mark.parametrize("k", [1, 3, 5, 7, 29])
def test_diagonal_variance_quarter_dyadic(k):
    eps = 2.0 ** (-k / 4)
    assert SPEC.covariance(0.0, eps) == pytest.approx(2 * math.log(1 / eps), abs=1e-12)


def test_long_range_covariance_is_minus_two_log():
    r = np.geomspace(2e-3, 0.3, 25)
    cov = SPEC.covariance(r, 2.0**-14)
    # layered kernel ripples around -2 log r by a few hundredths
    assert np.max(np.abs(cov + 2 * np.log(r))) < 0.05


def test_kappa0_adds_constant():
    spec = CovarianceSpec(kappa0=1.5)
    r = np.array([0.0, 0.1, 1.0])
    assert np.allclose(spec.covariance(r, 2.0**-6) - SPEC.covariance(r, 2.0**-6), 1.5)


def test_bad_spec_rejected():
    with pytest.raises(ValueError):
        CovarianceSpec(kappa0=-1)
    with pytest.raises(ValueError):
        CovarianceSpec(sublayers=0)


# -- scales and grids -----------------------------------------------------------


def test_check_scales_accepts_dyadic_and_quarter():
    assert np.allclose(check_scales(dyadic_scales(0, 4)), [1, 0.5, 0.25, 0.125, 0.0625])
    q = 2.0 ** (-np.arange(9) / 4)
    assert np.allclose(check_scales(q, 4), q)


@pytest.mark.parametrize("bad", [[0.3], [0.5, 1.0], [2.0], [0.5, 0.5]])
def test_check_scales_rejects(bad):
    with pytest.raises(ValueError):
        check_scales(bad)


def test_quarter_scales_need_resolution():
    with pytest.raises(ValueError):
        check_scales([2.0**-0.25])


def test_default_grid_symmetric_cell_centres():
    xs = default_grid(8, 2.0)
    assert np.allclose(xs, -xs[::-1])
    assert np.allclose(np.diff(xs), 0.5)
    assert xs[0] == pytest.approx(-1.75)


# -- grid sampler statistics ----------------------------------------------------------


def test_neumann_variance_and_covariance_match_kernel():
    xs = default_grid(256, 2.0)
    scales = dyadic_scales(0, 8)
    v = neumann_noise_batch(xs, scales, SPEC, 3000, RngStream(11))
    i, j = 128, 128 + 13  # distance 13 * 1/64
    for k, eps in enumerate(scales):
        var = v[:, k, i].var()
        target = 2 * math.log(1 / eps)
        se = math.sqrt(2 / 3000) * max(target, 0.05)
        assert abs(var - target) < 5 * se + 1e-12
    prod = v[:, -1, i] * v[:, -1, j]
    target = SPEC.covariance(xs[j] - xs[i], scales[-1])
    assert abs(prod.mean() - target) < 5 * prod.std() / math.sqrt(prod.size)


def test_scale_increments_are_independent():
    xs = default_grid(128, 2.0)
    scales = dyadic_scales(0, 8)
    v = neumann_noise_batch(xs, scales, SPEC, 4000, RngStream(3))
    coarse, fine = v[:, 3, 64], v[:, 8, 64] - v[:, 3, 64]
    assert abs(np.corrcoef(coarse, fine)[0, 1]) < 4 / math.sqrt(4000)


def test_kappa0_constant_variance_and_toggle():
    xs = default_grid(64, 2.0)
    spec = CovarianceSpec(kappa0=2.0)
    with_c = neumann_noise_batch(xs, [1.0], spec, 4000, RngStream(5))
    without = neumann_noise_batch(xs, [1.0], spec, 4000, RngStream(5), constant=False)
    diff = with_c[:, 0, 0] - without[:, 0, 0]
    assert np.allclose(diff[:, None], with_c[:, 0, :] - without[:, 0, :])
    assert diff.var() == pytest.approx(2.0, rel=0.1)


def test_sampler_reproducible_and_streams_differ():
    xs = default_grid(64, 2.0)
    a = neumann_noise_batch(xs, [1.0, 0.5], SPEC, 3, RngStream(1, 2))
    b = neumann_noise_batch(xs, [1.0, 0.5], SPEC, 3, RngStream(1, 2))
    c = neumann_noise_batch(xs, [1.0, 0.5], SPEC, 3, RngStream(1, 3))
    assert np.array_equal(a, b)
    assert not np.allclose(a, c)


# -- BoundaryFieldGrid ------------------------------------------------------------------


def _field(seed=0):
    return sample_field(default_grid(64, 2.0), dyadic_scales(0, 4), NeumannModel(), RngStream(seed))


def test_evaluate_interpolates_grid_values():
    f = _field()
    assert np.allclose(f.evaluate(f.xs, 0.25), f.at_scale(0.25))
    mid = 0.5 * (f.xs[10] + f.xs[11])
    expect = 0.5 * (f.at_scale(0.5)[10] + f.at_scale(0.5)[11])
    assert f.evaluate(mid, 0.5) == pytest.approx(expect)


def test_evaluate_rejects_out_of_range():
    f = _field()
    with pytest.raises(ValueError):
        f.evaluate(5.0, 0.5)
    with pytest.raises(ValueError):
        f.evaluate(0.0, 2.0**-6)
    with pytest.raises(ValueError):
        f.evaluate(0.1 + 0.5j, 0.5)


def test_field_shape_validation():
    with pytest.raises(ValueError):
        BoundaryFieldGrid(np.arange(4.0), np.array([1.0]), np.zeros((2, 4)))


def test_ndjson_round_trip():
    f = _field()
    g = BoundaryFieldGrid.from_ndjson(f.to_ndjson())
    assert np.array_equal(f.xs, g.xs)
    assert np.array_equal(f.values, g.values)


def test_radial_part_shifts_with_constant():
    f = _field()
    a, b = radial_part(f), radial_part(add_constant(f, 1.25))
    assert np.allclose(b.values - a.values, 1.25)
    assert np.all(np.diff(a.times) > 0)


def test_push_field_identity_map():
    f = _field()
    g = push_field(f, lambda x: x, lambda x: np.ones_like(x), f.xs, f.scales, Q=2.0)
    assert np.allclose(g.values, f.values)


def test_push_field_dilation_adds_q_log():
    f = _field()
    xs = f.xs[np.abs(f.xs) < 0.9]
    g = push_field(f, lambda x: 2 * x, lambda x: 2 * np.ones_like(x), xs, f.scales[1:], Q=2.0)
    # h2_eps(x) = h_{2 eps}(2x) + 2 log 2
    expect = f.evaluate(2 * xs, 2 * 0.25) + 2 * math.log(2)
    assert np.allclose(g.at_scale(0.25), expect)


# -- bulk evaluation ------------------------------------------------------------------


def test_bulk_consistent_across_query_order():
    b = BulkField(rng=RngStream(4))
    z = np.array([0.1 + 0.2j, -0.3 + 0.05j, 0.7 + 0j])
    one = b.evaluate(z, 2.0**-6)
    rev = b.evaluate(z[::-1], 2.0**-6)[::-1]
    single = np.array([b.evaluate(np.array([w]), 2.0**-6)[0] for w in z])
    assert np.allclose(one, rev) and np.allclose(one, single)


def test_bulk_boundary_variance():
    eps = 2.0**-5
    vals = np.array([BulkField(rng=RngStream(9, i)).evaluate(np.array([0.0 + 0j]), eps)[0] for i in range(600)])
    target = 2 * math.log(1 / eps)
    assert vals.var() == pytest.approx(target, rel=5 * math.sqrt(2 / 600))


def test_bulk_rejects_lower_half_plane():
    with pytest.raises(ValueError):
        BulkField().evaluate(np.array([0.1 - 0.2j]), 0.5)
