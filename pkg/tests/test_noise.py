import numpy as np
import pytest

from spde_reduce.field import Field, Grid1D, inner_product, mode_matrix
from spde_reduce.noise import QWienerSpec, apply_Q, covariance_check, sample_increment, stream


def test_stream_reproducible_and_order_free():
    a = stream(5, 3).standard_normal(4)
    stream(5, 0).standard_normal(100)
    b = stream(5, 3).standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, stream(5, 4).standard_normal(4))


def test_stream_chunking_invariant():
    whole = stream(1, 0).standard_normal((10, 3))
    g = stream(1, 0)
    parts = np.concatenate([g.standard_normal((4, 3)), g.standard_normal((6, 3))])
    assert np.array_equal(whole, parts)


def test_spec_rejects_non_orthonormal(dirichlet_grid):
    modes = mode_matrix(dirichlet_grid, 3) * 1.1
    with pytest.raises(ValueError):
        QWienerSpec(modes, [1, 1, 1], grid=dirichlet_grid)
    with pytest.raises(ValueError):
        QWienerSpec(mode_matrix(dirichlet_grid, 3), [1, -1, 1], grid=dirichlet_grid)
    with pytest.raises(ValueError):
        QWienerSpec(mode_matrix(dirichlet_grid, 3), [1, 1], grid=dirichlet_grid)


def test_homogeneous_noise_is_brownian_constant(neumann_grid):
    spec = QWienerSpec.homogeneous(neumann_grid)
    inc = sample_increment(spec, 0.01, stream(0))
    vals = inc.as_field.values
    assert np.allclose(vals, vals[0])
    f = Field.from_function(neumann_grid, np.sin)
    g = Field.from_function(neumann_grid, lambda x: x)
    one = Field.from_function(neumann_grid, lambda x: 1 + 0 * x)
    # <f, Q g> = int f * int g
    assert spec.pairing(f.values, g.values) == pytest.approx(inner_product(f, one) * inner_product(g, one))


def test_apply_Q_matches_pairing(dirichlet_grid):
    spec = QWienerSpec(mode_matrix(dirichlet_grid, 5), [1, 0.5, 0.25, 2, 0], grid=dirichlet_grid)
    f = Field.from_function(dirichlet_grid, lambda x: x * (1 - x))
    g = Field.from_function(dirichlet_grid, lambda x: np.exp(x))
    assert inner_product(f, apply_Q(spec, g)) == pytest.approx(spec.pairing(f.values, g.values), rel=1e-12)


def test_trace_density_white(dirichlet_grid):
    spec = QWienerSpec.white(dirichlet_grid, 4)
    assert np.allclose(spec.trace_density(), np.sum(spec.mode_array**2, axis=0))


def test_increment_variance():
    grid = Grid1D(0, 1, 33)
    spec = QWienerSpec.white(grid, 3, amplitude=2.0)
    d = spec.draw(stream(2), 0.1, 200_000)
    assert np.allclose(d.var(axis=0), 0.4, rtol=0.02)


def test_covariance_check(dirichlet_grid):
    spec = QWienerSpec.white(dirichlet_grid, 8)
    f = Field.from_function(dirichlet_grid, lambda x: np.sin(np.pi * x) + x)
    g = Field.from_function(dirichlet_grid, lambda x: np.cos(3 * x))
    rep = covariance_check(spec, f, g, 0.01, 20_000, seed=4)
    assert rep.z_score <= 5


def test_covariance_check_minimum_samples(dirichlet_grid):
    spec = QWienerSpec.white(dirichlet_grid, 2)
    f = Field.zeros(dirichlet_grid)
    with pytest.raises(ValueError):
        covariance_check(spec, f, f, 0.1, 10, seed=0)


def test_sample_increment_rejects_bad_dt(dirichlet_grid):
    with pytest.raises(ValueError):
        sample_increment(QWienerSpec.white(dirichlet_grid, 2), 0.0, stream(0))
