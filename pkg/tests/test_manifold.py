import numpy as np
import pytest

from spde_reduce.exceptions import DegeneracyError, OutOfTubeError
from spde_reduce.field import Grid1D, gram_matrix, pair
from spde_reduce.manifold import (Chart, assemble_A, check_invertible, fermi_project, orthogonal_complement,
                                  ortho_residuals, tangent_basis)
from spde_reduce.models import allen_cahn, swift_hohenberg_chart


def _fd_kink(grid):
    x = grid.x
    return Chart(grid, 1, lambda h: np.tanh((x - h[..., :1]) / np.sqrt(2)), domain=([0], [grid.x_max]))


def test_fd_derivatives_match_analytic():
    preset = allen_cahn(n_points=401)
    fd = _fd_kink(preset.problem.grid)
    h = np.array([9.3])
    assert fd.derivative_mode == "finite-difference"
    assert preset.chart.derivative_mode == "analytic"
    assert np.allclose(fd.tangents(h), preset.chart.tangents(h), atol=1e-6)
    assert np.allclose(fd.second(h), preset.chart.second(h), atol=1e-4)
    assert np.allclose(fd.third(h), preset.chart.third(h), atol=1e-3)


def test_fd_batched_shapes():
    grid = Grid1D(0, 2 * np.pi, 32, "periodic")
    x = grid.x
    chart = Chart(grid, 2, lambda p: p[..., :1] * np.cos(x - p[..., 1:2]))
    h = np.ones((5, 2))
    assert chart.tangents(h).shape == (5, 2, 32)
    assert chart.second(h).shape == (5, 2, 2, 32)
    assert chart.third(h).shape == (5, 2, 2, 2, 32)


def test_two_parameter_stripe_chart_against_fd():
    grid = Grid1D(0, 2 * np.pi, 64, "periodic")
    exact = swift_hohenberg_chart(grid, phase=None)
    fd = Chart(grid, 2, exact.values)
    p = np.array([0.3, 0.7])
    assert np.allclose(fd.tangents(p), exact.tangents(p), atol=1e-7)
    assert np.allclose(fd.second(p), exact.second(p), atol=1e-5)
    assert np.allclose(fd.third(p), exact.third(p), atol=1e-4)
    # Gram matrix of (cos, h sin) is diag(pi, pi h^2)
    G = gram_matrix(exact.tangents(p), grid)
    assert np.allclose(G, np.diag([np.pi, np.pi * 0.09]), atol=1e-12)


def test_A_reduces_to_gram_at_v0():
    preset = allen_cahn(n_points=401)
    h = np.array([10.0])
    A = assemble_A(preset.chart, h, np.zeros(401))
    assert A[0, 0] == pytest.approx(2 * np.sqrt(2) / 3, rel=1e-8)


def test_fermi_project_recovers_coordinates():
    preset = allen_cahn(n_points=401)
    chart = preset.chart
    h_true = np.array([9.0])
    bump = np.exp(-((chart.grid.x - 9.0) ** 2))
    v = 0.01 * orthogonal_complement(chart, h_true, bump * (chart.grid.x - 9.0) ** 2)
    fp = fermi_project(chart, chart.values(h_true) + v, [8.0])
    assert fp.h[0] == pytest.approx(9.0, abs=1e-6)
    assert fp.max_residual <= 1e-8


def test_orthogonal_complement_is_orthogonal():
    preset = allen_cahn(n_points=401)
    w = np.sin(preset.chart.grid.x)
    r = orthogonal_complement(preset.chart, [7.0], w)
    assert np.max(np.abs(ortho_residuals(preset.chart, [7.0], r))) < 1e-12


def test_degenerate_tangent_raises():
    grid = Grid1D(0, 1, 33)
    chart = Chart(grid, 1, lambda h: 0 * h[..., :1] + np.sin(np.pi * grid.x))
    with pytest.raises(DegeneracyError):
        tangent_basis(chart, [0.1])


def test_check_invertible():
    assert check_invertible(np.eye(2)).ok
    with pytest.raises(DegeneracyError):
        check_invertible(np.array([[1.0, 1.0], [1.0, 1.0]]))


def test_projection_failure_is_tube_exit():
    grid = Grid1D(0, 1, 33)
    x = grid.x
    chart = Chart(grid, 1, lambda h: np.sin(np.pi * x * h[..., :1]), domain=([0.5], [1.5]))
    with pytest.raises((OutOfTubeError, DegeneracyError)):
        fermi_project(chart, np.sin(7 * np.pi * x) * 5, [1.0], max_iter=3)
