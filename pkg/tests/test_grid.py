import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from thetamfg.grid import (
    Grid,
    divergence,
    forward_gradient,
    gradient,
    laplacian,
    lipschitz_seminorm,
    norm_inf_1,
    read_field_csv,
    reconstruct,
    restrict,
    write_field_csv,
)


def test_grid_invariants():
    g = Grid(d=2, N=8, T=10)
    assert g.h * g.N == 1.0
    assert g.dt * g.T == 1.0
    assert g.n_nodes == 64
    assert g.coords.shape == (2, 8, 8)
    assert np.isclose(g.uniform().sum(), 1.0)


@pytest.mark.parametrize(
    "kwargs",
    [dict(d=0, N=8, T=4), dict(d=4, N=8, T=4), dict(d=1, N=1, T=4), dict(d=1, N=8, T=1), dict(d=1, N=8, T=4, theta=1.5),
     dict(d=1, N=8, T=4, sigma=0.0)],
)
def test_grid_rejects_bad_parameters(kwargs):
    with pytest.raises(ValueError):
        Grid(**kwargs)


def test_laplacian_constant_is_zero():
    assert np.all(laplacian(np.full((5, 5), 3.0), 0.2) == 0)


def test_laplacian_indicator():
    f = np.array([1.0, 0, 0, 0])
    assert np.allclose(laplacian(f, 0.25), [-32, 16, 0, 16])


def test_laplacian_cosine_eigenfield():
    N = 16
    h = 1 / N
    x = np.arange(N) * h
    f = np.cos(2 * np.pi * x)
    expected = -(2 / h**2) * (1 - np.cos(2 * np.pi * h)) * f
    assert np.allclose(laplacian(f, h), expected, atol=1e-11)


def test_gradient_indicator_and_sine():
    assert np.allclose(gradient(np.array([1.0, 0, 0, 0]), 0.25)[0], [0, -2, 0, 2])
    N = 32
    h = 1 / N
    x = np.arange(N) * h
    assert np.allclose(gradient(np.sin(2 * np.pi * x), h)[0], np.sin(2 * np.pi * h) / h * np.cos(2 * np.pi * x))
    assert np.all(gradient(np.full((4, 4), 2.0), 0.25) == 0)


def test_forward_gradient_indicator():
    assert np.allclose(forward_gradient(np.array([1.0, 0, 0, 0]), 0.25)[0], [-4, 0, 0, 4])


def test_divergence_matches_gradient_in_1d(rng):
    w = rng.normal(size=(1, 9))
    assert np.array_equal(divergence(w, 1 / 9), gradient(w[0], 1 / 9)[0])
    assert np.all(divergence(np.ones((2, 4, 4)), 0.25) == 0)


@pytest.mark.parametrize("d", [1, 2])
def test_summation_by_parts(rng, d):
    N = 7
    h = 1 / N
    shape = (N,) * d
    for _ in range(20):
        mu, nu = rng.normal(size=shape), rng.normal(size=shape)
        w = rng.normal(size=(d,) + shape)
        lhs = -np.sum(mu * divergence(w, h))
        rhs = np.sum(gradient(mu, h) * w)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs), np.sum(np.abs(gradient(mu, h) * w)))
        lhs2 = -np.sum(nu * laplacian(mu, h))
        rhs2 = np.sum(forward_gradient(nu, h) * forward_gradient(mu, h))
        assert abs(lhs2 - rhs2) <= 1e-12 * max(1.0, np.sum(np.abs(forward_gradient(nu, h) * forward_gradient(mu, h))))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (6, 6), elements=st.floats(-1e3, 1e3)))
def test_gradient_norm_bounded_by_forward_gradient(f):
    h = 1 / 6
    assert np.sum(gradient(f, h) ** 2) <= np.sum(forward_gradient(f, h) ** 2) * (1 + 1e-12) + 1e-9


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (5, 5), elements=st.floats(-10, 10)), arrays(np.float64, (5, 5), elements=st.floats(-10, 10)))
def test_laplacian_is_symmetric(f, g):
    a = np.sum(laplacian(f, 0.2) * g)
    b = np.sum(f * laplacian(g, 0.2))
    assert abs(a - b) <= 1e-12 * max(1.0, np.sum(np.abs(laplacian(f, 0.2) * g)))


@pytest.mark.parametrize("op", [laplacian, gradient, forward_gradient])
def test_operators_commute_with_translation(rng, op):
    f = rng.normal(size=(6, 6))
    shifted = np.roll(f, (2, -1), axis=(0, 1))
    out = op(shifted, 1 / 6)
    ref = op(f, 1 / 6)
    axes = (0, 1) if out.ndim == 2 else (1, 2)
    assert np.allclose(out, np.roll(ref, (2, -1), axis=axes))


def test_restrict_constant_and_linear():
    g = Grid(d=2, N=4, T=2)
    assert np.allclose(restrict(lambda x: np.ones(x.shape[1:]), g), g.cell_volume)
    g1 = Grid(d=1, N=4, T=2)
    cells = restrict(lambda x: x[0], g1)
    # interior cells integrate y over a window symmetric about the node
    assert np.allclose(cells[1:], g1.coords[0, 1:] * g1.h)


def test_restrict_of_uniform_density_is_probability():
    g = Grid(d=2, N=8, T=2)
    m = restrict(lambda x: np.ones(x.shape[1:]), g)
    assert np.all(m >= 0) and np.isclose(m.sum(), 1.0)


def test_reconstruct_roundtrip(rng):
    g = Grid(d=2, N=6, T=2)
    m = rng.random(g.shape)
    assert np.allclose(restrict(reconstruct(m, g), g), m, atol=1e-15)
    assert np.allclose(reconstruct(g.uniform(), g)(rng.random((2, 50))), 1.0)


def test_reconstruct_l2_isometry(rng):
    g = Grid(d=1, N=10, T=2)
    m1, m2 = rng.random(g.shape), rng.random(g.shape)
    # piecewise constant: the L2 norm is exact with one sample per cell
    diff = reconstruct(m1, g)(g.coords) - reconstruct(m2, g)(g.coords)
    l2 = np.sqrt(np.sum(diff**2) * g.cell_volume)
    assert np.isclose(l2, g.h ** (-g.d / 2) * np.linalg.norm(m1 - m2))


def test_norms_and_seminorm():
    m = np.array([[0.5, -0.5], [0.1, 0.2]])
    assert norm_inf_1(m) == 1.0
    assert np.isclose(lipschitz_seminorm(np.array([0.0, 1.0, 0.0, 1.0]), 0.25), 4.0)


def test_field_csv_roundtrip(tmp_path, rng):
    field = rng.normal(size=(3, 4, 4))
    path = tmp_path / "f.csv"
    write_field_csv(path, field, d=2)
    assert path.read_text().splitlines()[0] == "t,i0,i1,value"
    assert np.array_equal(read_field_csv(path), field)
