import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvlab.fields import (
    Grid3, TensorField, WeightedNormSpec, fd_derivative, fd_second_derivative,
    integrate_scalar, lebesgue_norm, weighted_sobolev_norm,
)
from curvlab.catalog import minkowski_slice

from conftest import measured_order


def flat_volume(grid):
    return TensorField.from_function(grid, lambda X, Y, Z: np.ones_like(X))


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid3((4, 16, 16), 0.1)
    with pytest.raises(ValueError):
        Grid3((16, 16, 16), -0.1)
    with pytest.raises(ValueError):
        Grid3((16, 16, 16), 0.1, boundary="open")


def test_derivative_of_constant_is_zero():
    g = Grid3((16, 16, 16), 0.3)
    f = TensorField.from_function(g, lambda X, Y, Z: 3.7 * np.ones_like(X))
    for axis in range(3):
        # roundoff floor only (stencil weights cancel up to fp association)
        assert np.max(np.abs(fd_derivative(f, axis).data)) < 1e-14


def test_derivative_linear_field_interior():
    g = Grid3((16, 16, 16), 1.0 / 15, boundary="asymptotic-dirichlet")
    f = TensorField.from_function(g, lambda X, Y, Z: X)
    df = fd_derivative(f, 0, order=4)
    assert np.max(np.abs(df.data - 1.0)) < 1e-12


@pytest.mark.parametrize("order,expected", [(2, 2.0), (4, 4.0)])
def test_derivative_convergence_order(order, expected):
    errs, hs = [], []
    for n in (32, 64):
        g = Grid3((n, 8, 8), 2 * np.pi / n)
        f = TensorField.from_function(g, lambda X, Y, Z: np.sin(X))
        df = fd_derivative(f, 0, order=order)
        X, _, _ = g.meshgrid()
        errs.append(np.max(np.abs(df.data - np.cos(X))))
        hs.append(g.spacing)
    assert measured_order(errs[0], errs[1], hs[0], hs[1]) >= expected - 0.2


def test_second_derivative_compact():
    g = Grid3((48, 8, 8), 2 * np.pi / 48)
    f = TensorField.from_function(g, lambda X, Y, Z: np.sin(X))
    d2 = fd_second_derivative(f, 0, order=2)
    X, _, _ = g.meshgrid()
    assert np.max(np.abs(d2.data + np.sin(X))) < 5e-3


def test_integrate_flat_volume_exact():
    g = Grid3((16, 16, 16), 2 * np.pi / 16)
    one = flat_volume(g)
    assert abs(integrate_scalar(one, one) - (2 * np.pi) ** 3) < 1e-12 * (2 * np.pi) ** 3


def test_integrate_sin_squared():
    g = Grid3((16, 16, 16), 2 * np.pi / 16)
    f = TensorField.from_function(g, lambda X, Y, Z: np.sin(X) ** 2)
    val = integrate_scalar(f, flat_volume(g))
    assert abs(val - 0.5 * (2 * np.pi) ** 3) < 1e-10


def test_integrate_rejects_negative_volume():
    g = Grid3((16, 16, 16), 0.1)
    f = flat_volume(g)
    bad = TensorField.from_function(g, lambda X, Y, Z: -np.ones_like(X))
    with pytest.raises(ValueError, match="not Riemannian"):
        integrate_scalar(f, bad)


def test_lebesgue_norms(flat_metric_32, periodic_grid_32):
    g = periodic_grid_32
    zero = TensorField.zeros(g, 1)
    assert lebesgue_norm(zero, 2, flat_metric_32.field) == 0.0
    const = TensorField.from_function(g, lambda X, Y, Z: -2.5 * np.ones_like(X))
    assert abs(lebesgue_norm(const, np.inf, flat_metric_32.field) - 2.5) < 1e-13
    # unit covector: |F| = 1 everywhere, p=2 norm = vol^(1/2) = (2 pi)^(3/2)
    unit = TensorField.zeros(g, 1)
    unit.data[..., 0] = 1.0
    val = lebesgue_norm(unit, 2, flat_metric_32.field)
    assert abs(val - (2 * np.pi) ** 1.5) < 1e-10


def test_lebesgue_rejects_non_spd(periodic_grid_32):
    g = periodic_grid_32
    bad = TensorField(g, 2, np.tile(-np.eye(3), tuple(g.extents) + (1, 1)), "symmetric")
    f = TensorField.zeros(g, 0)
    with pytest.raises(ValueError):
        lebesgue_norm(f, 2, bad)


@settings(max_examples=20, deadline=None)
@given(c=st.floats(-1e3, 1e3, allow_nan=False))
def test_norm_absolute_homogeneity(c):
    g = Grid3((8, 8, 8), 0.5)
    m, _, _ = minkowski_slice(g)
    rng = np.random.default_rng(42)
    f = TensorField(g, 1, rng.normal(size=tuple(g.extents) + (3,)))
    n1 = lebesgue_norm(f * c, 2, m.field)
    n2 = abs(c) * lebesgue_norm(f, 2, m.field)
    assert abs(n1 - n2) <= 1e-13 * max(n2, 1.0)


def test_fd_linearity():
    g = Grid3((16, 16, 16), 0.37)
    rng = np.random.default_rng(0)
    a = TensorField(g, 0, rng.normal(size=tuple(g.extents)))
    b = TensorField(g, 0, rng.normal(size=tuple(g.extents)))
    lhs = fd_derivative(a + 3.0 * b, 1)
    rhs = fd_derivative(a, 1) + 3.0 * fd_derivative(b, 1)
    assert np.max(np.abs(lhs.data - rhs.data)) < 1e-13 * np.max(np.abs(rhs.data) + 1)


def test_weighted_sobolev_norm_basics():
    g = Grid3((16, 16, 16), 1.0 / 15, boundary="asymptotic-dirichlet")
    m, _, _ = minkowski_slice(g)
    zero = TensorField.zeros(g, 0)
    assert weighted_sobolev_norm(zero, WeightedNormSpec(1, 0.0, (0.5, 0.5, 0.5)), m) == 0.0
    one = TensorField.from_function(g, lambda X, Y, Z: np.ones_like(X))
    # n=0, s=1: (int (1+d0^2) dmu)^(1/2) by direct quadrature
    d0sq = g.distance_to((0.5, 0.5, 0.5)) ** 2
    expect = np.sqrt(np.sum((1 + d0sq)) * g.cell_volume)
    got = weighted_sobolev_norm(one, WeightedNormSpec(0, 1.0, (0.5, 0.5, 0.5)), m)
    assert abs(got - expect) < 1e-12 * expect
    # s=0, n=0 reduces to the plain L2 norm (weight exponent s+i = 0)
    l2 = weighted_sobolev_norm(one, WeightedNormSpec(0, 0.0, (0.5, 0.5, 0.5)), m)
    assert abs(l2 - np.sqrt(g.npoints * g.cell_volume)) < 1e-12
    # constant field: n=1 equals n=0 (gradient term vanishes)
    got1 = weighted_sobolev_norm(one, WeightedNormSpec(1, 1.0, (0.5, 0.5, 0.5)), m)
    assert abs(got1 - got) < 1e-12 * expect


def test_weighted_norm_rejects_high_order():
    with pytest.raises(ValueError):
        WeightedNormSpec(4, 1.0)


def test_serialization_roundtrip_binary_and_json():
    g = Grid3((8, 8, 8), 0.25, origin=(1.0, -2.0, 0.5), boundary="asymptotic-dirichlet")
    rng = np.random.default_rng(3)
    sym = rng.normal(size=tuple(g.extents) + (3, 3))
    sym = 0.5 * (sym + np.swapaxes(sym, -1, -2))
    f = TensorField(g, 2, sym, "symmetric")
    assert TensorField.from_bytes(f.to_bytes()) == f
    assert TensorField.from_json(f.to_json()) == f
    v = TensorField(g, 1, rng.normal(size=tuple(g.extents) + (3,)))
    assert TensorField.from_bytes(v.to_bytes()) == v


def test_symmetry_validation():
    g = Grid3((8, 8, 8), 0.25)
    bad = np.zeros(tuple(g.extents) + (3, 3))
    bad[..., 0, 1] = 1.0
    with pytest.raises(ValueError, match="symmetry"):
        TensorField(g, 2, bad, "symmetric", check=True)


def test_stencil_too_small():
    g = Grid3((8, 8, 8), 0.1)
    f = TensorField.zeros(g, 0)
    with pytest.raises(ValueError, match="direction"):
        fd_derivative(f, 5)
